"""Command-line entry point.

Exit codes: 0 ok, 2 usage, 3 data error, 4 training divergence,
5 internal. Module errors print a machine-readable line to stderr:
``error[<code>]: <message>``.
"""

import functools
import json
import sys

import click

from . import bench, contour, dataio, trainer
from .errors import KrmapError


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KrmapError as exc:
            click.echo(f"error[{exc.code}]: {exc}", err=True)
            sys.exit(exc.exit_code)
        except OSError as exc:
            click.echo(f"error[io]: {exc}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
def main():
    """Metric-landscape projection and contour mapping."""


def _train_options(fn):
    options = [
        click.option("--epochs", default=20, show_default=True),
        click.option("--batch", default=1000, show_default=True),
        click.option("--lr", default=0.002, show_default=True),
        click.option("--lambda", "lambda_", default=0.125, show_default=True),
        click.option("--w1", default=1.0, show_default=True),
        click.option("--w2", default=0.3, show_default=True),
        click.option("--seed", default=42, show_default=True),
        click.option("--no-kr", is_flag=True, help="Drop the regression loss (neighborhood-only)."),
        click.option("--fixed-kernel", is_flag=True, help="Freeze the kernel at the plain t-kernel."),
        click.option("--balance", type=click.Choice(["none", "l1", "l2"]), default="none", show_default=True),
        click.option("--mu", default=2.0, show_default=True),
        click.option("--mu1", default=1.0, show_default=True),
        click.option("--k", default=1.0, show_default=True),
        click.option("--deterministic", is_flag=True, help="Single-threaded fixed-order reductions."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _limit_threads():
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1)
    except ImportError:
        pass


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_train_options
@_guarded
def train(data, out, epochs, batch, lr, lambda_, w1, w2, seed, no_kr, fixed_kernel, balance, mu, mu1, k, deterministic):
    """Fit the projection and kernel; write a checkpoint and history."""
    if deterministic:
        _limit_threads()
    ds = dataio.load_dataset(data)
    cfg = trainer.TrainConfig(
        epochs=epochs,
        batch=batch,
        lr=lr,
        lambda_=lambda_,
        w1=w1,
        w2=w2,
        seed=seed,
        ablate_kr=no_kr,
        ablate_gk=fixed_kernel,
        balance=balance,
        mu=mu,
        mu1=mu1,
        k=k,
        deterministic=deterministic,
    )
    st, history = trainer.train(ds, cfg)
    dataio.save_checkpoint(st, out)
    with open(f"{out}.history.json", "w") as fh:
        json.dump(history.to_dicts(), fh, indent=2)
        fh.write("\n")
    click.echo(f"checkpoint written to {out}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_guarded
def project(model_path, data, out):
    """Write id,x,y,score rows of the normalized projection."""
    ds = dataio.load_dataset(data)
    st = dataio.load_checkpoint(model_path, expect_d=ds.d)
    st.mode = "inference"
    _, proj = contour.model_estimator(st, ds.X, ds.s)
    with open(out, "w") as fh:
        fh.write("id,x,y,score\n")
        for i in range(ds.n):
            x, y = (float(v) for v in proj.normalized[i])
            fh.write(f"{ds.row_id(i)},{x!r},{y!r},{float(ds.s[i])!r}\n")
    click.echo(f"projection written to {out}")


@main.command("contour")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--grid", default=contour.DEFAULT_GRID, show_default=True)
@click.option("--bbox", default="0,1,0,1", show_default=True, help="xmin,xmax,ymin,ymax")
@click.option("--tau", default=contour.DEFAULT_TAU, show_default=True)
@click.option("--image", type=click.Path(), default=None, help="Optional PPM raster path.")
@_guarded
def contour_cmd(model_path, data, out, grid, bbox, tau, image):
    """Evaluate a contour grid and export it as JSON (optionally PPM)."""
    ds = dataio.load_dataset(data)
    st = dataio.load_checkpoint(model_path, expect_d=ds.d)
    st.mode = "inference"
    est, _ = contour.model_estimator(st, ds.X, ds.s)
    parts = [float(v) for v in bbox.split(",")]
    if len(parts) != 4:
        raise click.UsageError("--bbox expects xmin,xmax,ymin,ymax")
    g = contour.grid_eval(est, tuple(parts), grid, grid)
    g = contour.cutoff_mask(g, est.anchors_norm, tau)
    with open(out, "w") as fh:
        json.dump(contour.grid_to_dict(g), fh)
        fh.write("\n")
    if image:
        contour.write_ppm(g, image)
    click.echo(f"grid written to {out}")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--test", "test_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_guarded
def eval_cmd(model_path, train_path, test_path, out):
    """Report mapping errors and trustworthiness for one checkpoint."""
    train_ds = dataio.load_dataset(train_path)
    test_ds = dataio.load_dataset(test_path)
    st = dataio.load_checkpoint(model_path, expect_d=train_ds.d)
    st.mode = "inference"
    report = bench.evaluate_model(st, train_ds, test_ds)
    if out.endswith(".json"):
        bench.write_report_json([report], out)
    else:
        bench.write_report_csv([report], out)
    click.echo(f"report written to {out}")


@main.command("bench")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--test", "test_path", required=True, type=click.Path(exists=True))
@click.option("--methods", default="akrmap,akrmap_no_kr,akrmap_no_gk,pca_rbf_silverman", show_default=True)
@click.option("--seeds", default=1, show_default=True, help="Number of seeds (0..K-1).")
@click.option("--out", required=True, type=click.Path())
@_guarded
def bench_cmd(data, test_path, methods, seeds, out):
    """Run the full method-comparison table."""
    train_ds = dataio.load_dataset(data)
    test_ds = dataio.load_dataset(test_path)
    method_list = [m.strip() for m in methods.split(",") if m.strip()]
    reports = bench.run_benchmark(
        train_ds, test_ds, methods=method_list, seeds=tuple(range(seeds))
    )
    if out.endswith(".json"):
        bench.write_report_json(reports, out)
    else:
        bench.write_report_csv(reports, out)
    click.echo(f"report written to {out}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@_guarded
def serve(model_path, data, port, host):
    """Serve the explorer API over the frozen model and dataset."""
    from . import server as server_mod

    ds = dataio.load_dataset(data)
    st = dataio.load_checkpoint(model_path, expect_d=ds.d)
    st.mode = "inference"
    server_mod.serve(st, ds, host=host, port=port)


if __name__ == "__main__":
    main()
