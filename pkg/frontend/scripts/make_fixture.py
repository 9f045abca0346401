"""Build the small model+dataset fixture the live explorer test serves."""

import pathlib
import sys

from krmap.bench import synthetic_task
from krmap.dataio import save_checkpoint, save_dataset
from krmap.trainer import TrainConfig, train

out_dir = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".fixture")
out_dir.mkdir(parents=True, exist_ok=True)

train_ds, _ = synthetic_task(n_train=300, n_test=40, d=6, seed=5)
model, _ = train(train_ds, TrainConfig(epochs=2, batch=100, seed=0))
save_dataset(train_ds, out_dir / "data.bin")
save_checkpoint(model, out_dir / "model.ckpt")
print(f"fixture written to {out_dir}")
