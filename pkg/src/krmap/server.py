"""Read-only HTTP API over a frozen model + dataset.

All state is computed once at startup (projection, normalization, contour
estimator); every handler is a pure function of the request, so repeated
identical requests return identical bodies and requests may be served
concurrently.
"""

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import contour
from .dataio import Dataset
from .errors import InvalidCountError, KrmapError
from .model import ModelState

MAX_GRID_CELLS = 1_000_000


class Explorable:
    """Immutable bundle the handlers read from."""

    def __init__(self, st: ModelState, ds: Dataset):
        self.estimator, self.projection = contour.model_estimator(st, ds.X, ds.s)
        self.points = self.projection.normalized
        self.scores = ds.s.astype(np.float64)
        self.ids = [ds.row_id(i) for i in range(ds.n)]
        self.meta = ds.meta
        self.id_index = {pid: i for i, pid in enumerate(self.ids)}
        self.n = ds.n
        self.d = ds.d
        self.score_min = float(self.scores.min())
        self.score_max = float(self.scores.max())


def create_app(st: ModelState, ds: Dataset) -> FastAPI:
    state = Explorable(st, ds)
    app = FastAPI(title="krmap explorer API")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_query(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed query"})

    @app.exception_handler(KrmapError)
    async def module_error(request: Request, exc: KrmapError):
        return JSONResponse(status_code=400, content={"error": exc.code, "message": str(exc)})

    @app.get("/meta")
    def meta():
        return {
            "n": state.n,
            "d": state.d,
            "score_min": state.score_min,
            "score_max": state.score_max,
            "bbox": [0.0, 1.0, 0.0, 1.0],
            "diverging": state.score_min < 0.0 < state.score_max,
        }

    def _bbox_or_response(xmin, xmax, ymin, ymax):
        if not all(np.isfinite([xmin, xmax, ymin, ymax])):
            return None, JSONResponse(status_code=400, content={"error": "malformed query"})
        if xmin >= xmax or ymin >= ymax:
            return None, JSONResponse(
                status_code=422, content={"error": "invalid bbox: min >= max"}
            )
        return (xmin, xmax, ymin, ymax), None

    @app.get("/contour")
    def contour_grid(xmin: float, xmax: float, ymin: float, ymax: float, nw: int, nh: int):
        bbox, err = _bbox_or_response(xmin, xmax, ymin, ymax)
        if err is not None:
            return err
        if nw < 2 or nh < 2:
            return JSONResponse(
                status_code=400, content={"error": "grid resolution must be >= 2"}
            )
        if nw * nh > MAX_GRID_CELLS:
            return JSONResponse(
                status_code=413,
                content={"error": f"grid exceeds {MAX_GRID_CELLS} cells"},
            )
        grid = contour.grid_eval(state.estimator, bbox, nw, nh)
        grid = contour.cutoff_mask(grid, state.estimator.anchors_norm)
        return contour.grid_to_dict(grid)

    @app.get("/points")
    def points(
        method: str,
        xmin: float,
        xmax: float,
        ymin: float,
        ymax: float,
        count: int | None = None,
        radius: float | None = None,
        seed: int = 0,
    ):
        bbox, err = _bbox_or_response(xmin, xmax, ymin, ymax)
        if err is not None:
            return err
        if method not in ("random", "poisson"):
            return JSONResponse(status_code=400, content={"error": "unknown sampling method"})
        pts = state.points
        inside = np.flatnonzero(
            (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
        )
        if method == "random":
            if count is None:
                return JSONResponse(status_code=400, content={"error": "random sampling needs count"})
            if count > inside.size:
                raise InvalidCountError(f"count {count} exceeds {inside.size} points in bbox")
            chosen = contour.sample_points(pts[inside], "random", count=count, seed=seed)
        else:
            if radius is None:
                return JSONResponse(status_code=400, content={"error": "poisson sampling needs radius"})
            chosen = contour.sample_points(pts[inside], "poisson", radius=radius, seed=seed)
        result = []
        for i in inside[chosen]:
            result.append(
                {
                    "id": state.ids[i],
                    "x": float(pts[i, 0]),
                    "y": float(pts[i, 1]),
                    "score": float(state.scores[i]),
                }
            )
        return result

    @app.get("/point/{point_id}")
    def point(point_id: str):
        i = state.id_index.get(point_id)
        if i is None:
            return JSONResponse(status_code=404, content={"error": "unknown id"})
        return {
            "id": state.ids[i],
            "x": float(state.points[i, 0]),
            "y": float(state.points[i, 1]),
            "score": float(state.scores[i]),
            "meta": state.meta[i] if state.meta is not None else "",
        }

    return app


def serve(st: ModelState, ds: Dataset, host: str = "127.0.0.1", port: int = 8000):
    import uvicorn

    uvicorn.run(create_app(st, ds), host=host, port=port, log_level="warning")
