"""krmap: supervised 2D projection of high-dimensional embeddings with an
adaptive kernel-regression estimate of a per-instance metric, plus contour
rendering, baselines, and a read-only exploration API."""

from .bench import error_metrics, pca_project, run_benchmark, trustworthiness
from .contour import (
    ContourGrid,
    Projection2D,
    cutoff_mask,
    grid_eval,
    model_estimator,
    normalize_projection,
    rbf_estimator,
    sample_points,
)
from .dataio import Dataset, load_checkpoint, load_dataset, make_dataset, save_checkpoint, save_dataset
from .kernels import (
    BandwidthSelection,
    KernelParams,
    alb_bandwidths,
    gaussian_rbf,
    generalized_kernel,
    loocv_bandwidth,
    silverman_bandwidth,
)
from .losses import (
    AffinityMatrices,
    LossBreakdown,
    kl_neighborhood,
    nw_estimate,
    total_loss,
)
from .model import ModelState, forward, init_model
from .trainer import TrainConfig, TrainHistory, compute_gradients, grad_check, split_epoch, train

__version__ = "0.1.0"
