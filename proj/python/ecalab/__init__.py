"""Python bindings for the ecalab C++ core."""

from ._core import (
    __version__,
    canonical,
    compression_complexity,
    config_template,
    evolve,
    krylov,
    linear_cka,
    load_checkpoint_info,
    load_dataset_info,
    lyapunov,
    lz76,
    mds_embed,
    pearson,
    pretrain_windows,
    report,
    step,
    symmetry_classes,
    wolfram_class,
)

__all__ = [
    "__version__",
    "canonical",
    "compression_complexity",
    "config_template",
    "evolve",
    "krylov",
    "linear_cka",
    "load_checkpoint_info",
    "load_dataset_info",
    "lyapunov",
    "lz76",
    "mds_embed",
    "pearson",
    "pretrain_windows",
    "report",
    "step",
    "symmetry_classes",
    "wolfram_class",
]
