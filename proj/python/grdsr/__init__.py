"""Guided unsupervised super-resolution: Python bindings to the C++ core."""

from ._grdsr import (
    CascadePlan,
    ConfigError,
    DataError,
    Network,
    NumericalError,
    blur,
    blur_adjoint,
    build_network,
    degrade,
    gaussian_kernel,
    generate_phantom,
    ibp_refine,
    load_network,
    method_label,
    plan_stages,
    psnr,
    read_volume,
    resize_bicubic,
    run_experiment,
    sigma_for_cascade_stage,
    sigma_for_test_degradation,
    ssim,
    write_volume,
)

__all__ = [name for name in dir() if not name.startswith("_")]
