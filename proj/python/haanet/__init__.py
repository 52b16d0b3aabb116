"""Haze-aware attention dehazing network: Python bindings over the C++ core."""

from ._core import (
    CheckpointError,
    ConfigError,
    ImageIoError,
    NetConfig,
    Network,
    ShapeError,
    cosine_lr,
    evaluate,
    generate_pair,
    gradcheck,
    invert_exact,
    load_ppm,
    parse_train_config,
    psnr,
    save_ppm,
    ssim,
    synth,
    train,
    transmission,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ImageIoError",
    "NetConfig",
    "Network",
    "ShapeError",
    "cosine_lr",
    "evaluate",
    "generate_pair",
    "gradcheck",
    "invert_exact",
    "load_ppm",
    "parse_train_config",
    "psnr",
    "save_ppm",
    "ssim",
    "synth",
    "train",
    "transmission",
]
