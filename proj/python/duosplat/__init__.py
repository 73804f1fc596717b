# Copyright Contributors to the duosplat project
# SPDX-License-Identifier: Apache-2.0

"""Two-image human Gaussian reconstruction.

Thin wrappers over the C++ core. Images are float64 arrays of shape (h, w, 3) in [0, 1],
masks are (h, w) arrays, Gaussian sets are dicts of arrays with keys mu, color, opacity,
scale, quat.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    DivergenceError,
    FingerprintMismatch,
    InvalidInput,
    IoError,
    Model,
    make_dataset,
    nns_color_transfer,
    psnr,
    read_gaussian_ply,
    ssim,
    write_gaussian_ply,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "FingerprintMismatch",
    "InvalidInput",
    "IoError",
    "Model",
    "make_dataset",
    "nns_color_transfer",
    "psnr",
    "read_gaussian_ply",
    "render",
    "ring_camera",
    "ssim",
    "train_stage1",
    "train_stage2",
    "view_camera",
    "write_gaussian_ply",
]


def ring_camera(azimuth, resolution):
    """Camera on the default capture ring in world coordinates, as a dict."""
    return json.loads(_core.ring_camera(float(azimuth), int(resolution)))


def view_camera(azimuth, resolution):
    """Ring camera expressed in the front input camera frame; use it to view predictions."""
    return json.loads(_core.view_camera(float(azimuth), int(resolution)))


def render(gaussians, camera, background=(0.0, 0.0, 0.0)):
    """Returns (image, alpha) for a Gaussian dict seen from a camera dict."""
    cam = camera if isinstance(camera, str) else json.dumps(camera)
    return _core.render(gaussians, cam, tuple(float(v) for v in background))


def train_stage1(data, checkpoint, config=None):
    """Trains stage 1 on a dataset directory; config is a dict of Stage1Config fields."""
    return _core.train_stage1(str(data), str(checkpoint), json.dumps(config or {}))


def train_stage2(data, stage1, checkpoint, config=None):
    """Trains stage 2 against a stage-1 checkpoint; config is a dict of Stage2Config fields."""
    return _core.train_stage2(str(data), str(stage1), str(checkpoint), json.dumps(config or {}))
