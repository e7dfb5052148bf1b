# Copyright 2026 The MoFlow Workbench Authors
# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the MoFlow C++ core."""

import json

from ._moflow import (
    ConfigError,
    DatasetError,
    Model,
    MoflowError,
    RunConfig,
    Scene,
    ShapeError,
    chamfer,
    generate_synthetic,
    joint_ade_fde,
    load_config,
    load_model,
    mask_threshold,
    min_ade,
    min_fde,
    plot,
    read_scenes,
    time_map,
)
from . import _moflow

__all__ = [
    "ConfigError", "DatasetError", "Model", "MoflowError", "RunConfig", "Scene", "ShapeError",
    "chamfer", "distill", "evaluate", "gen_data", "generate_synthetic", "joint_ade_fde",
    "load_config", "load_model", "mask_threshold", "min_ade", "min_fde", "plot", "read_scenes",
    "sample", "time_map", "train_teacher",
]


def gen_data(config):
    _moflow._gen_data(config)


def train_teacher(config):
    """Returns the number of log records written."""
    return _moflow._train_teacher(config)


def sample(config, checkpoint=None, split="train"):
    return json.loads(_moflow._sample(config, checkpoint, split))


def distill(config):
    return json.loads(_moflow._distill(config))


def evaluate(config, checkpoint, split="test"):
    return json.loads(_moflow._evaluate(config, checkpoint, split))
