# SPDX-FileCopyrightText: 2026 The PointForge Authors
# SPDX-License-Identifier: Apache-2.0

"""Point-cloud building segmentation: geometry kernels, metrics, synthetic data and training."""

from ._pointforge import (
    Error,
    FormatError,
    ParseError,
    ball_query,
    config_keys,
    farthest_point_sampling,
    generate_dataset,
    harmonic_mean,
    knn,
    load_dataset,
    load_point_cloud,
    overall_accuracy,
    part_iou,
    predict,
    shape_iou,
    test_subclouds,
    train,
    voxel_cells,
)

__all__ = [
    "Error",
    "FormatError",
    "ParseError",
    "ball_query",
    "config_keys",
    "farthest_point_sampling",
    "generate_dataset",
    "harmonic_mean",
    "knn",
    "load_dataset",
    "load_point_cloud",
    "overall_accuracy",
    "part_iou",
    "predict",
    "shape_iou",
    "test_subclouds",
    "train",
    "voxel_cells",
]
