# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from deltavae.training.objective import (ElboBreakdown, FreeBitsGranularity,
                                         ObjectiveCfg, ObjectiveMode, elbo)
from deltavae.training.probe import linear_probe
from deltavae.training.record import RunRecord, SplitEvaluation, StepMetrics
from deltavae.training.run_config import (RunConfig, TrainConfig,
                                          load_run_config)
from deltavae.training.sweep import (SweepGrid, SweepMethod, ThreadMode,
                                     rate_distortion_sweep)
from deltavae.training.trainer import train, train_model

__all__ = [
    "ElboBreakdown",
    "FreeBitsGranularity",
    "ObjectiveCfg",
    "ObjectiveMode",
    "RunConfig",
    "RunRecord",
    "SplitEvaluation",
    "StepMetrics",
    "SweepGrid",
    "SweepMethod",
    "ThreadMode",
    "TrainConfig",
    "elbo",
    "linear_probe",
    "load_run_config",
    "rate_distortion_sweep",
    "train",
    "train_model",
]
