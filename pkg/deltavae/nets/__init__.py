# Copyright 2023 The Chromium Authors
# Use of this source code is governed by a BSD-style license that can be
# found in the LICENSE file.

from deltavae.nets.aux_prior import (AuxPrior, aux_log_prob, fit_aux_prior,
                                     fit_aux_prior_moments)
from deltavae.nets.model import (ConstraintMode, EncoderMode, ModelConfig,
                                 ToyModel, decode, encode, init_model,
                                 load_model, reparameterize, sample_from_prior,
                                 save_model)

__all__ = [
    "AuxPrior",
    "ConstraintMode",
    "EncoderMode",
    "ModelConfig",
    "ToyModel",
    "aux_log_prob",
    "decode",
    "encode",
    "fit_aux_prior",
    "fit_aux_prior_moments",
    "init_model",
    "load_model",
    "reparameterize",
    "sample_from_prior",
    "save_model",
]
