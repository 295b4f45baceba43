# SPDX-License-Identifier: Apache-2.0
"""Personalized explanation generation with counterfactual-fairness tuning.

Thin python surface over the C++ core: the five pipeline operations
(``corpus``, ``pretrain``, ``finetune``, ``evaluate``, ``sweep``), the
text-quality metrics, and the REINFORCE reward algebra.
"""

from ._fairgen import (
    ArtifactError,
    ConfigError,
    Error,
    NumericError,
    __version__,
    bleu,
    corpus,
    evaluate,
    finetune,
    pretrain,
    promotion_weight,
    reinforce_rewards,
    rmse,
    rouge,
    sign_of,
    sweep,
)

__all__ = [
    "ArtifactError",
    "ConfigError",
    "Error",
    "NumericError",
    "__version__",
    "bleu",
    "corpus",
    "evaluate",
    "finetune",
    "pretrain",
    "promotion_weight",
    "reinforce_rewards",
    "rmse",
    "rouge",
    "sign_of",
    "sweep",
]
