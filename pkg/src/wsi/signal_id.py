"""Classification of coordinates into strong signals, weak signals, and
noise, driven by estimated selection probabilities and two thresholds.

The upper threshold delta1 separates strong signals; the lower threshold
delta2 is calibrated so that, among coordinates the penalized fit set to
zero, a target fraction tau of selection probabilities exceed it (the
false-positive rate of leaving the noise set).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AllSelected
from .onestep_lasso import OneStepFit
from .selection_prob import SelectionProfile

DELTA1_DEFAULT = 0.99
TAU_DEFAULT = 0.1
ALPHA_DEFAULT = 0.05


@dataclass(frozen=True)
class Thresholds:
    """Classification thresholds.

    ``delta2=None`` means "not yet calibrated"; ``classify`` requires a
    calibrated value.  Requires delta2 < delta1 and delta1 > 1 - alpha so
    that coordinates identified as strong really are strongly selected.
    """

    delta1: float = DELTA1_DEFAULT
    delta2: float | None = None
    tau: float = TAU_DEFAULT
    alpha: float = ALPHA_DEFAULT

    def __post_init__(self):
        if not 0.0 < self.delta1 <= 1.0:
            raise ValueError("delta1 must lie in (0, 1]")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.delta1 <= 1.0 - self.alpha:
            raise ValueError("delta1 must exceed 1 - alpha")
        if self.delta2 is not None:
            if not 0.0 <= self.delta2 < 1.0:
                raise ValueError("delta2 must lie in [0, 1)")
            if self.delta2 >= self.delta1:
                raise ValueError("delta2 must be below delta1")


@dataclass(frozen=True)
class SignalClassification:
    """Disjoint index sets partitioning {0..p-1} (0-based coordinates)."""

    strong: np.ndarray
    weak: np.ndarray
    noise: np.ndarray


def calibrate_delta2(
    profile: SelectionProfile, onestep: OneStepFit, tau: float = TAU_DEFAULT
) -> float:
    """Noise threshold: the 100(1-tau)% empirical quantile (linear
    interpolation between order statistics) of the selection probabilities
    of coordinates the penalized fit set to zero.

    If every coordinate was selected there is nothing to calibrate on;
    an AllSelected warning is issued and 0 returned.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    zero_set = profile.p_hat[onestep.gamma1[1:] == 0.0]
    if zero_set.size == 0:
        warnings.warn(
            AllSelected("all coordinates selected; noise threshold set to 0")
        )
        return 0.0
    return float(np.quantile(zero_set, 1.0 - tau))


def classify(profile: SelectionProfile, thresholds: Thresholds) -> SignalClassification:
    """Partition coordinates by selection probability: strong above delta1,
    noise at or below delta2, weak in between (boundaries go down)."""
    if thresholds.delta2 is None:
        raise ValueError("thresholds.delta2 has not been calibrated")
    p_hat = profile.p_hat
    strong = p_hat > thresholds.delta1
    noise = p_hat <= thresholds.delta2
    weak = ~strong & ~noise
    return SignalClassification(
        strong=np.flatnonzero(strong),
        weak=np.flatnonzero(weak),
        noise=np.flatnonzero(noise),
    )
