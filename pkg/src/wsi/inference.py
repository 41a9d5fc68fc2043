"""Confidence intervals: de-biased intervals for coordinates identified as
strong signals, maximum-likelihood intervals for the rest, the two-step
rule that combines them, and a paired-bootstrap comparator.

The de-biased quantities follow the asymptotic theory for the nonzero
one-step estimates: with Z0 = X' Dcenter X (the centered weighted Gram of
the standardized design), A the active set of size s, and
Sigma_lam = diag(lam / (|beta0_j| |beta1_j|)),

    bias = -(Z_A/n + Sigma_lam)^{-1} (lam sgn(beta1_j) / |beta0_j|)_A
    cov  = (1/n^3) (Z_A/n + Sigma_lam)^{-1} Z_A {(I_B)^{-1}}_A Z_A
           (Z_A/n + Sigma_lam)^{-1}

where I_B is the per-observation information restricted to the intercept
plus active coordinates and {.}_A drops the intercept row and column after
inversion.  At lam = 0 the bias vanishes and cov reduces to the restricted
maximum-likelihood covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import ndtri

from ._rng import mix_seed
from .errors import NotActive, SingularSystem, TooManyFailures, WsiError
from .glm_core import Dataset, GlmFamily, MleFit, _fit_mle_arrays
from .onestep_lasso import OneStepFit
from .signal_id import SignalClassification

METHOD_DEBIASED = "debiased_onestep"
METHOD_MLE = "mle"
METHOD_ABSENT = "absent"
METHOD_BOOTSTRAP = "bootstrap"

BOOTSTRAP_FAILURE_CAP = 0.10


@dataclass(frozen=True)
class DebiasedQuantities:
    """Bias and covariance estimates for the active one-step coefficients.

    bias_hat     : (s,) bias estimate, aligned with active_set.
    cov_hat      : (s, s) covariance estimate, symmetric PSD.
    sigma_lambda : (s,) diagonal of the shrinkage matrix.
    z0           : (p, p) centered weighted Gram of the full design.
    active_set   : the coordinates the rows/columns refer to.
    """

    bias_hat: np.ndarray
    cov_hat: np.ndarray
    sigma_lambda: np.ndarray
    z0: np.ndarray
    active_set: np.ndarray


@dataclass(frozen=True)
class IntervalSet:
    """Per-coordinate confidence bounds with a method tag each.

    Tags are METHOD_DEBIASED, METHOD_MLE, METHOD_BOOTSTRAP, or
    METHOD_ABSENT; absent coordinates carry NaN bounds.
    """

    lower: np.ndarray
    upper: np.ndarray
    method: tuple[str, ...]
    alpha: float


def z_critical(alpha: float) -> float:
    """Two-sided standard-normal critical value z_{alpha/2}."""
    return float(ndtri(1.0 - alpha / 2.0))


def debiased_quantities(
    mle: MleFit, onestep: OneStepFit, data: Dataset, lam: float
) -> DebiasedQuantities:
    """Bias and covariance estimates for the active coordinates.

    Requires a nonempty active set (every active coordinate has nonzero
    estimates in both fits, which selection guarantees).  Raises
    SingularSystem if the shrunk Gram or the restricted information cannot
    be factorized.
    """
    active = onestep.active_set
    if active.size == 0:
        raise ValueError("active set is empty; nothing to de-bias")
    d0 = mle.d0
    x = data.x_std
    n = data.n
    s_vec = x.T @ d0
    z0 = x.T @ (d0[:, None] * x) - np.outer(s_vec, s_vec) / d0.sum()

    beta0_a = mle.gamma0[1:][active]
    beta1_a = onestep.gamma1[1:][active]
    z_a = z0[np.ix_(active, active)]
    sigma_lambda = lam / (np.abs(beta0_a) * np.abs(beta1_a))
    shrunk = z_a / n + np.diag(sigma_lambda)
    try:
        shrunk_factor = cho_factor(shrunk, lower=True)
    except LinAlgError as exc:
        raise SingularSystem("shrunk working Gram is not positive definite") from exc
    bias_hat = -cho_solve(shrunk_factor, lam * np.sign(beta1_a) / np.abs(beta0_a))

    b_set = onestep.b_set
    info_b = mle.info[np.ix_(b_set, b_set)]
    try:
        info_factor = cho_factor(info_b, lower=True)
    except LinAlgError as exc:
        raise SingularSystem(
            "restricted information matrix is not positive definite"
        ) from exc
    info_b_inv = cho_solve(info_factor, np.eye(b_set.size))
    # invert on the intercept-augmented block first, then drop the
    # intercept row and column
    core = info_b_inv[1:, 1:]
    shrunk_inv_z = cho_solve(shrunk_factor, z_a)
    cov_hat = (shrunk_inv_z @ core @ shrunk_inv_z.T) / n**3
    cov_hat = (cov_hat + cov_hat.T) / 2.0
    return DebiasedQuantities(
        bias_hat=bias_hat,
        cov_hat=cov_hat,
        sigma_lambda=sigma_lambda,
        z0=z0,
        active_set=active.copy(),
    )


def ci_strong(
    onestep: OneStepFit, dq: DebiasedQuantities, j: int, alpha: float = 0.05
) -> tuple[float, float]:
    """De-biased interval for active coordinate j:
    beta1_j - bias_j -/+ z_{alpha/2} sigma_j."""
    pos = np.flatnonzero(dq.active_set == j)
    if pos.size == 0:
        raise NotActive(j)
    k = int(pos[0])
    center = onestep.gamma1[1 + j] - dq.bias_hat[k]
    half = z_critical(alpha) * np.sqrt(dq.cov_hat[k, k])
    return float(center - half), float(center + half)


def ci_mle(mle: MleFit, j: int, alpha: float = 0.05) -> tuple[float, float]:
    """Maximum-likelihood interval for coordinate j:
    beta0_j -/+ z_{alpha/2} sqrt of the (j+1)-th diagonal of the inverse
    weighted information."""
    center = mle.gamma0[1 + j]
    half = z_critical(alpha) * np.sqrt(mle.cov[1 + j, 1 + j])
    return float(center - half), float(center + half)


def _combine(
    mle: MleFit,
    onestep: OneStepFit,
    dq: DebiasedQuantities | None,
    classification: SignalClassification,
    alpha: float,
    noise_absent: bool,
) -> IntervalSet:
    p = mle.gamma0.size - 1
    lower = np.full(p, np.nan)
    upper = np.full(p, np.nan)
    method = [METHOD_ABSENT] * p
    strong = set(int(j) for j in classification.strong)
    noise = set(int(j) for j in classification.noise)
    active = set(int(j) for j in onestep.active_set)
    for j in range(p):
        if j in strong and j in active and dq is not None:
            lower[j], upper[j] = ci_strong(onestep, dq, j, alpha)
            method[j] = METHOD_DEBIASED
        elif j in noise and noise_absent:
            continue
        else:
            # weak and noise coordinates use the unpenalized interval; a
            # coordinate tagged strong without a nonzero estimate has no
            # de-biased theory to lean on, so it falls back there too
            lower[j], upper[j] = ci_mle(mle, j, alpha)
            method[j] = METHOD_MLE
    return IntervalSet(lower=lower, upper=upper, method=tuple(method), alpha=alpha)


def two_step_ci(
    mle: MleFit,
    onestep: OneStepFit,
    dq: DebiasedQuantities | None,
    classification: SignalClassification,
    alpha: float = 0.05,
) -> IntervalSet:
    """De-biased intervals for identified strong signals, unpenalized
    intervals for weak signals and noise; every coordinate gets one."""
    return _combine(mle, onestep, dq, classification, alpha, noise_absent=False)


def old_two_step_ci(
    mle: MleFit,
    onestep: OneStepFit,
    dq: DebiasedQuantities | None,
    classification: SignalClassification,
    alpha: float = 0.05,
) -> IntervalSet:
    """Comparator that leaves identified noise coordinates without an
    interval; agrees with two_step_ci on strong and weak coordinates."""
    return _combine(mle, onestep, dq, classification, alpha, noise_absent=True)


def bootstrap_ci(
    family: GlmFamily,
    data: Dataset,
    n_boot: int = 1000,
    alpha: float = 0.05,
    seed: int | None = None,
) -> IntervalSet:
    """Percentile intervals from paired resampling.

    Each replicate resamples (x, y) rows with replacement, refits the
    unpenalized estimate on the resampled design as-is, and records the
    coefficients; bounds are the alpha/2 and 1-alpha/2 empirical quantiles
    (linear interpolation).  Replicates that fail to converge are dropped;
    more than BOOTSTRAP_FAILURE_CAP of them raises TooManyFailures.
    """
    if n_boot < 2:
        raise ValueError("need at least two bootstrap replicates")
    seed = 0 if seed is None else seed
    estimates = []
    failures = 0
    for r in range(n_boot):
        rng = np.random.default_rng(mix_seed(seed, r))
        rows = rng.integers(0, data.n, size=data.n)
        try:
            fit = _fit_mle_arrays(family, data.x_tilde[rows], data.y[rows])
        except (WsiError, LinAlgError):
            failures += 1
            continue
        if not fit.converged:
            failures += 1
            continue
        estimates.append(fit.gamma0[1:])
    if failures > BOOTSTRAP_FAILURE_CAP * n_boot:
        raise TooManyFailures(failures, n_boot)
    stacked = np.vstack(estimates)
    lower = np.quantile(stacked, alpha / 2.0, axis=0)
    upper = np.quantile(stacked, 1.0 - alpha / 2.0, axis=0)
    return IntervalSet(
        lower=lower,
        upper=upper,
        method=tuple([METHOD_BOOTSTRAP] * data.p),
        alpha=alpha,
    )
