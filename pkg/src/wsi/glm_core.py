"""GLM families, likelihood derivatives, covariate standardization, and
unpenalized maximum-likelihood fitting.

All model code works with the linear predictor mu_i = alpha + x_i' beta,
where x_i is the i-th row of the column-standardized design.  The per
observation weight w(mu) is the negative second derivative of the
log-likelihood with respect to mu and is strictly positive for every
supported family, which makes the log-likelihood concave in mu.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit, gammaln

from .errors import (
    ConstantColumn,
    DataError,
    NumericalError,
    SeparationDetected,
    SingularInformation,
)

FAMILY_KINDS = ("gaussian", "logistic", "poisson")

# Newton-Raphson controls.
MAX_ITER = 100
MAX_HALVINGS = 30
RELTOL_LOGLIK = 1e-10
SCORE_TOL = 1e-8
DIVERGENCE_BOUND = 1e3
SEPARATION_RESID_TOL = 1e-6
# exp overflows to inf just above 709; weights are cut off earlier.
POISSON_MU_MAX = 700.0


@dataclass(frozen=True)
class GlmFamily:
    """Response distribution: "gaussian", "logistic", or "poisson".

    For the gaussian family, ``sigma2`` is the error variance; ``None``
    means "estimate it from the residuals of the unpenalized fit".
    """

    kind: str
    sigma2: float | None = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind != "gaussian" and self.sigma2 is not None:
            raise ValueError("sigma2 only applies to the gaussian family")
        if self.sigma2 is not None and self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class Dataset:
    """Design and response, with the design held both raw and standardized.

    ``x_std`` has columns with sample mean 0 and sample standard deviation 1
    (n-1 denominator); ``x_tilde`` prepends an all-ones intercept column.
    """

    x_raw: np.ndarray
    x_std: np.ndarray
    y: np.ndarray
    x_tilde: np.ndarray
    n: int
    p: int
    col_means: np.ndarray
    col_sds: np.ndarray


@dataclass(frozen=True)
class MleFit:
    """Maximum-likelihood fit.

    gamma0 : (p+1,) estimate, intercept first.
    d0     : (n,) per-observation weights at gamma0, all positive.
    info   : (p+1, p+1) observed information X~' D0 X~ / n.
    cov    : (p+1, p+1) inverse of X~' D0 X~ (without the 1/n).
    family : the family actually used, with sigma2 resolved for gaussian.
    """

    gamma0: np.ndarray
    d0: np.ndarray
    info: np.ndarray
    cov: np.ndarray
    loglik: float
    converged: bool
    family: GlmFamily
    n_iter: int


def standardize(x_raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center each column to mean 0 and scale to standard deviation 1.

    The scale uses the n-1 denominator.  Raises ConstantColumn for any
    column with zero sample variance.
    """
    x_raw = np.asarray(x_raw, dtype=float)
    if x_raw.ndim != 2:
        raise DataError("covariate matrix must be two-dimensional")
    if x_raw.shape[0] < 2:
        raise DataError("standardization needs at least two rows")
    col_means = x_raw.mean(axis=0)
    col_sds = x_raw.std(axis=0, ddof=1)
    bad = np.flatnonzero(col_sds == 0.0)
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    x_std = (x_raw - col_means) / col_sds
    return x_std, col_means, col_sds


def make_dataset(x_raw: np.ndarray, y: np.ndarray, family: GlmFamily) -> Dataset:
    """Validate raw inputs against the family and build a Dataset."""
    x_raw = np.asarray(x_raw, dtype=float)
    y = np.asarray(y, dtype=float)
    if x_raw.ndim != 2:
        raise DataError("covariate matrix must be two-dimensional")
    n, p = x_raw.shape
    if y.shape != (n,):
        raise DataError(f"response length {y.shape} does not match {n} rows")
    if p < 1:
        raise DataError("need at least one covariate column")
    if n <= p:
        raise DataError(f"need more rows than covariates (n={n}, p={p})")
    if not np.all(np.isfinite(x_raw)) or not np.all(np.isfinite(y)):
        raise DataError("covariates and response must be finite")
    if family.kind == "logistic" and not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("logistic family requires a 0/1 response")
    if family.kind == "poisson" and (np.any(y < 0) or np.any(y != np.floor(y))):
        raise DataError("poisson family requires nonnegative integer response")
    x_std, col_means, col_sds = standardize(x_raw)
    x_tilde = np.hstack([np.ones((n, 1)), x_std])
    return Dataset(
        x_raw=x_raw,
        x_std=x_std,
        y=y,
        x_tilde=x_tilde,
        n=n,
        p=p,
        col_means=col_means,
        col_sds=col_sds,
    )


def _require_sigma2(family: GlmFamily) -> float:
    if family.kind != "gaussian":
        raise ValueError("sigma2 is only defined for the gaussian family")
    if family.sigma2 is None:
        raise ValueError("gaussian family has no resolved sigma2 yet")
    return family.sigma2


def loglik_terms(family: GlmFamily, mu: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-observation log-likelihood at linear predictor mu."""
    if family.kind == "gaussian":
        sigma2 = _require_sigma2(family)
        return -((y - mu) ** 2) / (2.0 * sigma2) - 0.5 * np.log(2.0 * np.pi * sigma2)
    if family.kind == "logistic":
        # log(1 + exp(mu)) evaluated without overflow
        return y * mu - np.logaddexp(0.0, mu)
    # poisson: log(y!) via the log-gamma function
    return y * mu - np.exp(mu) - gammaln(y + 1.0)


def mean_function(family: GlmFamily, mu: np.ndarray) -> np.ndarray:
    """Expected response at linear predictor mu."""
    if family.kind == "gaussian":
        return mu
    if family.kind == "logistic":
        return expit(mu)
    return np.exp(mu)


def weight_terms(family: GlmFamily, mu: np.ndarray) -> np.ndarray:
    """Per-observation weights: negative second derivative of the
    log-likelihood in mu.  Strictly positive for all three families."""
    if family.kind == "gaussian":
        sigma2 = _require_sigma2(family)
        return np.full(mu.shape, 1.0 / sigma2)
    if family.kind == "logistic":
        # p(1-p) computed as the product of the two sigmoid tails; this is
        # exact and avoids cancellation for large |mu|
        return expit(mu) * expit(-mu)
    if np.any(mu > POISSON_MU_MAX):
        raise NumericalError(
            "poisson weights overflow: linear predictor exceeds "
            f"{POISSON_MU_MAX:g}"
        )
    return np.exp(mu)


def log_likelihood(family: GlmFamily, gamma: np.ndarray, data: Dataset) -> float:
    """Log-likelihood of gamma = (alpha, beta) on the standardized design."""
    mu = data.x_tilde @ np.asarray(gamma, dtype=float)
    return float(loglik_terms(family, mu, data.y).sum())


def score(family: GlmFamily, gamma: np.ndarray, data: Dataset) -> np.ndarray:
    """Gradient of the log-likelihood: X~' (y - m(mu)), with the gaussian
    case divided by sigma2."""
    return _score_arrays(family, np.asarray(gamma, dtype=float), data.x_tilde, data.y)


def _score_arrays(
    family: GlmFamily, gamma: np.ndarray, x_tilde: np.ndarray, y: np.ndarray
) -> np.ndarray:
    mu = x_tilde @ gamma
    resid = y - mean_function(family, mu)
    if family.kind == "gaussian":
        resid = resid / _require_sigma2(family)
    return x_tilde.T @ resid


def weight_diagonal(family: GlmFamily, gamma: np.ndarray, data: Dataset) -> np.ndarray:
    """Weights w(mu_i) evaluated at gamma for every observation."""
    mu = data.x_tilde @ np.asarray(gamma, dtype=float)
    return weight_terms(family, mu)


def _newton_arrays(
    family: GlmFamily, x_tilde: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, bool, int]:
    """Newton-Raphson with step-halving from gamma = 0.

    Stops when the relative log-likelihood change drops below RELTOL_LOGLIK
    or the score max-norm drops below SCORE_TOL.  Returns the iterate, a
    convergence flag, and the iteration count.
    """
    q = x_tilde.shape[1]
    gamma = np.zeros(q)
    ll = float(loglik_terms(family, x_tilde @ gamma, y).sum())
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        sc = _score_arrays(family, gamma, x_tilde, y)
        if np.max(np.abs(sc)) < SCORE_TOL:
            converged = True
            break
        mu = x_tilde @ gamma
        w = weight_terms(family, mu)
        hess = x_tilde.T @ (w[:, None] * x_tilde)
        try:
            factor = cho_factor(hess, lower=True)
        except LinAlgError as exc:
            raise SingularInformation(
                "weighted information matrix is not positive definite"
            ) from exc
        step = cho_solve(factor, sc)
        t = 1.0
        new_gamma = gamma + step
        new_ll = float(loglik_terms(family, x_tilde @ new_gamma, y).sum())
        halvings = 0
        while (not np.isfinite(new_ll) or new_ll <= ll) and halvings < MAX_HALVINGS:
            t *= 0.5
            new_gamma = gamma + t * step
            new_ll = float(loglik_terms(family, x_tilde @ new_gamma, y).sum())
            halvings += 1
        if not np.isfinite(new_ll) or new_ll <= ll:
            # no improving step exists at this resolution: the change
            # criterion is met with change zero
            converged = True
            break
        gamma = new_gamma
        if np.max(np.abs(gamma)) > DIVERGENCE_BOUND:
            raise SeparationDetected(
                "likelihood maximization diverged (coefficient max-norm "
                f"exceeded {DIVERGENCE_BOUND:g})"
            )
        rel_change = abs(new_ll - ll) / (1.0 + abs(new_ll))
        ll = new_ll
        if rel_change < RELTOL_LOGLIK:
            converged = True
            break
    return gamma, converged, it


def _fit_mle_arrays(family: GlmFamily, x_tilde: np.ndarray, y: np.ndarray) -> MleFit:
    """Fit on an explicit design with intercept column; resolves the
    gaussian sigma2 by plugging in RSS / (n - p - 1) when unspecified."""
    n, q = x_tilde.shape
    work_family = family
    if family.kind == "gaussian" and family.sigma2 is None:
        # sigma2 cancels from the Newton step, so any placeholder works
        work_family = GlmFamily("gaussian", 1.0)
    gamma, converged, n_iter = _newton_arrays(work_family, x_tilde, y)
    if family.kind == "logistic":
        # a perfectly fitted binary response means the maximizer is at
        # infinity; Newton stalls at some finite iterate, so catch it here
        resid = y - mean_function(family, x_tilde @ gamma)
        if float(np.max(np.abs(resid))) < SEPARATION_RESID_TOL:
            raise SeparationDetected(
                "perfect separation: every fitted probability matches its "
                "response; the likelihood has no finite maximizer"
            )
    fit_family = work_family
    if family.kind == "gaussian" and family.sigma2 is None:
        dof = n - q
        if dof <= 0:
            raise DataError(
                "estimating the gaussian error variance needs more rows "
                "than fitted parameters"
            )
        rss = float(np.sum((y - x_tilde @ gamma) ** 2))
        fit_family = GlmFamily("gaussian", rss / dof)
    return _assemble_mle(fit_family, x_tilde, y, gamma, converged, n_iter)


def _assemble_mle(
    family: GlmFamily,
    x_tilde: np.ndarray,
    y: np.ndarray,
    gamma: np.ndarray,
    converged: bool,
    n_iter: int,
) -> MleFit:
    n, q = x_tilde.shape
    mu = x_tilde @ gamma
    d0 = weight_terms(family, mu)
    xtdx = x_tilde.T @ (d0[:, None] * x_tilde)
    try:
        factor = cho_factor(xtdx, lower=True)
    except LinAlgError as exc:
        raise SingularInformation(
            "observed information is not positive definite at the optimum"
        ) from exc
    cov = cho_solve(factor, np.eye(q))
    cov = (cov + cov.T) / 2.0
    loglik = float(loglik_terms(family, mu, y).sum())
    return MleFit(
        gamma0=gamma,
        d0=d0,
        info=xtdx / n,
        cov=cov,
        loglik=loglik,
        converged=converged,
        family=family,
        n_iter=n_iter,
    )


def fit_mle(family: GlmFamily, data: Dataset) -> MleFit:
    """Unpenalized maximum-likelihood fit on the standardized design.

    Newton-Raphson from gamma = 0 with step-halving (up to MAX_HALVINGS
    halvings per step until the log-likelihood increases).  Raises
    SeparationDetected if an iterate's max-norm exceeds DIVERGENCE_BOUND
    and SingularInformation if the weighted information loses rank.  If
    MAX_ITER iterations are exhausted, the partial result is returned with
    ``converged=False``.
    """
    return _fit_mle_arrays(family, data.x_tilde, data.y)


def refit_at(family: GlmFamily, data: Dataset, gamma: np.ndarray) -> MleFit:
    """Rebuild the fit object at an externally supplied coefficient vector
    (weights, information, covariance, log-likelihood evaluated there).

    Used to reconstitute a serialized fit without re-running the
    optimizer; for gaussian responses the error variance must already be
    resolved in ``family``.
    """
    if family.kind == "gaussian" and family.sigma2 is None:
        raise ValueError("refit_at needs an explicit gaussian sigma2")
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (data.p + 1,):
        raise ValueError("gamma must have one entry per column plus intercept")
    return _assemble_mle(family, data.x_tilde, data.y, gamma, True, 0)
