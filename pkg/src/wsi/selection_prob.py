"""Selection probabilities for the one-step adaptive lasso.

A coordinate's selection probability is the chance that the penalized
estimate of its coefficient is nonzero.  Two evaluations are provided:

* ``approximate_selection_prob`` evaluates the population form at the true
  parameter, replacing population expectations over the covariate law with
  seeded Monte Carlo averages.
* ``estimated_selection_prob`` plugs the fitted weights and coefficient
  estimates into the same form, using sample sums over the observed design.

Both have the shape Phi((-t + b) / s) + Phi((-t - b) / s) with a threshold
scale t > 0 and a sampling scale s > 0, so every value is strictly inside
(0, 1), is even in b, and increases in |b| for fixed (t, s).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import ndtr

from ._rng import mix_seed
from .errors import DegenerateDenominator
from .glm_core import Dataset, GlmFamily, MleFit, weight_terms

MC_DRAWS_DEFAULT = 200_000
MC_CHUNKS_DEFAULT = 20

COVARIATE_KINDS = (
    "gaussian_ar1",
    "gaussian_exchangeable",
    "independent_std_exponential",
)


@dataclass(frozen=True)
class SelectionProfile:
    """Estimated selection probabilities for every coordinate at one
    penalty value, with references to the inputs they came from."""

    p_hat: np.ndarray
    lam: float
    mle: MleFit
    data: Dataset


@dataclass(frozen=True)
class CovariateModel:
    """Population covariate law; every kind has mean 0, variance 1 per
    coordinate.

    gaussian_ar1               : correlation rho^|j-k|.
    gaussian_exchangeable      : constant off-diagonal correlation rho.
    independent_std_exponential: centered unit exponential coordinates.
    """

    kind: str
    p: int
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in COVARIATE_KINDS:
            raise ValueError(f"unknown covariate model {self.kind!r}")
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.kind.startswith("gaussian") and not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")

    def correlation(self) -> np.ndarray:
        idx = np.arange(self.p)
        if self.kind == "gaussian_ar1":
            return self.rho ** np.abs(idx[:, None] - idx[None, :])
        if self.kind == "gaussian_exchangeable":
            return (1.0 - self.rho) * np.eye(self.p) + self.rho * np.ones(
                (self.p, self.p)
            )
        return np.eye(self.p)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n rows from the covariate law."""
        if self.kind == "independent_std_exponential":
            return rng.exponential(1.0, size=(n, self.p)) - 1.0
        z = rng.standard_normal((n, self.p))
        if self.rho == 0.0:
            return z
        chol = np.linalg.cholesky(self.correlation())
        return z @ chol.T


class MonteCarloProbability(NamedTuple):
    value: float
    mc_se: float


def _open_unit_clip(values: np.ndarray) -> np.ndarray:
    """Keep probabilities strictly inside (0, 1) despite floating-point
    underflow of the normal tails."""
    lo = np.nextafter(0.0, 1.0)
    hi = np.nextafter(1.0, 0.0)
    return np.clip(values, lo, hi)


def _phi_pair(t: np.ndarray, s: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ndtr((-t + b) / s) + ndtr((-t - b) / s)


def _estimated_vector(mle: MleFit, data: Dataset, lam: float) -> np.ndarray:
    d0 = mle.d0
    x = data.x_std
    sum_d = float(d0.sum())
    sum_dx = d0 @ x
    sum_dx2 = d0 @ (x * x)
    denom = sum_dx2 * sum_d - sum_dx**2
    bad = np.flatnonzero(denom <= 0.0)
    if bad.size:
        raise DegenerateDenominator(bad)
    t = np.sqrt(data.n * lam * sum_d / denom)
    s = np.sqrt(np.diag(mle.cov)[1:])
    return _open_unit_clip(_phi_pair(t, s, mle.gamma0[1:]))


def estimated_selection_prob(
    mle: MleFit, data: Dataset, lam: float, j: int
) -> float:
    """Plug-in selection probability for coordinate j (0-based).

    Threshold scale: t_j = sqrt(n lam S_d / (S_dxx S_d - S_dx^2)) with
    S_d = sum(d0), S_dx = sum(d0 x_j), S_dxx = sum(d0 x_j^2); sampling
    scale: s_j = sqrt of the (j+1)-th diagonal entry of the inverse
    weighted information.  Raises DegenerateDenominator if the threshold
    denominator is not strictly positive.
    """
    if not 0 <= j < data.p:
        raise ValueError(f"coordinate {j} out of range")
    if lam <= 0:
        raise ValueError("lam must be positive")
    return float(_estimated_vector(mle, data, lam)[j])


def selection_profile(mle: MleFit, data: Dataset, lam: float) -> SelectionProfile:
    """Estimated selection probabilities for all coordinates at once."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return SelectionProfile(
        p_hat=_estimated_vector(mle, data, lam), lam=float(lam), mle=mle, data=data
    )


def approximate_selection_prob(
    family: GlmFamily,
    gamma0: np.ndarray,
    cm: CovariateModel,
    n: int,
    lam: float,
    j: int,
    mc_draws: int = MC_DRAWS_DEFAULT,
    seed: int | None = None,
    chunks: int = MC_CHUNKS_DEFAULT,
) -> MonteCarloProbability:
    """Population selection probability at the true parameter gamma0.

    The expectations E(w), E(w x_j), E(w x_j^2), and E(x~ x~' w) over the
    covariate law are estimated by seeded Monte Carlo in ``chunks`` equal
    batches; the reported standard error is the between-chunk spread of the
    plug-in value.  Results are deterministic for a fixed seed and chunk
    count.  Raises DegenerateDenominator if the threshold denominator or
    the information inverse degenerates.
    """
    gamma0 = np.asarray(gamma0, dtype=float)
    if gamma0.shape != (cm.p + 1,):
        raise ValueError("gamma0 must have length p + 1 (intercept first)")
    if not 0 <= j < cm.p:
        raise ValueError(f"coordinate {j} out of range")
    if lam <= 0 or n < 1 or mc_draws < 1 or chunks < 2:
        raise ValueError("need lam > 0, n >= 1, mc_draws >= 1, chunks >= 2")
    seed = 0 if seed is None else seed
    per_chunk = -(-mc_draws // chunks)

    sum_w = 0.0
    sum_wx = 0.0
    sum_wx2 = 0.0
    sum_info = np.zeros((cm.p + 1, cm.p + 1))
    total = 0
    chunk_values = []
    for c in range(chunks):
        m = min(per_chunk, mc_draws - total)
        if m <= 0:
            break
        rng = np.random.default_rng(mix_seed(seed, c))
        x = cm.sample(rng, m)
        mu = gamma0[0] + x @ gamma0[1:]
        w = weight_terms(family, mu)
        xj = x[:, j]
        x_tilde = np.hstack([np.ones((m, 1)), x])
        c_w = float(w.sum())
        c_wx = float(w @ xj)
        c_wx2 = float(w @ (xj * xj))
        c_info = x_tilde.T @ (w[:, None] * x_tilde)
        chunk_values.append(
            _evaluate_population_form(
                c_w / m, c_wx / m, c_wx2 / m, c_info / m, n, lam, j, gamma0[j + 1]
            )
        )
        sum_w += c_w
        sum_wx += c_wx
        sum_wx2 += c_wx2
        sum_info += c_info
        total += m
    value = _evaluate_population_form(
        sum_w / total,
        sum_wx / total,
        sum_wx2 / total,
        sum_info / total,
        n,
        lam,
        j,
        gamma0[j + 1],
    )
    spread = np.std(chunk_values, ddof=1) / np.sqrt(len(chunk_values))
    return MonteCarloProbability(value=float(value), mc_se=float(spread))


def _evaluate_population_form(
    e_w: float,
    e_wx: float,
    e_wx2: float,
    e_info: np.ndarray,
    n: int,
    lam: float,
    j: int,
    beta_j: float,
) -> float:
    denom = e_wx2 * e_w - e_wx**2
    if denom <= 0.0:
        raise DegenerateDenominator([j])
    t = np.sqrt(lam * e_w / denom)
    try:
        factor = cho_factor(n * e_info, lower=True)
    except LinAlgError as exc:
        raise DegenerateDenominator([j]) from exc
    inv_col = cho_solve(factor, np.eye(e_info.shape[0])[:, j + 1])
    s = np.sqrt(inv_col[j + 1])
    return float(_open_unit_clip(_phi_pair(t, s, beta_j)))
