"""One-step adaptive lasso: working-data construction, coordinate descent,
back-transformation, intercept update, and tuning-parameter selection.

The estimator solves one weighted-lasso problem on working data built from
the unpenalized fit.  Writing w_j = |beta0_j|, the working design is the
weight-centered matrix X* = Dstar X W and the working response is
Y* = Dstar X beta0, where Dstar is the square-root-and-center transform of
the fitted weight diagonal.  Coordinate descent on (X*, Y*) yields
betastar, the penalized coefficients are beta1_j = betastar_j * w_j, and
the intercept follows from the weighted-mean identity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from ._rng import mix_seed
from .errors import NoConvergence, WsiError
from .glm_core import (
    Dataset,
    GlmFamily,
    MleFit,
    fit_mle,
    log_likelihood,
    loglik_terms,
    make_dataset,
)

CD_TOL = 1e-9
CD_MAX_SWEEPS = 10_000
GRID_DECADES = 4.0


@dataclass(frozen=True)
class WorkingData:
    """Working design/response for the weighted lasso.

    Columns of ``x_star`` whose weight w_j is zero are identically zero and
    have ``col_norms[j] == 0``; coordinate descent skips them.
    """

    x_star: np.ndarray
    y_star: np.ndarray
    w: np.ndarray
    col_norms: np.ndarray


@dataclass(frozen=True)
class OneStepFit:
    """One-step adaptive lasso estimate.

    gamma1     : (p+1,) estimate, intercept first.
    beta_star  : (p,) lasso solution on the working data.
    active_set : indices j with beta1_j != 0 (0-based).
    b_set      : {0} plus {j+1 : j in active_set}; indexes gamma1.
    """

    gamma1: np.ndarray
    lam: float
    beta_star: np.ndarray
    active_set: np.ndarray
    b_set: np.ndarray


class SelectedLambda(NamedTuple):
    value: float
    bic: float
    cv: float


def soft_threshold(z: float, r: float) -> float:
    """sgn(z) * max(|z| - r, 0)."""
    if z > r:
        return z - r
    if z < -r:
        return z + r
    return 0.0


def _center_scale_columns(d0: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Apply the square-root-and-center weight transform to each column.

    For weight diagonal d, maps v to sqrt(d) * (v - mean_d(v)) where
    mean_d(v) = sum(d v) / sum(d).  This equals the matrix product of the
    transform with v without materializing an n-by-n matrix, and the
    transform's Gram matrix is the centered weight form
    D - D 1 (1'D 1)^{-1} 1'D.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float).T).T
    weighted_means = (d0 @ m) / d0.sum()
    return np.sqrt(d0)[:, None] * (m - weighted_means[None, :])


def build_working_data(mle: MleFit, data: Dataset) -> WorkingData:
    """Construct the working design X* and response Y* from a converged fit."""
    w = np.abs(mle.gamma0[1:])
    x_star = _center_scale_columns(mle.d0, data.x_std * w[None, :])
    y_star = _center_scale_columns(mle.d0, data.x_std @ mle.gamma0[1:])[:, 0]
    col_norms = np.einsum("ij,ij->j", x_star, x_star)
    col_norms[w == 0.0] = 0.0
    return WorkingData(x_star=x_star, y_star=y_star, w=w, col_norms=col_norms)


@njit(cache=True)
def _cd_kernel(gram, cvec, nlam, beta, tol, max_sweeps):  # pragma: no cover
    """Cyclic coordinate descent on the Gram form of the working lasso.

    Minimizes (1/2n) ||y* - X* b||^2 + lam ||b||_1 given gram = X*'X* and
    cvec = X*'y*.  Visits coordinates in index order; a coordinate with a
    zero column norm is skipped.  Returns the sweep count on convergence,
    or -1 if max_sweeps was exhausted.  ``beta`` is updated in place.
    """
    p = gram.shape[0]
    gram_beta = gram @ beta
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            z = cvec[j] - gram_beta[j] + gjj * beta[j]
            if z > nlam:
                new_bj = (z - nlam) / gjj
            elif z < -nlam:
                new_bj = (z + nlam) / gjj
            else:
                new_bj = 0.0
            diff = new_bj - beta[j]
            if diff != 0.0:
                beta[j] = new_bj
                for k in range(p):
                    gram_beta[k] += gram[k, j] * diff
            if abs(diff) > max_change:
                max_change = abs(diff)
        if max_change < tol:
            return sweep + 1
    return -1


def _cd_from_gram(
    gram: np.ndarray,
    cvec: np.ndarray,
    n: int,
    lam: float,
    beta0: np.ndarray | None = None,
    tol: float = CD_TOL,
    max_sweeps: int = CD_MAX_SWEEPS,
) -> np.ndarray:
    beta = np.zeros(gram.shape[0]) if beta0 is None else beta0.copy()
    status = _cd_kernel(gram, cvec, n * lam, beta, tol, max_sweeps)
    if status < 0:
        warnings.warn(
            NoConvergence(
                f"coordinate descent did not converge in {max_sweeps} sweeps",
                beta_star=beta.copy(),
            )
        )
    return beta


def coordinate_descent(
    wd: WorkingData,
    lam: float,
    tol: float = CD_TOL,
    max_sweeps: int = CD_MAX_SWEEPS,
) -> np.ndarray:
    """Solve the working lasso at penalty lam > 0.

    Converged when the largest coordinate change in a sweep drops below
    ``tol``; issues a NoConvergence warning (carrying the last iterate)
    if ``max_sweeps`` is exhausted.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    gram = wd.x_star.T @ wd.x_star
    cvec = wd.x_star.T @ wd.y_star
    return _cd_from_gram(gram, cvec, len(wd.y_star), lam, tol=tol, max_sweeps=max_sweeps)


def lambda_max(wd: WorkingData) -> float:
    """Smallest penalty at which the working lasso solution is all zero."""
    cvec = wd.x_star.T @ wd.y_star
    return float(np.max(np.abs(cvec))) / len(wd.y_star)


def _assemble_fit(
    mle: MleFit, data: Dataset, wd: WorkingData, beta_star: np.ndarray, lam: float
) -> OneStepFit:
    beta1 = beta_star * wd.w
    d0 = mle.d0
    alpha1 = float(
        mle.gamma0[0] + d0 @ (data.x_std @ (mle.gamma0[1:] - beta1)) / d0.sum()
    )
    gamma1 = np.concatenate(([alpha1], beta1))
    active_set = np.flatnonzero(beta1 != 0.0)
    b_set = np.concatenate(([0], active_set + 1))
    return OneStepFit(
        gamma1=gamma1,
        lam=float(lam),
        beta_star=beta_star,
        active_set=active_set,
        b_set=b_set,
    )


def one_step_fit(mle: MleFit, data: Dataset, lam: float) -> OneStepFit:
    """Full one-step estimate at penalty lam: working data, coordinate
    descent, back-transform, and intercept update."""
    wd = build_working_data(mle, data)
    beta_star = coordinate_descent(wd, lam)
    return _assemble_fit(mle, data, wd, beta_star, lam)


def bic_score(family: GlmFamily, data: Dataset, gamma: np.ndarray) -> float:
    """Information criterion -2 loglik(gamma)/n + df log(n)/n, with df the
    number of nonzero coefficients (excluding the intercept)."""
    df = int(np.count_nonzero(np.asarray(gamma)[1:]))
    n = data.n
    return -2.0 * log_likelihood(family, gamma, data) / n + df * np.log(n) / n


def _lambda_grid(lam_max: float, grid_size: int) -> np.ndarray:
    lam_max = max(lam_max, 1e-12)
    return np.geomspace(lam_max, lam_max * 10.0 ** (-GRID_DECADES), grid_size)


def select_lambda(
    family: GlmFamily,
    data: Dataset,
    grid_size: int = 100,
    folds: int = 5,
    seed: int | None = None,
    mle: MleFit | None = None,
) -> SelectedLambda:
    """Tune the penalty as the average of an information-criterion choice
    and a cross-validation choice.

    Both searches share a log-spaced grid of ``grid_size`` values spanning
    four decades below the null threshold of the full-data working lasso.
    The criterion choice minimizes ``bic_score`` of the back-transformed
    fit.  The cross-validation choice refits the unpenalized estimate on
    each training fold, re-solves the working lasso along the grid, and
    scores out-of-fold deviance (-2 loglik) of the back-transformed fit on
    the held-out rows; a fold whose fit fails contributes +inf for every
    candidate.  Fold membership is drawn from ``seed``.
    """
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if mle is None:
        mle = fit_mle(family, data)
    fit_family = mle.family
    wd = build_working_data(mle, data)
    gram = wd.x_star.T @ wd.x_star
    cvec = wd.x_star.T @ wd.y_star
    grid = _lambda_grid(lambda_max(wd), grid_size)

    bic_values = np.empty(grid_size)
    for k, lam in enumerate(grid):
        beta_star = _cd_from_gram(gram, cvec, data.n, lam)
        fit_k = _assemble_fit(mle, data, wd, beta_star, lam)
        bic_values[k] = bic_score(fit_family, data, fit_k.gamma1)
    lam_bic = float(grid[int(np.argmin(bic_values))])

    rng = np.random.default_rng(None if seed is None else mix_seed(seed, 0))
    assignment = np.array_split(rng.permutation(data.n), folds)
    cv_values = np.zeros(grid_size)
    for fold_idx in range(folds):
        val_rows = assignment[fold_idx]
        train_rows = np.concatenate(
            [assignment[f] for f in range(folds) if f != fold_idx]
        )
        try:
            fold_data = make_dataset(
                data.x_raw[train_rows], data.y[train_rows], family
            )
            fold_mle = fit_mle(family, fold_data)
        except WsiError:
            cv_values += np.inf
            continue
        fold_wd = build_working_data(fold_mle, fold_data)
        fold_gram = fold_wd.x_star.T @ fold_wd.x_star
        fold_cvec = fold_wd.x_star.T @ fold_wd.y_star
        # held-out rows standardized with the training fold's location/scale
        x_val = (data.x_raw[val_rows] - fold_data.col_means) / fold_data.col_sds
        y_val = data.y[val_rows]
        for k, lam in enumerate(grid):
            beta_star = _cd_from_gram(fold_gram, fold_cvec, fold_data.n, lam)
            fit_k = _assemble_fit(fold_mle, fold_data, fold_wd, beta_star, lam)
            mu_val = fit_k.gamma1[0] + x_val @ fit_k.gamma1[1:]
            with np.errstate(over="ignore"):
                deviance = -2.0 * float(
                    loglik_terms(fold_mle.family, mu_val, y_val).sum()
                )
            cv_values[k] += deviance if np.isfinite(deviance) else np.inf
    if np.isfinite(cv_values).any():
        lam_cv = float(grid[int(np.argmin(cv_values))])
    else:
        # every fold failed; fall back to the criterion choice
        lam_cv = lam_bic
    return SelectedLambda(value=(lam_bic + lam_cv) / 2.0, bic=lam_bic, cv=lam_cv)
