"""Nuisance estimation: propensity, outcome means, conditional sds, cross-fitting.

Covariates are standardized internally before every fit; models store the
standardization so predictions live in original coordinates. All linear solves
carry a small ridge term on the slope block so separation and collinearity
degrade gracefully instead of erroring. Fitting is a pure function of
(dataset, config, oracle): identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data_model import Dataset, NuisanceValues
from .errors import (
    FoldTooSmallError,
    InsufficientArmDataError,
    IrlsDivergedError,
    MissingOracleError,
    ValidationError,
)
from .mathutil import bernoulli_loglik, expit


class PropensityMethod(enum.Enum):
    LOGISTIC_IRLS = "logistic_irls"
    ORACLE = "oracle"


class OutcomeMethod(enum.Enum):
    LEAST_SQUARES = "least_squares"
    ORACLE = "oracle"


class SdMethod(enum.Enum):
    SQUARED_RESIDUAL_REGRESSION = "squared_residual_regression"
    ORACLE = "oracle"
    SKIP = "skip"


class HeavyResidualWarning(UserWarning):
    """Max outcome residual far exceeds the residual interquartile range."""


@dataclass(frozen=True)
class NuisanceConfig:
    propensity_method: PropensityMethod = PropensityMethod.LOGISTIC_IRLS
    outcome_method: OutcomeMethod = OutcomeMethod.LEAST_SQUARES
    sd_method: SdMethod = SdMethod.SQUARED_RESIDUAL_REGRESSION
    folds: int = 1
    clip_eps: float = 0.01
    irls_max_iter: int = 100
    irls_tol: float = 1e-8
    ridge_lambda: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.folds < 1:
            raise ValidationError(f"folds must be >= 1, got {self.folds}")
        if not 0.0 < self.clip_eps < 0.5:
            raise ValidationError(f"clip_eps must be in (0, 0.5), got {self.clip_eps}")
        if self.ridge_lambda < 0:
            raise ValidationError("ridge_lambda must be nonnegative")


def _standardize(x: np.ndarray):
    """Per-column mean/sd; zero-variance columns get unit scale."""
    if x.shape[1] == 0:
        return np.zeros(0), np.ones(0)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


@dataclass(frozen=True, eq=False)
class _AffineModel:
    """Affine predictor on standardized covariates."""

    mean: np.ndarray
    scale: np.ndarray
    coef: np.ndarray  # (d+1,): intercept then standardized-column slopes

    def linear(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if self.mean.size == 1 else x.reshape(-1, self.mean.size)
        z = (x - self.mean) / self.scale if self.mean.size else np.zeros((x.shape[0], 0))
        return self.coef[0] + z @ self.coef[1:]


@dataclass(frozen=True, eq=False)
class PropensityModel:
    affine: _AffineModel
    clip_eps: float
    ll_trace: tuple  # accepted penalized log-likelihood values, one per iteration

    def predict(self, x: np.ndarray) -> np.ndarray:
        p = expit(self.affine.linear(x))
        return np.clip(p, self.clip_eps, 1.0 - self.clip_eps)


@dataclass(frozen=True, eq=False)
class MeanModel:
    affine: _AffineModel

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.affine.linear(x)


@dataclass(frozen=True, eq=False)
class SdModel:
    """Predicts sqrt(max(0, fitted squared residual))."""

    affine: _AffineModel

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(0.0, self.affine.linear(x)))


def _ridge_solve(design: np.ndarray, target: np.ndarray, lam: float) -> np.ndarray:
    gram = design.T @ design
    d = design.shape[1] - 1
    if d > 0:
        gram[np.arange(1, d + 1), np.arange(1, d + 1)] += lam
    return np.linalg.solve(gram, design.T @ target)


def _fit_linear(x: np.ndarray, target: np.ndarray, lam: float) -> _AffineModel:
    mean, scale = _standardize(x)
    z = (x - mean) / scale if mean.size else np.zeros((x.shape[0], 0))
    design = np.column_stack([np.ones(x.shape[0]), z])
    coef = _ridge_solve(design, target, lam)
    return _AffineModel(mean, scale, coef)


def _fit_logistic(a: np.ndarray, x: np.ndarray, config: NuisanceConfig) -> PropensityModel:
    n = x.shape[0]
    mean, scale = _standardize(x)
    z = (x - mean) / scale if mean.size else np.zeros((n, 0))
    design = np.column_stack([np.ones(n), z])
    d = design.shape[1] - 1
    lam = config.ridge_lambda
    a = a.astype(float)

    def penalized_ll(beta):
        ll = bernoulli_loglik(a, design @ beta)
        if d > 0:
            ll -= 0.5 * lam * float(beta[1:] @ beta[1:])
        return ll

    beta = np.zeros(d + 1)
    ll = penalized_ll(beta)
    trace = [ll]
    converged = False
    for _ in range(config.irls_max_iter):
        eta = design @ beta
        p = expit(eta)
        w = p * (1.0 - p)
        if not np.isfinite(w).all():
            raise IrlsDivergedError("non-finite working weights in IRLS")
        grad = design.T @ (a - p)
        hess = design.T @ (design * w[:, None])
        if d > 0:
            grad[1:] -= lam * beta[1:]
            hess[np.arange(1, d + 1), np.arange(1, d + 1)] += lam
        # Levenberg-style floor keeps the solve well-posed under saturation.
        hess[np.diag_indices_from(hess)] += max(lam, 1e-10)
        try:
            delta = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise IrlsDivergedError(f"singular IRLS system: {exc}") from exc
        if not np.isfinite(delta).all():
            raise IrlsDivergedError("non-finite IRLS step")
        step = 1.0
        accepted = None
        for _ in range(60):
            cand = beta + step * delta
            cand_ll = penalized_ll(cand)
            if np.isfinite(cand_ll) and cand_ll >= ll:
                accepted = (cand, cand_ll, step)
                break
            step *= 0.5
        if accepted is None:
            # Step-halving cannot improve: numerically stationary.
            converged = True
            break
        beta, new_ll, step = accepted
        trace.append(new_ll)
        gain = new_ll - ll
        ll = new_ll
        if (step * np.abs(delta)).max() <= config.irls_tol * (1.0 + np.abs(beta).max()):
            converged = True
            break
        if gain <= config.irls_tol * (1.0 + abs(ll)):
            converged = True
            break
    if not converged:
        raise IrlsDivergedError(
            f"IRLS did not converge in {config.irls_max_iter} iterations"
        )
    return PropensityModel(_AffineModel(mean, scale, beta), config.clip_eps, tuple(trace))


def fit_propensity(dataset: Dataset, config: NuisanceConfig) -> PropensityModel:
    """Ridge-penalized logistic regression of a on (1, x) via IRLS.

    The penalized log-likelihood is non-decreasing across accepted iterations
    (step-halving on decrease); predictions are clipped to
    ``[clip_eps, 1 - clip_eps]``.
    """
    return _fit_logistic(dataset.a, dataset.x, config)


def _arm_rows(a: np.ndarray, arm: int) -> np.ndarray:
    return np.flatnonzero(a == arm)


def _fit_mean_arm(y, a, x, arm, config) -> MeanModel:
    rows = _arm_rows(a, arm)
    if rows.size < x.shape[1] + 1:
        raise InsufficientArmDataError(
            f"arm {arm} has {rows.size} units, need at least {x.shape[1] + 1}"
        )
    return MeanModel(_fit_linear(x[rows], y[rows], config.ridge_lambda))


def fit_outcome_mean(dataset: Dataset, arm: int, config: NuisanceConfig) -> MeanModel:
    """Ridge least squares of y on (1, x) over units with a == arm."""
    return _fit_mean_arm(dataset.y, dataset.a, dataset.x, arm, config)


def _fit_sd_arm(y, a, x, arm, mu_at_rows, config) -> SdModel:
    rows = _arm_rows(a, arm)
    if rows.size < x.shape[1] + 1:
        raise InsufficientArmDataError(
            f"arm {arm} has {rows.size} units, need at least {x.shape[1] + 1}"
        )
    sq_resid = (y[rows] - mu_at_rows) ** 2
    return SdModel(_fit_linear(x[rows], sq_resid, config.ridge_lambda))


def fit_conditional_sd(dataset: Dataset, arm: int, mean_model: MeanModel,
                       config: NuisanceConfig) -> SdModel:
    """Regress squared residuals on (1, x) within the arm; predict sqrt(max(0, fit))."""
    rows = _arm_rows(dataset.a, arm)
    mu = mean_model.predict(dataset.x[rows])
    return _fit_sd_arm(dataset.y, dataset.a, dataset.x, arm, mu, config)


def _fold_blocks(n: int, folds: int, seed: int):
    """Seeded shuffle, then contiguous blocks with sizes differing by <= 1."""
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def _residual_diagnostic(y, rows, mu_at_rows) -> bool:
    resid = np.abs(y[rows] - mu_at_rows)
    if resid.size == 0:
        return False
    q75, q25 = np.percentile(resid, [75, 25])
    iqr = q75 - q25
    if iqr > 0 and resid.max() > 10.0 * iqr:
        warnings.warn(
            "max outcome residual exceeds 10x the residual IQR; the bounded-"
            "residual condition behind the variance theory may be strained",
            HeavyResidualWarning,
            stacklevel=3,
        )
        return True
    return False


def compute_nuisances(dataset: Dataset, config: NuisanceConfig,
                      oracle: Optional[NuisanceValues] = None,
                      need_mu1: bool = True,
                      need_sigma: Optional[bool] = None) -> NuisanceValues:
    """Produce per-unit NuisanceValues, in-sample (folds=1) or cross-fitted.

    With K >= 2 folds the indices are partitioned by a seeded shuffle and each
    unit's predictions come from models fitted on its fold's complement, so a
    fold's predictions depend only on rows outside that fold (plus its own
    covariates). Oracle vectors pass through unchanged except for pi clipping.
    """
    n = dataset.n
    if need_sigma is None:
        need_sigma = config.sd_method is not SdMethod.SKIP

    use_oracle_pi = config.propensity_method is PropensityMethod.ORACLE
    use_oracle_mu = config.outcome_method is OutcomeMethod.ORACLE
    use_oracle_sd = config.sd_method is SdMethod.ORACLE
    fit_sigma = need_sigma and config.sd_method is SdMethod.SQUARED_RESIDUAL_REGRESSION

    if use_oracle_pi or use_oracle_mu or use_oracle_sd:
        if oracle is None:
            raise MissingOracleError("oracle nuisance values required but not supplied")
        if oracle.n != n:
            raise ValidationError(f"oracle has {oracle.n} rows, dataset has {n}")

    pi = mu0 = mu1 = sd0 = sd1 = None
    if use_oracle_pi:
        pi = np.clip(oracle.pi_hat, config.clip_eps, 1.0 - config.clip_eps)
    if use_oracle_mu:
        mu0 = oracle.mu0_hat
        mu1 = oracle.mu1_hat
        if need_mu1 and mu1 is None:
            raise MissingOracleError("oracle mu1_hat required but not supplied")
    if use_oracle_sd and need_sigma:
        if oracle.sigma0_hat is None or oracle.sigma1_hat is None:
            raise MissingOracleError("oracle sigma values required but not supplied")
        sd0, sd1 = oracle.sigma0_hat, oracle.sigma1_hat

    fit_pi = not use_oracle_pi
    fit_mu = not use_oracle_mu
    y, a, x = dataset.y, dataset.a, dataset.x

    if fit_pi or fit_mu or fit_sigma:
        if config.folds == 1:
            if fit_pi:
                pi = _fit_logistic(a, x, config).predict(x)
            mu0_fit = _fit_mean_arm(y, a, x, 0, config) if (fit_mu or fit_sigma) else None
            mu1_fit = None
            if (fit_mu and need_mu1) or fit_sigma:
                mu1_fit = _fit_mean_arm(y, a, x, 1, config)
            if fit_mu:
                mu0 = mu0_fit.predict(x)
                mu1 = mu1_fit.predict(x) if need_mu1 else None
            if fit_sigma:
                rows0, rows1 = _arm_rows(a, 0), _arm_rows(a, 1)
                mu0_tr = mu0_fit.predict(x[rows0]) if fit_mu else mu0[rows0]
                mu1_tr = mu1_fit.predict(x[rows1]) if fit_mu else mu1[rows1]
                sd0 = _fit_sd_arm(y, a, x, 0, mu0_tr, config).predict(x)
                sd1 = _fit_sd_arm(y, a, x, 1, mu1_tr, config).predict(x)
        else:
            n_treated = int(a.sum())
            n_control = n - n_treated
            if config.folds > min(n_treated, n_control):
                raise FoldTooSmallError(
                    f"{config.folds} folds exceed the smaller arm "
                    f"({n_treated} treated, {n_control} controls)"
                )
            pi_out = np.empty(n) if fit_pi else None
            mu0_out = np.empty(n) if fit_mu else None
            mu1_out = np.empty(n) if (fit_mu and need_mu1) else None
            sd0_out = np.empty(n) if fit_sigma else None
            sd1_out = np.empty(n) if fit_sigma else None
            for block in _fold_blocks(n, config.folds, config.seed):
                comp = np.setdiff1d(np.arange(n), block)
                a_c, y_c, x_c = a[comp], y[comp], x[comp]
                if a_c.sum() == 0 or a_c.sum() == a_c.size:
                    raise FoldTooSmallError("a fold complement lacks one treatment arm")
                if fit_pi:
                    pi_out[block] = _fit_logistic(a_c, x_c, config).predict(x[block])
                mu0_fit = _fit_mean_arm(y_c, a_c, x_c, 0, config) if (fit_mu or fit_sigma) else None
                mu1_fit = None
                if (fit_mu and need_mu1) or fit_sigma:
                    mu1_fit = _fit_mean_arm(y_c, a_c, x_c, 1, config)
                if fit_mu:
                    mu0_out[block] = mu0_fit.predict(x[block])
                    if need_mu1:
                        mu1_out[block] = mu1_fit.predict(x[block])
                if fit_sigma:
                    r0, r1 = _arm_rows(a_c, 0), _arm_rows(a_c, 1)
                    m0 = mu0_fit.predict(x_c[r0]) if fit_mu else mu0[comp][r0]
                    m1 = mu1_fit.predict(x_c[r1]) if fit_mu else mu1[comp][r1]
                    sd0_out[block] = _fit_sd_arm(y_c, a_c, x_c, 0, m0, config).predict(x[block])
                    sd1_out[block] = _fit_sd_arm(y_c, a_c, x_c, 1, m1, config).predict(x[block])
            if fit_pi:
                pi = pi_out
            if fit_mu:
                mu0, mu1 = mu0_out, mu1_out
            if fit_sigma:
                sd0, sd1 = sd0_out, sd1_out

    if fit_mu:
        _residual_diagnostic(y, _arm_rows(a, 0), mu0[_arm_rows(a, 0)])
        if need_mu1 and mu1 is not None:
            _residual_diagnostic(y, _arm_rows(a, 1), mu1[_arm_rows(a, 1)])

    return NuisanceValues(
        pi_hat=pi,
        mu0_hat=mu0,
        mu1_hat=mu1,
        sigma0_hat=sd0 if need_sigma else None,
        sigma1_hat=sd1 if need_sigma else None,
        clip_eps=config.clip_eps,
    )
