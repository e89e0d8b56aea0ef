#!/usr/bin/env python3
"""
GLM Core
Family/link registry with working weights, the IRLS maximum-likelihood
fitter, the conditional Fisher information and the Wald test
"""

import math
from collections import namedtuple
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Tuple

import numpy as np
from scipy import linalg, special

from errors import ConvergenceError, DomainError, SingularityError
from special_functions import central_chi2_sf, noncentral_chi2_quantile

CONDITION_LIMIT = 1e12


class Family(Enum):
    NORMAL = "normal"
    BERNOULLI = "bernoulli"
    POISSON = "poisson"
    GAMMA = "gamma"
    INVERSE_GAUSSIAN = "inverse_gaussian"


class Link(Enum):
    IDENTITY = "identity"
    LOGIT = "logit"
    LOG = "log"
    INVERSE = "inverse"


# Table of constructible (family, link) pairs
SUPPORTED_PAIRS = {
    Family.NORMAL: (Link.IDENTITY,),
    Family.BERNOULLI: (Link.IDENTITY, Link.LOGIT, Link.LOG),
    Family.POISSON: (Link.IDENTITY, Link.LOG, Link.INVERSE),
    Family.GAMMA: (Link.IDENTITY, Link.LOG, Link.INVERSE),
    Family.INVERSE_GAUSSIAN: (Link.IDENTITY, Link.LOG, Link.INVERSE),
}

FAMILY_ALIASES = {
    "normal": Family.NORMAL,
    "gaussian": Family.NORMAL,
    "bernoulli": Family.BERNOULLI,
    "binomial": Family.BERNOULLI,
    "poisson": Family.POISSON,
    "gamma": Family.GAMMA,
    "inverse_gaussian": Family.INVERSE_GAUSSIAN,
    "inverse-gaussian": Family.INVERSE_GAUSSIAN,
    "inversegaussian": Family.INVERSE_GAUSSIAN,
}

LinkEvaluation = namedtuple("LinkEvaluation", ["mu", "v", "dmu_deta", "w"])


@dataclass(frozen=True)
class FamilyLink:
    """
    A (distribution, link, auxiliary parameter) descriptor.

    ``aux`` is sigma^2 for Normal and the shape k for Gamma and
    InverseGaussian; it is fixed at 1 for Bernoulli and Poisson.
    """

    family: Family
    link: Link
    aux: float = 1.0

    def __post_init__(self):
        if self.link not in SUPPORTED_PAIRS.get(self.family, ()):
            raise DomainError(
                f"unsupported family/link pair: {self.family.value}/{self.link.value}"
            )
        if not (self.aux > 0 and math.isfinite(self.aux)):
            raise DomainError(f"auxiliary parameter must be positive, got {self.aux!r}")
        if self.family in (Family.BERNOULLI, Family.POISSON) and self.aux != 1.0:
            object.__setattr__(self, "aux", 1.0)

    @classmethod
    def from_names(cls, family, link, aux=1.0):
        try:
            family_value = FAMILY_ALIASES[str(family).strip().lower()]
        except KeyError:
            raise DomainError(f"unknown family: {family!r}") from None
        try:
            link_value = Link(str(link).strip().lower())
        except ValueError:
            raise DomainError(f"unknown link: {link!r}") from None
        return cls(family_value, link_value, float(aux))

    @property
    def label(self):
        return f"{self.family.value}/{self.link.value}"

    def with_aux(self, aux):
        return replace(self, aux=float(aux))

    # -- domains -------------------------------------------------------

    def mean_in_domain(self, mu):
        mu = np.asarray(mu, dtype=float)
        finite = np.isfinite(mu)
        if self.family is Family.NORMAL:
            return finite
        if self.family is Family.BERNOULLI:
            return finite & (mu > 0) & (mu < 1)
        return finite & (mu > 0)

    def eta_bounds(self):
        """Open interval (lo, hi) of admissible linear predictor values"""
        if self.link is Link.IDENTITY:
            if self.family is Family.NORMAL:
                return (-math.inf, math.inf)
            if self.family is Family.BERNOULLI:
                return (0.0, 1.0)
            return (0.0, math.inf)
        if self.link is Link.INVERSE:
            return (0.0, math.inf)
        if self.link is Link.LOG and self.family is Family.BERNOULLI:
            return (-math.inf, 0.0)
        return (-math.inf, math.inf)

    def eta_in_domain(self, eta):
        eta = np.asarray(eta, dtype=float)
        finite = np.isfinite(eta)
        if self.link is Link.IDENTITY:
            return self.mean_in_domain(eta)
        if self.link is Link.INVERSE:
            return finite & (eta > 0)
        if self.link is Link.LOG and self.family is Family.BERNOULLI:
            return finite & (eta < 0)
        return finite

    def check_mean(self, mu):
        valid = self.mean_in_domain(mu)
        if not np.all(valid):
            bad = int(np.size(valid) - np.count_nonzero(valid))
            raise DomainError(f"{bad} mean value(s) outside the {self.family.value} mean domain")

    def check_eta(self, eta):
        valid = self.eta_in_domain(eta)
        if not np.all(valid):
            bad = int(np.size(valid) - np.count_nonzero(valid))
            raise DomainError(f"{bad} linear predictor value(s) outside the {self.label} domain")

    # -- link functions ------------------------------------------------

    def link_fn(self, mu):
        """g(mu)"""
        mu = np.asarray(mu, dtype=float)
        self.check_mean(mu)
        if self.link is Link.IDENTITY:
            eta = mu
        elif self.link is Link.LOGIT:
            eta = special.logit(mu)
        elif self.link is Link.LOG:
            eta = np.log(mu)
        else:
            eta = 1.0 / mu
        return float(eta) if eta.ndim == 0 else eta

    def linkinv(self, eta):
        """g^{-1}(eta)"""
        eta = np.asarray(eta, dtype=float)
        self.check_eta(eta)
        if self.link is Link.IDENTITY:
            mu = eta
        elif self.link is Link.LOGIT:
            mu = special.expit(eta)
        elif self.link is Link.LOG:
            mu = np.exp(eta)
        else:
            mu = 1.0 / eta
        return float(mu) if mu.ndim == 0 else mu

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.family is Family.NORMAL:
            return np.full_like(mu, self.aux)
        if self.family is Family.BERNOULLI:
            return mu * (1.0 - mu)
        if self.family is Family.POISSON:
            return mu.copy()
        if self.family is Family.GAMMA:
            return mu ** 2 / self.aux
        return mu ** 3 / self.aux

    def unit_variance(self, mu):
        """Variance function without the dispersion factor"""
        mu = np.asarray(mu, dtype=float)
        if self.family is Family.GAMMA:
            return mu ** 2
        if self.family is Family.INVERSE_GAUSSIAN:
            return mu ** 3
        return self.variance(mu)

    def dmu_deta(self, eta, mu):
        if self.link is Link.IDENTITY:
            return np.ones_like(mu)
        if self.link is Link.LOGIT:
            return mu * (1.0 - mu)
        if self.link is Link.LOG:
            return mu.copy()
        return -(mu ** 2)

    # -- likelihood ----------------------------------------------------

    def check_outcomes(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("outcomes must be finite")
        if self.family is Family.BERNOULLI and not np.all((y == 0) | (y == 1)):
            raise DomainError("Bernoulli outcomes must be 0 or 1")
        if self.family is Family.POISSON and not np.all((y >= 0) & (y == np.floor(y))):
            raise DomainError("Poisson outcomes must be nonnegative integers")
        if self.family in (Family.GAMMA, Family.INVERSE_GAUSSIAN) and not np.all(y > 0):
            raise DomainError(f"{self.family.value} outcomes must be positive")

    def loglik(self, y, mu):
        """Log-likelihood kernel (terms free of mu dropped)"""
        if self.family is Family.NORMAL:
            terms = -0.5 * (y - mu) ** 2 / self.aux
        elif self.family is Family.BERNOULLI:
            terms = special.xlogy(y, mu) + special.xlog1py(1.0 - y, -mu)
        elif self.family is Family.POISSON:
            terms = special.xlogy(y, mu) - mu
        elif self.family is Family.GAMMA:
            terms = self.aux * (-y / mu - np.log(mu))
        else:
            terms = -self.aux * (y - mu) ** 2 / (2.0 * y * mu ** 2)
        return float(np.sum(terms))


def link_eval(fl, eta):
    """
    Mean, variance, d(mu)/d(eta) and working weight at eta.

    ``w`` is computed as dmu_deta**2 / v, matching the closed forms:
    logit mu(1-mu), Poisson log mu, Gamma log k, and so on.
    """
    eta_array = np.asarray(eta, dtype=float)
    mu = np.asarray(fl.linkinv(eta_array), dtype=float)
    v = fl.variance(mu)
    dmu = fl.dmu_deta(eta_array, mu)
    w = dmu ** 2 / v
    if eta_array.ndim == 0:
        return LinkEvaluation(float(mu), float(v), float(dmu), float(w))
    return LinkEvaluation(mu, v, dmu, w)


@dataclass(frozen=True)
class FitResult:
    """Immutable outcome of irls_fit; information is n * I-hat at the fitted coefficients"""

    coefficients: np.ndarray
    information: np.ndarray
    converged: bool
    iterations: int
    loglik_trace: Tuple[float, ...]
    fl: FamilyLink
    nobs: int
    score_norm: float = field(default=float("nan"))

    @property
    def loglik(self):
        return self.loglik_trace[-1]


def _check_condition(matrix, what):
    try:
        condition = np.linalg.cond(matrix)
    except np.linalg.LinAlgError:
        condition = np.inf
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularityError(f"{what} is singular (condition number {condition:.3g})")
    return condition


def solve_symmetric(matrix, rhs, what="normal equations"):
    """Cholesky solve with a symmetric-indefinite fallback"""
    _check_condition(matrix, what)
    try:
        factor = linalg.cho_factor(matrix, lower=True, check_finite=False)
        return linalg.cho_solve(factor, rhs, check_finite=False)
    except linalg.LinAlgError:
        return linalg.solve(matrix, rhs, assume_a="sym", check_finite=False)


def _starting_coefficients(X, y, fl):
    n = len(y)
    ybar = float(np.mean(y))
    if fl.family is Family.BERNOULLI:
        start_mean = (np.sum(y) + 0.5) / (n + 1.0)
    elif fl.family is Family.NORMAL:
        start_mean = ybar
    else:
        start_mean = max(ybar, 0.1)
    start_eta = fl.link_fn(start_mean)
    coefficients, *_ = np.linalg.lstsq(X, np.full(n, start_eta), rcond=None)
    return coefficients


def _evaluate(X, coefficients, y, fl):
    eta = X @ coefficients
    evaluation = link_eval(fl, eta)
    return eta, evaluation, fl.loglik(y, evaluation.mu)


def irls_fit(design, y, fl, max_iter=100, tol=1e-10, score_tol=1e-8, max_halvings=10):
    """
    Maximum-likelihood GLM fit by iteratively reweighted least squares.

    Each iteration regresses the working response eta + (y - mu) / (dmu/deta)
    on the design with weights w, halving the step (up to ``max_halvings``
    times) whenever the log-likelihood drops or the predictor leaves the link
    domain. Stops when the relative coefficient change falls below ``tol`` or
    the score norm below ``score_tol``. A fit that runs out of iterations is
    returned with ``converged=False`` and its last iterate.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DomainError("design must be an (n, k) matrix with one outcome per row")
    n, k = X.shape
    if n < k:
        raise DomainError(f"need at least as many rows as columns, got {n} < {k}")
    fl.check_outcomes(y)
    if np.linalg.matrix_rank(X) < k:
        raise SingularityError("design matrix does not have full column rank")

    coefficients = _starting_coefficients(X, y, fl)
    eta, evaluation, loglik = _evaluate(X, coefficients, y, fl)
    trace = [loglik]
    converged = False
    iterations = 0
    score_norm = float("inf")

    for iterations in range(1, max_iter + 1):
        working = eta + (y - evaluation.mu) / evaluation.dmu_deta
        weighted = X * evaluation.w[:, None]
        target = solve_symmetric(X.T @ weighted, weighted.T @ working)
        step = target - coefficients

        accepted = None
        for halving in range(max_halvings + 1):
            candidate = coefficients + step / (2 ** halving)
            try:
                candidate_state = _evaluate(X, candidate, y, fl)
            except DomainError:
                continue
            if candidate_state[2] >= loglik - 1e-12 * (1.0 + abs(loglik)):
                accepted = (candidate, candidate_state)
                break

        if accepted is None:
            # No halving improves the likelihood: already at the optimum or stuck.
            converged = bool(np.max(np.abs(step)) <= 1e-8 * (1.0 + np.max(np.abs(coefficients))))
            break

        candidate, (eta, evaluation, loglik) = accepted
        change = np.max(np.abs(candidate - coefficients)) / max(np.max(np.abs(candidate)), 1e-300)
        coefficients = candidate
        trace.append(loglik)
        score = X.T @ ((y - evaluation.mu) * evaluation.dmu_deta / evaluation.v)
        score_norm = float(np.linalg.norm(score))
        if change < tol or score_norm < score_tol:
            converged = True
            break

    information = X.T @ (X * evaluation.w[:, None])
    information = 0.5 * (information + information.T)
    return FitResult(
        coefficients=coefficients,
        information=information,
        converged=converged,
        iterations=iterations,
        loglik_trace=tuple(trace),
        fl=fl,
        nobs=n,
        score_norm=score_norm,
    )


def estimate_shape(y, mu, fl, n_params):
    """Pearson-moment estimate of the shape k for Gamma or InverseGaussian outcomes"""
    if fl.family not in (Family.GAMMA, Family.INVERSE_GAUSSIAN):
        raise DomainError(f"shape estimation applies to Gamma and InverseGaussian, not {fl.family.value}")
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    residual_df = len(y) - n_params
    if residual_df <= 0:
        raise DomainError("not enough observations to estimate the shape")
    pearson = float(np.sum((y - mu) ** 2 / fl.unit_variance(mu)))
    if pearson <= 0:
        raise DomainError("Pearson statistic is zero; shape is not identifiable")
    return residual_df / pearson


def with_estimated_shape(fit, design, y, fl=None):
    """Refit information at the Pearson estimate of the shape parameter"""
    fl = fl or fit.fl
    X = np.asarray(design, dtype=float)
    mu = link_eval(fl, X @ fit.coefficients).mu
    shape = estimate_shape(y, mu, fl, X.shape[1])
    fitted_fl = fl.with_aux(shape)
    return replace(fit, information=fit.information * (shape / fl.aux), fl=fitted_fl)


def conditional_information(information, q, p):
    """
    Schur complement I_xx - I_xz I_zz^{-1} I_zx of the adjustor block.

    The first q rows/columns belong to adjustors, the last p to predictors.
    A Schur complement that vanishes (predictors collinear with adjustors)
    raises SingularityError.
    """
    info = np.asarray(information, dtype=float)
    if info.shape != (q + p, q + p) or p < 1 or q < 0:
        raise DomainError(f"information must be {(q + p)}x{(q + p)} with p >= 1")
    if not np.allclose(info, info.T, rtol=1e-10, atol=1e-12 * max(np.abs(info).max(), 1.0)):
        raise DomainError("information matrix must be symmetric")
    i_xx = info[q:, q:]
    if q == 0:
        return i_xx.copy()
    i_zz = info[:q, :q]
    i_zx = info[:q, q:]
    schur = i_xx - i_zx.T @ solve_symmetric(i_zz, i_zx, what="adjustor information block")
    schur = 0.5 * (schur + schur.T)
    scale = max(float(np.max(np.abs(np.diag(i_xx)))), np.finfo(float).tiny)
    if float(np.min(np.linalg.eigvalsh(schur))) <= 1e-10 * scale:
        raise SingularityError("predictor information vanishes after adjusting; predictors are collinear with adjustors")
    return schur


WaldResult = namedtuple(
    "WaldResult",
    ["statistic", "df", "p_value", "reject", "critical_value", "information_estimator"],
)


def wald_test(fit, predictor_indices, alpha=0.05):
    """
    Wald test of beta = 0 for the coefficients at ``predictor_indices``.

    The statistic is beta' I_{beta|lambda} beta using the expected information
    at the fitted coefficients; it is referred to a central chi-square with
    df = len(predictor_indices).
    """
    indices = [int(i) for i in predictor_indices]
    if not indices:
        raise DomainError("predictor index set is empty")
    if not 0 < alpha < 1:
        raise DomainError(f"significance level must lie in (0, 1), got {alpha!r}")
    if not fit.converged:
        raise ConvergenceError("Wald test requires a converged fit")
    k = len(fit.coefficients)
    if len(set(indices)) != len(indices) or min(indices) < 0 or max(indices) >= k:
        raise DomainError(f"predictor indices must be distinct and within 0..{k - 1}")

    adjustors = [i for i in range(k) if i not in indices]
    order = adjustors + indices
    permuted = fit.information[np.ix_(order, order)]
    conditional = conditional_information(permuted, len(adjustors), len(indices))
    beta = fit.coefficients[indices]
    statistic = max(float(beta @ conditional @ beta), 0.0)
    df = len(indices)
    critical = noncentral_chi2_quantile(1.0 - alpha, df, 0.0)
    return WaldResult(
        statistic=statistic,
        df=df,
        p_value=float(central_chi2_sf(statistic, df)),
        reject=statistic > critical,
        critical_value=critical,
        information_estimator="expected",
    )
