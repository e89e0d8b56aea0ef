#!/usr/bin/env python3
"""
Effect Size Measures
Weighted projection of the linear predictor on the adjustors, the phi and
partial pseudo-R^2 measures, the exact noncentrality f^2 and the relative
errors of its two approximations
"""

import math
from collections import namedtuple
from dataclasses import asdict, dataclass, field

import numpy as np

from errors import DegenerateApproximationError, DomainError
from glm_core import link_eval, solve_symmetric

MASS_TOLERANCE = 1e-12
# Residuals below this (relative to the predictor scale) are exact zeros
RESIDUAL_SNAP = 1e-12

W1_CONVENTIONS = ("mean_y", "reference")


@dataclass(frozen=True, eq=False)
class DesignDraws:
    """
    A finite weighted collection of (z, eta) rows.

    ``z`` is an (n, q) adjustor matrix whose first column is the constant 1,
    ``eta`` the linear predictor per row and ``mass`` the probability of
    each row. All expectations in this module are mass-weighted sums over
    these rows, so Monte Carlo draws and exhaustive discrete designs are
    handled identically.
    """

    z: np.ndarray
    eta: np.ndarray
    mass: np.ndarray
    fl: object

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.z, dtype=float))
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        mass = np.asarray(self.mass, dtype=float).reshape(-1)
        if z.shape[0] != eta.shape[0] or mass.shape[0] != eta.shape[0]:
            raise DomainError("z, eta and mass must have one entry per row")
        if eta.shape[0] == 0:
            raise DomainError("design draws must contain at least one row")
        if not np.all(z[:, 0] == 1.0):
            raise DomainError("every adjustor vector must begin with the constant 1")
        if np.any(mass < 0) or abs(float(np.sum(mass)) - 1.0) > MASS_TOLERANCE:
            raise DomainError("row masses must be nonnegative and sum to 1")
        valid = self.fl.eta_in_domain(eta)
        if not np.all(valid):
            first = int(np.flatnonzero(~valid)[0])
            raise DomainError(
                f"{int(np.count_nonzero(~valid))} linear predictor value(s) outside "
                f"the {self.fl.label} domain (first at row {first})"
            )
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def equal_mass(cls, z, eta, fl):
        n = len(np.asarray(eta).reshape(-1))
        return cls(z, eta, np.full(n, 1.0 / n), fl)

    @property
    def size(self):
        return self.eta.shape[0]


Projection = namedtuple("Projection", ["kappa", "eta_z", "condition_number"])


def weighted_projection(draws):
    """
    Best w-weighted linear predictor of eta from the adjustors.

    Solves E[w z z'] kappa = E[w eta z] and returns kappa, eta_z = z'kappa per
    row and the condition number of the moment matrix.
    """
    w = np.atleast_1d(link_eval(draws.fl, draws.eta).w)
    weights = draws.mass * w
    moments = draws.z.T @ (draws.z * weights[:, None])
    rhs = draws.z.T @ (weights * draws.eta)
    kappa = solve_symmetric(moments, rhs, what="weighted adjustor moment matrix")
    return Projection(kappa, draws.z @ kappa, float(np.linalg.cond(moments)))


def _residuals(draws, projection):
    residual = draws.eta - projection.eta_z
    scale = 1.0 + float(np.max(np.abs(draws.eta)))
    if float(np.max(np.abs(residual))) <= RESIDUAL_SNAP * scale:
        return np.zeros_like(residual), draws.eta.copy()
    return residual, projection.eta_z


def f2_phi_approx(phi, w1):
    """w1 * phi^2 / 4"""
    if phi < 0 or not math.isfinite(phi):
        raise DomainError(f"phi must be a finite nonnegative number, got {phi!r}")
    if not w1 > 0:
        raise DomainError(f"w1 must be positive, got {w1!r}")
    return w1 * phi * phi / 4.0


def f2_r_approx(pseudo_r2):
    """pseudo_r2 / (1 - pseudo_r2)"""
    if not 0 <= pseudo_r2 < 1:
        raise DomainError(f"pseudo-R^2 must lie in [0, 1), got {pseudo_r2!r}")
    return pseudo_r2 / (1.0 - pseudo_r2)


RelativeErrors = namedtuple("RelativeErrors", ["re_phi", "re_r"])


def relative_errors(f2, f2_phi, f2_r):
    """Signed errors of f2 relative to each approximation; None where the approximation is 0"""
    re_phi = (f2 - f2_phi) / f2_phi if f2_phi > 0 else None
    re_r = (f2 - f2_r) / f2_r if f2_r > 0 else None
    return RelativeErrors(re_phi, re_r)


def w1_for_mean(fl, mean_y):
    """Working weight at eta = g(mean_y)"""
    return link_eval(fl, fl.link_fn(float(mean_y))).w


@dataclass(frozen=True)
class EffectSummary:
    phi: float
    pseudo_r2: float
    f2: float
    f2_phi: float
    f2_r: float
    re_phi: object
    re_r: object
    mean_y: float
    w1: float
    moment_condition: float = field(default=float("nan"), compare=False)

    def as_row(self):
        row = asdict(self)
        row.pop("moment_condition")
        return row


def effect_sizes_from_draws(draws, w1_convention="mean_y", ref_mean=None):
    """
    Effect measures and approximation errors for a set of design draws.

    phi is twice the mass-weighted population sd of eta - eta_z, f2 is
    E[w (eta - eta_z)^2] and the pseudo-R^2 is m / (1 + m) with
    m = E[(mu - mu_z)^2 / v]. ``w1_convention`` selects where the constant
    weight of the phi approximation is evaluated: at g(E[mu]) ("mean_y") or
    at g(ref_mean) ("reference").
    """
    if w1_convention not in W1_CONVENTIONS:
        raise DomainError(f"unknown w1 convention {w1_convention!r}; expected one of {W1_CONVENTIONS}")
    projection = weighted_projection(draws)
    residual, eta_z = _residuals(draws, projection)
    evaluation = link_eval(draws.fl, draws.eta)
    mu = np.atleast_1d(evaluation.mu)
    v = np.atleast_1d(evaluation.v)
    w = np.atleast_1d(evaluation.w)
    mass = draws.mass

    centered = residual - float(mass @ residual)
    phi = 2.0 * math.sqrt(max(float(mass @ centered ** 2), 0.0))
    f2 = float(mass @ (w * residual ** 2))

    valid = draws.fl.eta_in_domain(eta_z)
    if not np.all(valid):
        first = int(np.flatnonzero(~valid)[0])
        raise DomainError(
            f"adjustor-only predictor leaves the {draws.fl.label} domain at row {first} "
            f"(eta_z={float(eta_z[first]):.6g}); mu_z is undefined"
        )
    mu_z = np.atleast_1d(draws.fl.linkinv(eta_z))
    m = float(mass @ ((mu - mu_z) ** 2 / v))
    pseudo_r2 = m / (1.0 + m)
    f2_r = f2_r_approx(pseudo_r2)

    mean_y = float(mass @ mu)
    if w1_convention == "reference":
        if ref_mean is None:
            raise DomainError("the reference w1 convention needs ref_mean")
        w1 = w1_for_mean(draws.fl, ref_mean)
    else:
        w1 = w1_for_mean(draws.fl, mean_y)
    f2_phi = f2_phi_approx(phi, w1)

    if f2 > 0 and (f2_phi == 0 or f2_r == 0):
        raise DegenerateApproximationError(
            f"approximation vanishes while f2={f2:.6g} is positive "
            f"(f2_phi={f2_phi:.6g}, f2_r={f2_r:.6g})"
        )
    errors = relative_errors(f2, f2_phi, f2_r)
    return EffectSummary(
        phi=phi,
        pseudo_r2=pseudo_r2,
        f2=f2,
        f2_phi=f2_phi,
        f2_r=f2_r,
        re_phi=errors.re_phi,
        re_r=errors.re_r,
        mean_y=mean_y,
        w1=w1,
        moment_condition=projection.condition_number,
    )


def exact_f2(draws):
    """f^2 = E[w (eta - eta_z)^2] without evaluating mu_z"""
    projection = weighted_projection(draws)
    residual, _ = _residuals(draws, projection)
    w = np.atleast_1d(link_eval(draws.fl, draws.eta).w)
    return float(draws.mass @ (w * residual ** 2))


DecompositionTerms = namedtuple("DecompositionTerms", ["phi_term", "weight_term", "mean_term"])


def decomposition_terms(draws, w1):
    """
    Split f^2 around a constant weight w1 > 0.

    The three terms sum to f^2: w1 phi^2 / 4, E[(w - w1)(eta - eta_z)^2]
    and E[(w - w1)(eta - eta_z)]^2 / w1.
    """
    if not w1 > 0:
        raise DomainError(f"w1 must be positive, got {w1!r}")
    projection = weighted_projection(draws)
    residual, _ = _residuals(draws, projection)
    w = np.atleast_1d(link_eval(draws.fl, draws.eta).w)
    mass = draws.mass
    mean_residual = float(mass @ residual)
    variance = float(mass @ (residual - mean_residual) ** 2)
    return DecompositionTerms(
        phi_term=w1 * variance,
        weight_term=float(mass @ ((w - w1) * residual ** 2)),
        mean_term=float(mass @ ((w - w1) * residual)) ** 2 / w1,
    )


def weighted_r2(draws):
    """
    Share of the weighted mean squared error of the linearized outcome
    explained by the predictors beyond the adjustors.

    The linearized outcome is eta + (Y - mu) d(eta)/d(mu); its conditional
    weighted error E[w v (d eta / d mu)^2] is taken analytically.
    """
    projection = weighted_projection(draws)
    residual, _ = _residuals(draws, projection)
    evaluation = link_eval(draws.fl, draws.eta)
    w = np.atleast_1d(evaluation.w)
    v = np.atleast_1d(evaluation.v)
    dmu = np.atleast_1d(evaluation.dmu_deta)
    wmse = float(draws.mass @ (w * v / dmu ** 2))
    wmse_adjustors = float(draws.mass @ (w * residual ** 2)) + wmse
    return (wmse_adjustors - wmse) / wmse_adjustors
