#!/usr/bin/env python3
"""
Special Functions and Seeded Samplers
Normal, chi-square and beta distribution functions plus the random streams
every simulation draws from
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from errors import DomainError

# Residual tolerance for quantile root finding
QUANTILE_XTOL = 1e-14


def _as_output(values):
    """Return a Python float for scalar input, an array otherwise"""
    values = np.asarray(values, dtype=float)
    return float(values) if values.ndim == 0 else values


@dataclass(frozen=True)
class RngStream:
    """
    A reproducible random stream identified by (seed, stream_id).

    The generator is PCG64 seeded from ``SeedSequence(seed, spawn_key=(stream_id,))``,
    which hashes seed and stream id together, so identical pairs replay the same
    sequence on any host and distinct stream ids give independent streams.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) < 2**64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
        sequence = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        object.__setattr__(self, "generator", np.random.Generator(np.random.PCG64(sequence)))

    def child(self, stream_id):
        """Stream with the same seed and another stream id"""
        return RngStream(self.seed, stream_id)


def normal_cdf(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("normal_cdf requires finite input")
    return _as_output(special.ndtr(z))


def normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0) & (p < 1)):
        raise DomainError("normal_quantile requires 0 < p < 1")
    return _as_output(special.ndtri(p))


def _check_df(p):
    if int(p) != p or p < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {p!r}")
    return int(p)


def central_chi2_cdf(x, p):
    """Central chi-square CDF as the regularized lower incomplete gamma P(p/2, x/2)"""
    p = _check_df(p)
    x = np.asarray(x, dtype=float)
    return _as_output(np.where(x <= 0, 0.0, special.gammainc(p / 2.0, np.maximum(x, 0.0) / 2.0)))


def central_chi2_sf(x, p):
    """Upper tail Q(p/2, x/2), accurate where the CDF is close to one"""
    p = _check_df(p)
    x = np.asarray(x, dtype=float)
    return _as_output(np.where(x <= 0, 1.0, special.gammaincc(p / 2.0, np.maximum(x, 0.0) / 2.0)))


def noncentral_chi2_cdf(x, p, ncp):
    p = _check_df(p)
    if ncp < 0 or not math.isfinite(ncp):
        raise DomainError(f"noncentrality must be a finite nonnegative number, got {ncp!r}")
    if ncp == 0:
        return central_chi2_cdf(x, p)
    x = np.asarray(x, dtype=float)
    values = np.where(x <= 0, 0.0, stats.ncx2.cdf(np.maximum(x, 0.0), p, ncp))
    return _as_output(np.clip(values, 0.0, 1.0))


def noncentral_chi2_sf(x, p, ncp):
    """1 - noncentral_chi2_cdf, evaluated on the upper tail directly"""
    p = _check_df(p)
    if ncp < 0 or not math.isfinite(ncp):
        raise DomainError(f"noncentrality must be a finite nonnegative number, got {ncp!r}")
    if ncp == 0:
        return central_chi2_sf(x, p)
    x = np.asarray(x, dtype=float)
    values = np.where(x <= 0, 1.0, stats.ncx2.sf(np.maximum(x, 0.0), p, ncp))
    return _as_output(np.clip(values, 0.0, 1.0))


def noncentral_chi2_quantile(q, p, ncp):
    """
    Inverse of noncentral_chi2_cdf in x.

    The central case inverts the incomplete gamma directly; otherwise the
    root is bracketed on [0, p + ncp + 20*sqrt(2p + 4ncp) + 20] and solved
    with Brent's method.
    """
    p = _check_df(p)
    if not 0 < q < 1:
        raise DomainError(f"quantile level must lie in (0, 1), got {q!r}")
    if ncp < 0 or not math.isfinite(ncp):
        raise DomainError(f"noncentrality must be a finite nonnegative number, got {ncp!r}")
    if ncp == 0:
        return float(2.0 * special.gammaincinv(p / 2.0, q))

    upper = p + ncp + 20.0 * math.sqrt(2.0 * p + 4.0 * ncp) + 20.0
    while noncentral_chi2_cdf(upper, p, ncp) < q:
        upper *= 2.0
    return float(optimize.brentq(
        lambda x: noncentral_chi2_cdf(x, p, ncp) - q,
        0.0, upper, xtol=QUANTILE_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500,
    ))


def beta_quantile(u, a, b):
    if a <= 0 or b <= 0:
        raise DomainError(f"beta shapes must be positive, got a={a!r}, b={b!r}")
    u = np.asarray(u, dtype=float)
    if not np.all((u >= 0) & (u <= 1)):
        raise DomainError("beta_quantile requires 0 <= u <= 1")
    return _as_output(special.betaincinv(a, b, u))


def sample_correlated_betas(a_x, b_x, a_z, b_z, rho, n, rng):
    """
    Draw n pairs (B_x, B_z) with Beta marginals joined by a Gaussian copula.

    Returns an (n, 2) array, column 0 holding B_x and column 1 B_z.
    """
    if not -1 < rho < 1:
        raise DomainError(f"copula correlation must lie in (-1, 1), got {rho!r}")
    for shape in (a_x, b_x, a_z, b_z):
        if shape <= 0:
            raise DomainError(f"beta shapes must be positive, got {shape!r}")
    normals = rng.generator.standard_normal((int(n), 2))
    correlated = rho * normals[:, 0] + math.sqrt(1.0 - rho * rho) * normals[:, 1]
    u_x = special.ndtr(normals[:, 0])
    u_z = special.ndtr(correlated)
    return np.column_stack([
        special.betaincinv(a_x, b_x, u_x),
        special.betaincinv(a_z, b_z, u_z),
    ])


def sample_outcome(fl, mu, rng):
    """
    Draw outcomes from the family of ``fl`` with mean ``mu``.

    ``mu`` may be a scalar or an array; the variance follows the family's
    variance function with the auxiliary parameter of ``fl`` (sigma^2 for
    Normal, shape k for Gamma and InverseGaussian).
    """
    mu = np.asarray(mu, dtype=float)
    fl.check_mean(mu)
    generator = rng.generator
    family = fl.family.value
    if family == "normal":
        draws = generator.normal(mu, math.sqrt(fl.aux))
    elif family == "bernoulli":
        draws = generator.binomial(1, mu).astype(float)
    elif family == "poisson":
        draws = generator.poisson(mu).astype(float)
    elif family == "gamma":
        draws = generator.gamma(fl.aux, mu / fl.aux)
    elif family == "inverse_gaussian":
        draws = generator.wald(mu, fl.aux)
    else:
        raise DomainError(f"no sampler for family {family!r}")
    return _as_output(draws)
