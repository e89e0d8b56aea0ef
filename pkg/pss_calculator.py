#!/usr/bin/env python3
"""
Power and Sample Size Calculator
Asymptotic Wald-test power from the noncentral chi-square law, the sample
size reaching a target power, and the power error caused by a relative error
in the noncentrality
"""

import math
from dataclasses import dataclass
from typing import Optional

import pandas as pd
from scipy import optimize

from effect_size import f2_phi_approx, f2_r_approx, w1_for_mean
from errors import DomainError, InfeasibleError
from special_functions import noncentral_chi2_quantile, noncentral_chi2_sf

TABLE1_TARGETS = (0.60, 0.64, 0.68, 0.72, 0.76, 0.80, 0.84, 0.88)
TABLE1_REL_ERRORS = (-0.15, -0.10, -0.05, 0.05, 0.10, 0.15)


def _check_level(alpha):
    if not 0 < alpha < 1:
        raise DomainError(f"significance level must lie in (0, 1), got {alpha!r}")


def _check_df(p):
    if int(p) != p or p < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {p!r}")


def _check_target(q_star, alpha):
    _check_level(alpha)
    if not alpha < q_star < 1:
        raise DomainError(f"target power must lie in ({alpha}, 1), got {q_star!r}")


@dataclass(frozen=True)
class PowerQuery:
    """One power or sample-size question; exactly one of n and q_star is set"""

    alpha: float = 0.05
    p: int = 1
    f2_tilde: float = 0.0
    n: Optional[int] = None
    q_star: Optional[float] = None

    def __post_init__(self):
        _check_level(self.alpha)
        _check_df(self.p)
        if self.f2_tilde < 0 or not math.isfinite(self.f2_tilde):
            raise DomainError(f"f2 must be a finite nonnegative number, got {self.f2_tilde!r}")
        if (self.n is None) == (self.q_star is None):
            raise DomainError("a power query needs exactly one of n and q_star")
        if self.n is not None and (int(self.n) != self.n or self.n < 1):
            raise DomainError(f"sample size must be a positive integer, got {self.n!r}")
        if self.q_star is not None:
            _check_target(self.q_star, self.alpha)

    def solve(self):
        """Power for a given n, or the sample size for a given target"""
        if self.n is not None:
            return power(self.n, self.f2_tilde, self.p, self.alpha)
        return sample_size(self.q_star, self.f2_tilde, self.p, self.alpha)


def critical_value(p=1, alpha=0.05):
    """(1 - alpha) quantile of the central chi-square with p degrees of freedom"""
    _check_level(alpha)
    return noncentral_chi2_quantile(1.0 - alpha, p, 0.0)


def power_at_noncentrality(ncp, p=1, alpha=0.05):
    if ncp < 0 or not math.isfinite(ncp):
        raise DomainError(f"noncentrality must be a finite nonnegative number, got {ncp!r}")
    return noncentral_chi2_sf(critical_value(p, alpha), p, ncp)


def power(n, f2_tilde, p=1, alpha=0.05):
    """Asymptotic power of the level-alpha Wald test at sample size n"""
    if int(n) != n or n < 1:
        raise DomainError(f"sample size must be a positive integer, got {n!r}")
    if f2_tilde < 0 or not math.isfinite(f2_tilde):
        raise DomainError(f"f2 must be a finite nonnegative number, got {f2_tilde!r}")
    return power_at_noncentrality(n * f2_tilde, p, alpha)


def noncentrality_for_power(q_star, p=1, alpha=0.05):
    """Noncentrality nu* at which the test reaches power q_star"""
    _check_df(p)
    _check_target(q_star, alpha)
    critical = critical_value(p, alpha)

    def shortfall(ncp):
        return noncentral_chi2_sf(critical, p, ncp) - q_star

    upper = 10.0
    while shortfall(upper) < 0:
        upper *= 2.0
    return float(optimize.brentq(shortfall, 0.0, upper, xtol=1e-12, rtol=1e-14, maxiter=500))


def sample_size(q_star, f2_tilde, p=1, alpha=0.05):
    """Smallest n whose power reaches q_star"""
    if f2_tilde <= 0:
        raise InfeasibleError(f"no finite sample size reaches power {q_star} when f2 is {f2_tilde!r}")
    nu = noncentrality_for_power(q_star, p, alpha)
    n = max(1, math.ceil(nu / f2_tilde))
    # ceil(nu/f2) can sit one off the boundary after rounding in nu
    while power(n, f2_tilde, p, alpha) < q_star:
        n += 1
    while n > 1 and power(n - 1, f2_tilde, p, alpha) >= q_star:
        n -= 1
    return n


def power_error_table(targets=TABLE1_TARGETS, rel_errors=TABLE1_REL_ERRORS, p=1, alpha=0.05):
    """
    Power difference (percentage points) when the true noncentrality is
    nu*(1 + re) but the design targeted nu*.

    Rows are target powers, columns relative errors, both labelled in percent.
    """
    for re in rel_errors:
        if 1.0 + re <= 0:
            raise DomainError(f"relative error must exceed -100%, got {re!r}")
    rows = []
    for q_star in targets:
        nu = noncentrality_for_power(q_star, p, alpha)
        row = []
        for re in rel_errors:
            if re == 0:
                row.append(0.0)
            else:
                row.append(100.0 * (power_at_noncentrality(nu * (1.0 + re), p, alpha) - q_star))
        rows.append(row)
    table = pd.DataFrame(
        rows,
        index=pd.Index([round(100.0 * q, 6) for q in targets], name="target_power_pct"),
        columns=pd.Index([round(100.0 * re, 6) for re in rel_errors], name="rel_error_pct"),
    )
    return table


def approximate_f2(phi=None, mean_y=None, fl=None, pseudo_r2=None):
    """
    The f^2 to plan with, from the solicited effect size.

    Either phi together with the anticipated mean outcome and the GLM, or a
    partial pseudo-R^2 alone.
    """
    if pseudo_r2 is not None:
        if phi is not None:
            raise DomainError("give either phi or pseudo_r2, not both")
        return f2_r_approx(pseudo_r2)
    if phi is None or mean_y is None or fl is None:
        raise DomainError("phi needs mean_y and a family/link to set the weight")
    return f2_phi_approx(phi, w1_for_mean(fl, mean_y))


def power_comparison(f2, f2_phi, f2_r, p=1, alpha=0.05, target=0.8):
    """
    Sample size chosen from each approximation and the power it truly gives.

    ``true_power`` uses the exact f2 at the chosen n; ``power_difference`` is
    true_power - target.
    """
    rows = []
    for measure, planned in (("f2", f2), ("f2_phi", f2_phi), ("f2_r", f2_r)):
        n = sample_size(target, planned, p, alpha)
        achieved = power(n, f2, p, alpha)
        rows.append({
            "measure": measure,
            "f2_tilde": planned,
            "n": n,
            "true_power": achieved,
            "power_difference": achieved - target,
        })
    return pd.DataFrame(rows, columns=["measure", "f2_tilde", "n", "true_power", "power_difference"])
