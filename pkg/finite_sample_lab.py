#!/usr/bin/env python3
"""
Finite Sample Verification
Rescale an empirical design to a target f^2, simulate studies by resampling
its rows, fit each by IRLS and compare the Wald rejection rate with the
asymptotic power
"""

import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import partial

import numpy as np
from scipy import optimize

from effect_size import DesignDraws, effect_sizes_from_draws, exact_f2
from errors import DomainError, EstimationError, InfeasibleError, SingularityError
from glm_core import Family, FamilyLink, Link, irls_fit, wald_test, with_estimated_shape
from pss_calculator import power, sample_size
from special_functions import RngStream, sample_outcome

# Step factor while bracketing the rescaling root
DELTA_GROWTH = 1.25
MAX_GROWTH_STEPS = 400

# Fitted |coefficient| above which a logistic replicate counts as separated
SEPARATION_LIMIT = 15.0


@dataclass(frozen=True, eq=False)
class EmpiricalDesign:
    """
    Rows of (x, z) treated as the population, with coefficients taken as true.

    ``z`` carries the constant 1 in its first column.
    """

    x: np.ndarray
    z: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    fl: FamilyLink

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if z.ndim != 2 or x.shape[0] != z.shape[0]:
            raise DomainError("x and z must have the same number of rows")
        if x.shape[1] != beta.shape[0] or z.shape[1] != lam.shape[0]:
            raise DomainError("coefficient lengths must match the x and z columns")
        if not np.all(z[:, 0] == 1.0):
            raise DomainError("the first adjustor column must be the constant 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "lam", lam)
        self.fl.check_eta(self.eta())

    @property
    def nrows(self):
        return self.x.shape[0]

    @property
    def n_predictors(self):
        return self.x.shape[1]

    def eta(self):
        return self.z @ self.lam + self.x @ self.beta

    def design_matrix(self):
        """Adjustor columns first, then predictors"""
        return np.column_stack([self.z, self.x])

    def scaled(self, delta):
        return replace(self, beta=delta * self.beta)

    def draws(self):
        return DesignDraws.equal_mass(self.z, self.eta(), self.fl)


def domain_limit(design):
    """Largest delta for which every row of the delta*beta design stays in the link domain"""
    lo, hi = design.fl.eta_bounds()
    base = design.z @ design.lam
    slope = design.x @ design.beta
    limit = math.inf
    up, down = slope > 0, slope < 0
    if math.isfinite(hi) and np.any(up):
        limit = min(limit, float(np.min((hi - base[up]) / slope[up])))
    if math.isfinite(lo) and np.any(down):
        limit = min(limit, float(np.min((lo - base[down]) / slope[down])))
    return limit


def rescale_beta_to_f2(design, target_f2, xtol=1e-12):
    """
    Scale delta with f^2(delta * beta) = target_f2.

    f^2 vanishes at delta = 0. Above the current f^2, delta grows by
    DELTA_GROWTH until the target is bracketed, then Brent's method finds the
    smallest root. f^2 need not be monotone in delta (logit weights vanish
    for large |eta|): when it starts falling first, the peak is located and
    InfeasibleError reports the largest reachable f^2 if it is short of the
    target. Raises DomainError carrying the limiting delta when the link
    domain ends before the target is reached.
    """
    if not target_f2 > 0:
        raise DomainError(f"target f2 must be positive, got {target_f2!r}")
    current = exact_f2(design.draws())
    if current <= 0:
        raise InfeasibleError("f2 is zero at the given coefficients; no rescaling reaches the target")

    def f2_at(delta):
        return exact_f2(design.scaled(delta).draws())

    def excess(delta):
        return f2_at(delta) - target_f2

    if current == target_f2:
        return 1.0
    if current > target_f2:
        return float(optimize.brentq(excess, 0.0, 1.0, xtol=xtol))

    limit = domain_limit(design)
    previous, lower, f_lower = 0.0, 1.0, current
    for _ in range(MAX_GROWTH_STEPS):
        upper = lower * DELTA_GROWTH
        at_limit = upper >= limit
        if at_limit:
            upper = limit * (1.0 - 1e-9)
        try:
            f_upper = f2_at(upper)
        except SingularityError:
            f_upper = math.nan
        if f_upper >= target_f2:
            return float(optimize.brentq(excess, lower, upper, xtol=xtol))
        if not f_upper > f_lower:
            # peak lies in (previous, upper), or f2 broke down past lower
            right = upper if math.isfinite(f_upper) else lower
            return _rescale_past_peak(f2_at, excess, previous, right, f_lower, lower, target_f2, xtol)
        if at_limit:
            raise DomainError(
                f"linear predictor leaves the {design.fl.label} domain at delta={limit:.6g} "
                f"before f2 reaches {target_f2}",
                limit=limit,
            )
        previous, lower, f_lower = lower, upper, f_upper
    raise InfeasibleError(
        f"f2 reaches only {f_lower:.6g} at delta={lower:.6g}, short of {target_f2}",
        max_f2=f_lower,
        delta=lower,
    )


def _rescale_past_peak(f2_at, excess, left, right, best_f2, best_delta, target_f2, xtol):
    if right > left:
        peak = optimize.minimize_scalar(
            lambda delta: -f2_at(delta), bounds=(left, right), method="bounded", options={"xatol": 1e-8},
        )
        if -peak.fun > best_f2:
            best_f2, best_delta = float(-peak.fun), float(peak.x)
    if best_f2 >= target_f2:
        return float(optimize.brentq(excess, left, best_delta, xtol=xtol))
    raise InfeasibleError(
        f"f2 peaks at {best_f2:.6g} (delta={best_delta:.6g}) and never reaches {target_f2}",
        max_f2=best_f2,
        delta=best_delta,
    )


@dataclass(frozen=True)
class PowerSimulation:
    rejection_rate: float
    mc_stderr: float
    fit_failures: int
    rejections: int
    fitted: int
    reps: int
    n: int


def _fit_failed(fit, fl):
    """
    A replicate fit fails when IRLS did not converge, or when a Bernoulli fit
    has some |coefficient| > SEPARATION_LIMIT. Under separation mu approaches y
    and the score norm can fall below its tolerance, so such fits may report
    convergence; they are counted as failures all the same.
    """
    if not fit.converged:
        return True
    return fl.family is Family.BERNOULLI and float(np.max(np.abs(fit.coefficients))) > SEPARATION_LIMIT


def run_replicate(design, n, alpha, seed, rep):
    """
    One simulated study on stream (seed, rep): resample rows, draw outcomes,
    fit and test. Returns True/False for reject/accept, None for a failed fit.
    """
    rng = RngStream(int(seed), int(rep))
    rows = rng.generator.integers(0, design.nrows, size=n)
    matrix = design.design_matrix()[rows]
    mu = design.fl.linkinv(design.eta()[rows])
    y = sample_outcome(design.fl, mu, rng)
    fl = design.fl
    try:
        fit = irls_fit(matrix, y, fl)
        if _fit_failed(fit, fl):
            return None
        if fl.family in (Family.GAMMA, Family.INVERSE_GAUSSIAN):
            fit = with_estimated_shape(fit, matrix, y, fl)
        q = design.z.shape[1]
        result = wald_test(fit, range(q, q + design.n_predictors), alpha)
    except (SingularityError, DomainError):
        return None
    return bool(result.reject)


def simulate_power(design, n, reps=2000, alpha=0.05, seed=0, workers=1):
    """
    Share of simulated studies of size n whose Wald test of beta = 0 rejects.

    Failed fits (non-converged, separated or singular; see _fit_failed) are counted in
    ``fit_failures`` and excluded from the rate.
    """
    columns = design.z.shape[1] + design.n_predictors
    if int(n) != n or n < columns + 10:
        raise DomainError(f"sample size must be an integer of at least {columns + 10}, got {n!r}")
    if int(reps) != reps or reps < 1:
        raise DomainError(f"replicate count must be a positive integer, got {reps!r}")
    replicate = partial(run_replicate, design, int(n), alpha, seed)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(replicate, range(int(reps)), chunksize=max(1, int(reps) // (4 * workers))))
    else:
        outcomes = [replicate(rep) for rep in range(int(reps))]

    failures = sum(1 for outcome in outcomes if outcome is None)
    fitted = len(outcomes) - failures
    if fitted == 0:
        raise EstimationError(f"all {reps} replicate fits failed", fit_failures=failures)
    rejections = sum(1 for outcome in outcomes if outcome)
    rate = rejections / fitted
    return PowerSimulation(
        rejection_rate=rate,
        mc_stderr=math.sqrt(rate * (1.0 - rate) / fitted),
        fit_failures=failures,
        rejections=rejections,
        fitted=fitted,
        reps=int(reps),
        n=int(n),
    )


@dataclass(frozen=True)
class CaseModel:
    fl: FamilyLink
    education_beta: tuple
    mean_y: float


# Education coefficients (Some college, HS, less than HS; College is the reference)
CASE_MODELS = {
    "normal-identity": CaseModel(FamilyLink(Family.NORMAL, Link.IDENTITY, 1.0), (0.072, 0.079, 0.076), 24.70),
    "bernoulli-logit": CaseModel(FamilyLink(Family.BERNOULLI, Link.LOGIT), (-0.121, -0.475, -0.468), 0.65),
    "bernoulli-identity": CaseModel(FamilyLink(Family.BERNOULLI, Link.IDENTITY), (-0.025, -0.106, -0.105), 0.65),
    "poisson-log": CaseModel(FamilyLink(Family.POISSON, Link.LOG), (-0.042, -0.208, -0.175), 1.49),
    "gamma-log": CaseModel(FamilyLink(Family.GAMMA, Link.LOG, 2.0), (0.072, 0.079, 0.076), 24.70),
}
EDUCATION_SHARES = (0.28, 0.36, 0.26, 0.10)  # College, Some college, HS, less than HS
AGE_SHARES = (0.34, 0.34, 0.32)
FEMALE_SHARE = 0.67


def _allocate(shares, rows, generator):
    counts = np.floor(np.asarray(shares) * rows).astype(int)
    counts[np.argmax(shares)] += rows - int(counts.sum())
    levels = np.repeat(np.arange(len(shares)), counts)
    return generator.permutation(levels)


def _solve_intercept(fl, offset, mean_y):
    if fl.link is Link.IDENTITY:
        return mean_y - float(np.mean(offset))
    centre = fl.link_fn(mean_y)

    def gap(intercept):
        return float(np.mean(fl.linkinv(intercept + offset))) - mean_y

    return float(optimize.brentq(gap, centre - 10.0, centre + 10.0, xtol=1e-14))


def synthetic_case_design(model, rows=2000, seed=0):
    """
    Survey-like design with education as predictors and age and sex as adjustors.

    Level shares match the published sample marginals; the education
    coefficients are the published adjusted estimates. Age and sex
    coefficients are not published and are set to zero; the intercept is
    solved so the mean outcome matches the published mean.
    """
    try:
        case = CASE_MODELS[model]
    except KeyError:
        raise DomainError(f"unknown case model {model!r}; expected one of {', '.join(CASE_MODELS)}") from None
    if int(rows) != rows or rows < 20:
        raise DomainError(f"synthetic design needs at least 20 rows, got {rows!r}")
    generator = RngStream(int(seed), 0).generator
    education = _allocate(EDUCATION_SHARES, int(rows), generator)
    age = _allocate(AGE_SHARES, int(rows), generator)
    female = _allocate((1.0 - FEMALE_SHARE, FEMALE_SHARE), int(rows), generator)

    x = np.column_stack([(education == level).astype(float) for level in (1, 2, 3)])
    z = np.column_stack([
        np.ones(int(rows)),
        (age == 1).astype(float),
        (age == 2).astype(float),
        female.astype(float),
    ])
    beta = np.asarray(case.education_beta)
    intercept = _solve_intercept(case.fl, x @ beta, case.mean_y)
    lam = np.array([intercept, 0.0, 0.0, 0.0])
    return EmpiricalDesign(x=x, z=z, beta=beta, lam=lam, fl=case.fl)


@dataclass(frozen=True)
class VerificationResult:
    delta: float
    f2: float
    f2_phi: float
    f2_r: float
    re_phi: object
    re_r: object
    n: int
    power_f2: float
    power_f2_phi: float
    power_f2_r: float
    rejection_rate: float
    mc_stderr: float
    fit_failures: int
    reps: int

    def as_row(self):
        return asdict(self)


def verify_design(design, target_f2=0.02, target_power=0.8, alpha=0.05, reps=2000, seed=0, workers=1, verbose=False):
    """
    Rescale to the target f^2, size the study for the target power from the
    exact f^2, simulate it and report the power each measure predicts next to
    the simulated rejection rate.
    """
    delta = rescale_beta_to_f2(design, target_f2)
    rescaled = design.scaled(delta)
    summary = effect_sizes_from_draws(rescaled.draws())
    p = design.n_predictors
    n = sample_size(target_power, summary.f2, p, alpha)
    if verbose:
        print(f"🔧 {design.fl.label}: delta={delta:.6g}, f2={summary.f2:.6g}, n={n}", file=sys.stderr)
    simulation = simulate_power(rescaled, n, reps, alpha, seed, workers)
    if verbose:
        print(
            f"📊 simulated power {simulation.rejection_rate:.4f} "
            f"(± {simulation.mc_stderr:.4f}, {simulation.fit_failures} failed fit(s))",
            file=sys.stderr,
        )
    return VerificationResult(
        delta=delta,
        f2=summary.f2,
        f2_phi=summary.f2_phi,
        f2_r=summary.f2_r,
        re_phi=summary.re_phi,
        re_r=summary.re_r,
        n=n,
        power_f2=power(n, summary.f2, p, alpha),
        power_f2_phi=power(n, summary.f2_phi, p, alpha),
        power_f2_r=power(n, summary.f2_r, p, alpha),
        rejection_rate=simulation.rejection_rate,
        mc_stderr=simulation.mc_stderr,
        fit_failures=simulation.fit_failures,
        reps=simulation.reps,
    )
