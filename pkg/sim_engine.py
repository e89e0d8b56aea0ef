#!/usr/bin/env python3
"""
Relative Error Simulation Engine
Beta-copula scenarios for the linear predictor, grid sweeps over scenario
parameters, and the Latin hypercube / partial rank correlation sensitivity
analysis of the relative errors
"""

import hashlib
import itertools
import math
import sys
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy import stats

from design_io import write_csv
from effect_size import W1_CONVENTIONS, DesignDraws, effect_sizes_from_draws
from errors import ConfigError, DomainError, PssError, SingularityError
from glm_core import FamilyLink, Family, Link
from special_functions import RngStream, sample_correlated_betas

SUMMARY_COLUMNS = ["phi", "pseudo_r2", "f2", "f2_phi", "f2_r", "re_phi", "re_r", "mean_y"]
SWEEP_COLUMNS = [
    "family", "link", "aux", "a_x", "b_x", "a_z", "b_z", "s_x", "s_z", "rho", "ref_mean",
    "n_mc", "seed", *SUMMARY_COLUMNS, "dropped_rows", "s_x2", "s_z2",
]
AXIS_NAMES = ("a_x", "b_x", "a_z", "b_z", "s_x", "s_z", "s_x2", "s_z2", "rho", "ref_mean", "aux", "n_mc", "seed")
MEASURES = ("re_phi", "re_r")
ZERO_MARKER = "-"
# Responses within this of zero everywhere are reported with the zero marker
ZERO_TOLERANCE = 1e-10


def beta_moments(a, b):
    """Mean and standard deviation of Beta(a, b)"""
    mean = a / (a + b)
    sd = math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))
    return mean, sd


@dataclass(frozen=True)
class ScenarioConfig:
    """
    One simulated design: eta = g(ref_mean) + c_z (B_z - E B_z) + c_x (B_x - E B_x)

    s_x and s_z are the standard deviations of the two Beta contributions.
    """

    fl: FamilyLink
    ref_mean: float
    a_x: float = 1.0
    b_x: float = 1.0
    a_z: float = 1.0
    b_z: float = 1.0
    s_x: float = 0.1
    s_z: float = 0.1
    rho: float = 0.0
    n_mc: int = 50000
    seed: int = 0
    stream_id: int = 0
    w1_convention: str = "mean_y"
    drop_invalid: bool = False

    def __post_init__(self):
        problems = []
        for name in ("a_x", "b_x", "a_z", "b_z"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                problems.append(f"{name} must be positive (got {value!r})")
        for name in ("s_x", "s_z"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                problems.append(f"{name} must be nonnegative (got {value!r})")
        if not -1 < self.rho < 1:
            problems.append(f"rho must lie in (-1, 1) (got {self.rho!r})")
        if not bool(self.fl.mean_in_domain(self.ref_mean)):
            problems.append(f"ref_mean {self.ref_mean!r} is outside the {self.fl.family.value} mean domain")
        if int(self.n_mc) != self.n_mc or self.n_mc < 2:
            problems.append(f"n_mc must be an integer >= 2 (got {self.n_mc!r})")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            problems.append(f"seed must be an unsigned 64-bit integer (got {self.seed!r})")
        if self.w1_convention not in W1_CONVENTIONS:
            problems.append(f"w1_convention must be one of {W1_CONVENTIONS} (got {self.w1_convention!r})")
        if problems:
            raise ConfigError("invalid scenario: " + "; ".join(problems))

    def parameter_key(self):
        """Every input that shapes the draws, in a fixed order"""
        return (
            self.fl.family.value, self.fl.link.value, float(self.fl.aux),
            float(self.a_x), float(self.b_x), float(self.a_z), float(self.b_z),
            float(self.s_x), float(self.s_z), float(self.rho), float(self.ref_mean),
            int(self.n_mc),
        )

    def echo(self):
        return {
            "family": self.fl.family.value,
            "link": self.fl.link.value,
            "aux": self.fl.aux,
            "a_x": self.a_x,
            "b_x": self.b_x,
            "a_z": self.a_z,
            "b_z": self.b_z,
            "s_x": self.s_x,
            "s_z": self.s_z,
            "rho": self.rho,
            "ref_mean": self.ref_mean,
            "n_mc": int(self.n_mc),
            "seed": int(self.seed),
        }


def cell_stream_id(cfg):
    """Stream id hashed from the full parameter tuple of a scenario"""
    digest = hashlib.sha256(repr(cfg.parameter_key()).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def with_axis_value(cfg, name, value):
    """Scenario with one named parameter replaced"""
    if name not in AXIS_NAMES:
        raise ConfigError(f"unknown sweep axis {name!r}; expected one of {', '.join(AXIS_NAMES)}")
    if name in ("s_x2", "s_z2"):
        if value < 0:
            raise ConfigError(f"{name} must be nonnegative (got {value!r})")
        return replace(cfg, **{name[:-1]: math.sqrt(value)})
    if name == "aux":
        return replace(cfg, fl=cfg.fl.with_aux(value))
    if name in ("n_mc", "seed"):
        return replace(cfg, **{name: int(value)})
    return replace(cfg, **{name: float(value)})


def build_scenario(cfg, rng=None):
    """
    Draw n_mc equal-mass rows with z = (1, B_z) and the scenario's eta.

    Draws whose eta leaves the link domain raise DomainError, or are removed
    (remaining mass renormalized) when ``cfg.drop_invalid`` is set.
    """
    rng = rng or RngStream(int(cfg.seed), int(cfg.stream_id))
    pairs = sample_correlated_betas(cfg.a_x, cfg.b_x, cfg.a_z, cfg.b_z, cfg.rho, cfg.n_mc, rng)
    b_x, b_z = pairs[:, 0], pairs[:, 1]
    mean_x, sd_x = beta_moments(cfg.a_x, cfg.b_x)
    mean_z, sd_z = beta_moments(cfg.a_z, cfg.b_z)
    iota = cfg.fl.link_fn(cfg.ref_mean)
    eta = iota + (cfg.s_z / sd_z) * (b_z - mean_z) + (cfg.s_x / sd_x) * (b_x - mean_x)

    valid = cfg.fl.eta_in_domain(eta)
    if not np.all(valid):
        bad = int(np.count_nonzero(~valid))
        if not cfg.drop_invalid or bad == len(eta):
            raise DomainError(f"{bad} of {len(eta)} draws leave the {cfg.fl.label} domain", violations=bad)
        eta, b_z = eta[valid], b_z[valid]
    z = np.column_stack([np.ones_like(b_z), b_z])
    return DesignDraws.equal_mass(z, eta, cfg.fl)


ScenarioResult = namedtuple("ScenarioResult", ["config", "summary", "dropped_rows", "moment_condition"])


def run_scenario(cfg):
    draws = build_scenario(cfg)
    summary = effect_sizes_from_draws(draws, cfg.w1_convention, cfg.ref_mean)
    return ScenarioResult(cfg, summary, int(cfg.n_mc) - draws.size, summary.moment_condition)


def result_row(result):
    row = result.config.echo()
    summary = result.summary.as_row()
    row.update({name: summary[name] for name in SUMMARY_COLUMNS})
    row["dropped_rows"] = result.dropped_rows
    row["s_x2"] = result.config.s_x ** 2
    row["s_z2"] = result.config.s_z ** 2
    return row


def _evaluate_cell(cfg):
    return result_row(run_scenario(cfg))


def _map_cells(function, configs, workers):
    if workers and workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, configs))
    return [function(cfg) for cfg in configs]


def grid_configs(base, axes):
    """Scenario per Cartesian-product cell, each on its own hashed stream"""
    axes = dict(axes or {})
    for name in axes:
        if name not in AXIS_NAMES:
            raise ConfigError(f"unknown sweep axis {name!r}; expected one of {', '.join(AXIS_NAMES)}")
    configs = []
    for values in itertools.product(*axes.values()):
        cfg = base
        for name, value in zip(axes, values):
            cfg = with_axis_value(cfg, name, value)
        configs.append(replace(cfg, stream_id=cell_stream_id(cfg)))
    return configs


def sweep_frame(base, axes, workers=1, verbose=False):
    """One row per grid cell, in cell order"""
    configs = grid_configs(base, axes)
    if verbose:
        print(f"🚀 Evaluating {len(configs)} scenario(s) with {workers} worker(s)", file=sys.stderr)
    rows = _map_cells(_evaluate_cell, configs, workers)
    if verbose:
        print(f"✅ {len(rows)} scenario(s) evaluated", file=sys.stderr)
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def sweep_grid(base, axes, output=None, workers=1, metadata=None, verbose=False):
    """Evaluate the grid and write it as CSV to ``output``; returns the row count"""
    frame = sweep_frame(base, axes, workers, verbose)
    if output is not None:
        write_csv(frame, output, metadata or {})
    return len(frame)


@dataclass(frozen=True)
class FigurePreset:
    fl: FamilyLink
    ref_mean: float
    s2_range: tuple
    ref_means: tuple
    drop_invalid: bool = False

    def s2_values(self, count=5):
        return tuple(float(v) for v in np.linspace(self.s2_range[0], self.s2_range[1], count))


FIGURE_PRESETS = {
    "logistic": FigurePreset(FamilyLink(Family.BERNOULLI, Link.LOGIT), 0.25, (0.01, 0.09), (0.15, 0.25, 0.35)),
    "linear-probability": FigurePreset(
        FamilyLink(Family.BERNOULLI, Link.IDENTITY), 0.25, (0.0002, 0.0018), (0.15, 0.25, 0.35), drop_invalid=True,
    ),
    "poisson": FigurePreset(FamilyLink(Family.POISSON, Link.LOG), 1.0, (0.002, 0.018), (0.5, 1.0, 1.5)),
    "gamma": FigurePreset(FamilyLink(Family.GAMMA, Link.LOG, 2.0), 4.0, (0.001, 0.009), (2.0, 4.0, 6.0)),
}
FIGURE_VARIANTS = ("shape", "adjustor", "mean-rho")
SHAPE_LEVELS = (0.5, 1.0, 1.5)


def figure_grid(name, variant="shape", n_mc=50000, seed=0):
    """
    Base scenario and axes for one of the relative-error figures.

    "shape" varies (a_x, b_x), "adjustor" varies (a_z, b_z) and "mean-rho"
    varies (rho, ref_mean); every variant crosses five s_x^2 values with the
    two extreme s_z^2 values.
    """
    try:
        preset = FIGURE_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown figure {name!r}; expected one of {', '.join(FIGURE_PRESETS)}") from None
    base = ScenarioConfig(
        fl=preset.fl, ref_mean=preset.ref_mean, n_mc=n_mc, seed=seed, drop_invalid=preset.drop_invalid,
    )
    if variant == "shape":
        axes = {"a_x": SHAPE_LEVELS, "b_x": SHAPE_LEVELS}
    elif variant == "adjustor":
        axes = {"a_z": SHAPE_LEVELS, "b_z": SHAPE_LEVELS}
    elif variant == "mean-rho":
        axes = {"rho": (-0.25, 0.0, 0.25), "ref_mean": preset.ref_means}
    else:
        raise ConfigError(f"unknown figure variant {variant!r}; expected one of {', '.join(FIGURE_VARIANTS)}")
    axes["s_z2"] = preset.s2_range
    axes["s_x2"] = preset.s2_values()
    return base, axes


def lhs_sample(ranges, n, rng):
    """
    Latin hypercube sample of n points.

    ``ranges`` is a sequence of (lo, hi) pairs, one per parameter. Each
    column places one point in every one of its n equal-width strata, with
    the strata order permuted independently per column.
    """
    bounds = np.asarray(ranges, dtype=float).reshape(-1, 2)
    if int(n) != n or n < 1:
        raise DomainError(f"sample count must be a positive integer, got {n!r}")
    if np.any(bounds[:, 0] >= bounds[:, 1]):
        raise DomainError("every range needs lo < hi")
    n = int(n)
    generator = rng.generator
    sample = np.empty((n, bounds.shape[0]))
    for j, (lo, hi) in enumerate(bounds):
        strata = generator.permutation(n)
        sample[:, j] = lo + (hi - lo) * (strata + generator.uniform(size=n)) / n
    return sample


PrccResult = namedtuple("PrccResult", ["coefficients", "dropped"])


def prcc(params, response):
    """
    Partial rank correlation of the response with each parameter column.

    Rows whose response is None or NaN are dropped and counted. Each
    coefficient correlates the residuals of rank(param_j) and rank(response)
    after least-squares regression on the ranks of the other parameters.
    """
    params = np.asarray(params, dtype=float)
    if params.ndim != 2:
        raise DomainError("parameters must be an N x k matrix")
    values = np.array([np.nan if r is None else r for r in response], dtype=float)
    if values.shape[0] != params.shape[0]:
        raise DomainError("response needs one value per parameter row")
    keep = np.isfinite(values) & np.all(np.isfinite(params), axis=1)
    dropped = int(np.count_nonzero(~keep))
    params, values = params[keep], values[keep]
    n, k = params.shape
    if n <= k + 2:
        raise DomainError(f"need more than {k + 2} usable rows, got {n}")

    ranks = np.column_stack([stats.rankdata(params[:, j]) for j in range(k)])
    response_rank = stats.rankdata(values)
    full = np.column_stack([np.ones(n), ranks])
    if np.linalg.matrix_rank(full) < k + 1:
        raise SingularityError("parameter rank matrix is rank deficient")

    coefficients = np.empty(k)
    for j in range(k):
        others = np.delete(full, j + 1, axis=1)
        fit_x, *_ = np.linalg.lstsq(others, ranks[:, j], rcond=None)
        fit_y, *_ = np.linalg.lstsq(others, response_rank, rcond=None)
        resid_x = ranks[:, j] - others @ fit_x
        resid_y = response_rank - others @ fit_y
        denominator = math.sqrt(float(resid_x @ resid_x) * float(resid_y @ resid_y))
        if denominator == 0:
            raise SingularityError(f"residualized ranks of column {j} have no variation")
        coefficients[j] = float(np.clip(resid_x @ resid_y / denominator, -1.0, 1.0))
    return PrccResult(coefficients, dropped)


@dataclass(frozen=True)
class SensitivitySpace:
    fl: FamilyLink
    ranges: dict


def _s_range(lo, hi):
    return (math.sqrt(lo), math.sqrt(hi))


SENSITIVITY_PARAMETERS = ("a_x", "b_x", "s_x", "a_z", "b_z", "s_z", "ref_mean", "rho")
_SHAPES = (0.5, 1.5)
_RHO = (-0.25, 0.25)

SENSITIVITY_RANGES = {
    "bernoulli-logit": SensitivitySpace(FamilyLink(Family.BERNOULLI, Link.LOGIT), {
        "a_x": _SHAPES, "b_x": _SHAPES, "s_x": _s_range(0.01, 0.09),
        "a_z": _SHAPES, "b_z": _SHAPES, "s_z": _s_range(0.01, 0.09),
        "ref_mean": (0.15, 0.35), "rho": _RHO,
    }),
    "bernoulli-identity": SensitivitySpace(FamilyLink(Family.BERNOULLI, Link.IDENTITY), {
        "a_x": _SHAPES, "b_x": _SHAPES, "s_x": _s_range(0.0002, 0.0018),
        "a_z": _SHAPES, "b_z": _SHAPES, "s_z": _s_range(0.0002, 0.0018),
        "ref_mean": (0.15, 0.35), "rho": _RHO,
    }),
    "poisson-log": SensitivitySpace(FamilyLink(Family.POISSON, Link.LOG), {
        "a_x": _SHAPES, "b_x": _SHAPES, "s_x": _s_range(0.002, 0.018),
        "a_z": _SHAPES, "b_z": _SHAPES, "s_z": _s_range(0.002, 0.018),
        "ref_mean": (0.5, 1.5), "rho": _RHO,
    }),
    "gamma-log": SensitivitySpace(FamilyLink(Family.GAMMA, Link.LOG, 2.0), {
        "a_x": _SHAPES, "b_x": _SHAPES, "s_x": _s_range(0.001, 0.009),
        "a_z": _SHAPES, "b_z": _SHAPES, "s_z": _s_range(0.001, 0.009),
        "ref_mean": (2.0, 6.0), "rho": _RHO,
    }),
}


def _evaluate_draw(cfg):
    row = cfg.echo()
    try:
        row.update(result_row(run_scenario(cfg)))
        row["error"] = ""
    except PssError as exc:
        row.update({name: None for name in SUMMARY_COLUMNS})
        row["dropped_rows"] = None
        row["s_x2"] = cfg.s_x ** 2
        row["s_z2"] = cfg.s_z ** 2
        row["error"] = exc.code
    return row


def run_sensitivity(name, n_draws=1000, n_mc=50000, seed=0, workers=1, verbose=False):
    """
    Latin hypercube draws over a sensitivity space, one scenario per draw.

    Draws whose scenario cannot be evaluated keep their parameters with NA
    measures and the error code in the ``error`` column.
    """
    try:
        space = SENSITIVITY_RANGES[name]
    except KeyError:
        raise ConfigError(f"unknown sensitivity scenario {name!r}; expected one of {', '.join(SENSITIVITY_RANGES)}") from None
    sample = lhs_sample([space.ranges[p] for p in SENSITIVITY_PARAMETERS], n_draws, RngStream(int(seed), 0))
    configs = []
    for values in sample:
        cfg = ScenarioConfig(
            fl=space.fl, n_mc=n_mc, seed=seed, drop_invalid=True,
            **dict(zip(SENSITIVITY_PARAMETERS, (float(v) for v in values))),
        )
        configs.append(replace(cfg, stream_id=cell_stream_id(cfg)))
    if verbose:
        print(f"🚀 Sensitivity analysis '{name}': {len(configs)} draw(s)", file=sys.stderr)
    rows = _map_cells(_evaluate_draw, configs, workers)
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS + ["error"])
    frame.insert(0, "scenario", name)
    failed = int((frame["error"] != "").sum())
    if verbose and failed:
        print(f"⚠️  {failed} draw(s) could not be evaluated", file=sys.stderr)
    return frame


def _defined(frame, measure):
    values = pd.to_numeric(frame[measure], errors="coerce")
    return values[values.notna()]


def _is_zero_measure(values):
    return len(values) > 0 and float(np.max(np.abs(values))) <= ZERO_TOLERANCE


SUMMARY_STATS = ("mean", "min", "q1", "median", "q3", "max")


def sensitivity_summary(draws, measures=MEASURES):
    """
    Mean, min, quartiles and max of each relative error per scenario.

    Measures that are zero on every draw carry the zero marker instead of
    numbers; undefined values are dropped and counted.
    """
    if len(draws) == 0:
        raise DomainError("sensitivity summary needs at least one draw")
    groups = draws.groupby("scenario", sort=False) if "scenario" in draws else [("scenario", draws)]
    rows = []
    for scenario, group in groups:
        for measure in measures:
            values = _defined(group, measure)
            row = {"scenario": scenario, "measure": measure, "n": len(values), "dropped": len(group) - len(values)}
            if _is_zero_measure(values):
                row.update({stat: ZERO_MARKER for stat in SUMMARY_STATS})
            elif len(values) == 0:
                row.update({stat: None for stat in SUMMARY_STATS})
            else:
                row.update({
                    "mean": float(values.mean()),
                    "min": float(values.min()),
                    "q1": float(values.quantile(0.25)),
                    "median": float(values.median()),
                    "q3": float(values.quantile(0.75)),
                    "max": float(values.max()),
                })
            rows.append(row)
    return pd.DataFrame(rows, columns=["scenario", "measure", *SUMMARY_STATS, "n", "dropped"])


def prcc_table(draws, measures=MEASURES):
    """PRCC of each sensitivity parameter per scenario and relative error"""
    groups = draws.groupby("scenario", sort=False) if "scenario" in draws else [("scenario", draws)]
    rows = []
    for scenario, group in groups:
        params = group[list(SENSITIVITY_PARAMETERS)].to_numpy(dtype=float)
        for measure in measures:
            values = _defined(group, measure)
            row = {"scenario": scenario, "measure": measure}
            if _is_zero_measure(values):
                row.update({name: ZERO_MARKER for name in SENSITIVITY_PARAMETERS})
                row["dropped"] = len(group) - len(values)
            else:
                response = pd.to_numeric(group[measure], errors="coerce").to_numpy(dtype=float)
                result = prcc(params, response)
                row.update(dict(zip(SENSITIVITY_PARAMETERS, (float(c) for c in result.coefficients))))
                row["dropped"] = result.dropped
            rows.append(row)
    return pd.DataFrame(rows, columns=["scenario", "measure", *SENSITIVITY_PARAMETERS, "dropped"])
