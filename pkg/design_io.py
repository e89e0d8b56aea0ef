#!/usr/bin/env python3
"""
Design Ingestion and Result Output
Empirical design CSV loading and atomic CSV writing with a metadata header
"""

import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from effect_size import effect_sizes_from_draws
from errors import ConvergenceError, DomainError, IngestionError
from finite_sample_lab import EmpiricalDesign
from glm_core import Family, irls_fit, with_estimated_shape

NA_TOKEN = "NA"


def _numeric_column(frame, column):
    raw = frame[column]
    values = pd.to_numeric(raw.str.strip(), errors="coerce")
    bad = values.isna() | ~np.isfinite(values.fillna(0.0))
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        raise IngestionError(f"non-numeric value {raw.iloc[position]!r}", row=position + 1, column=column)
    return values.to_numpy(dtype=float)


def load_design_csv(path, z_cols, x_cols, fl, y_col=None, beta=None, lam=None):
    """
    Load an empirical design from CSV.

    A constant-1 adjustor column is always prepended to ``z_cols``, so
    ``lam`` carries the intercept first. When ``beta``/``lam`` are omitted
    and ``y_col`` is given the coefficients come from an IRLS fit of y on
    (z, x); Gamma and InverseGaussian fits also estimate the shape. Data
    rows are numbered from 1 in error messages.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"design file not found: {path}")
    if not x_cols:
        raise IngestionError("at least one predictor column is required")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, comment="#", encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestionError(f"could not parse {path}: {exc}") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    for column in [*z_cols, *x_cols, *([y_col] if y_col else [])]:
        if column not in frame.columns:
            raise IngestionError(f"missing column in {path.name}", column=column)
    if len(frame) == 0:
        raise IngestionError(f"{path.name} has no data rows")

    z = np.column_stack([np.ones(len(frame))] + [_numeric_column(frame, c) for c in z_cols])
    x = np.column_stack([_numeric_column(frame, c) for c in x_cols])

    if beta is None or lam is None:
        if beta is not None or lam is not None:
            raise IngestionError("give both beta and lambda coefficients, or neither")
        if not y_col:
            raise IngestionError("coefficients are required when no outcome column is given")
        y = _numeric_column(frame, y_col)
        matrix = np.column_stack([z, x])
        try:
            fl.check_outcomes(y)
        except DomainError as exc:
            raise IngestionError(str(exc), column=y_col) from exc
        fit = irls_fit(matrix, y, fl)
        if not fit.converged:
            raise ConvergenceError(f"IRLS did not converge on {path.name} after {fit.iterations} iterations")
        if fl.family in (Family.GAMMA, Family.INVERSE_GAUSSIAN):
            fit = with_estimated_shape(fit, matrix, y, fl)
            fl = fit.fl
        lam = fit.coefficients[: z.shape[1]]
        beta = fit.coefficients[z.shape[1]:]
    else:
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if len(beta) != x.shape[1] or len(lam) != z.shape[1]:
            raise IngestionError(
                f"expected {x.shape[1]} beta and {z.shape[1]} lambda coefficients "
                f"(intercept first), got {len(beta)} and {len(lam)}"
            )

    eta = z @ lam + x @ beta
    valid = fl.eta_in_domain(eta)
    if not np.all(valid):
        position = int(np.flatnonzero(~valid)[0])
        raise IngestionError(
            f"linear predictor {eta[position]:.6g} outside the {fl.label} domain",
            row=position + 1,
            column="eta",
        )
    return EmpiricalDesign(x=x, z=z, beta=beta, lam=lam, fl=fl)


def compute_empirical_effects(design, w1_convention="mean_y"):
    """Effect summary over the design rows, each with equal mass"""
    return effect_sizes_from_draws(design.draws(), w1_convention)


def write_csv(frame, path, metadata=None):
    """
    Write ``frame`` to ``path`` atomically, prefixed by ``# key=value`` lines.

    The file is written to a temporary sibling and renamed over the target.
    Undefined values are written as NA.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            for key, value in (metadata or {}).items():
                stream.write(f"# {key}={value}\n")
            frame.to_csv(stream, index=False, na_rep=NA_TOKEN, lineterminator="\n")
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise
    return path


def read_csv_output(path):
    """Metadata dict and data frame of a file written by write_csv"""
    metadata = {}
    with open(path, "r", encoding="utf-8") as stream:
        for line in stream:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            metadata[key.strip()] = value
    frame = pd.read_csv(path, comment="#", na_values=[NA_TOKEN], keep_default_na=False)
    return metadata, frame
