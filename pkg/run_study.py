#!/usr/bin/env python3
"""
Main Study Runner
Command-line entry point for power, sample-size, effect-size, relative-error
sweep, sensitivity, finite-sample verification and power-error table runs
"""

import argparse
import sys
from pathlib import Path

import pandas as pd

# Add current directory to path for imports
sys.path.append(str(Path(__file__).parent))

from config import COMMAND_PARAMETERS, COMMANDS, VERSION, resolve_config
from design_io import compute_empirical_effects, load_design_csv, write_csv
from effect_size import w1_for_mean
from errors import PssError
from finite_sample_lab import synthetic_case_design, verify_design
from pss_calculator import approximate_f2, power, power_error_table, sample_size
from sim_engine import (
    ScenarioConfig,
    figure_grid,
    prcc_table,
    run_scenario,
    run_sensitivity,
    sensitivity_summary,
    sweep_frame,
)

HELP = {
    "seed": "random seed (unsigned 64-bit)",
    "out": "CSV output path; prints to stdout when omitted",
    "workers": "worker processes for sweeps and simulations",
    "alpha": "significance level",
    "df": "tested coefficients (chi-square degrees of freedom)",
    "family": "normal, bernoulli, poisson, gamma or inverse_gaussian",
    "link": "identity, logit, log or inverse",
    "aux": "sigma^2 (normal) or shape k (gamma, inverse_gaussian)",
    "f2": "noncentrality per observation",
    "phi": "effect size on the linear predictor scale",
    "mean_y": "anticipated mean outcome (with --phi)",
    "pseudo_r2": "partial pseudo-R^2",
    "design": "empirical design CSV",
    "z_cols": "comma-separated adjustor columns (intercept added)",
    "x_cols": "comma-separated predictor columns",
    "y_col": "outcome column; coefficients are fitted when given",
    "beta": "comma-separated predictor coefficients",
    "lambda": "comma-separated adjustor coefficients, intercept first",
    "axis": "sweep axis name=v1,v2,... (repeatable)",
    "figure": "figure preset: logistic, linear-probability, poisson, gamma",
    "variant": "figure variant: shape, adjustor or mean-rho",
    "scenario": "sensitivity space: bernoulli-logit, bernoulli-identity, poisson-log, gamma-log",
    "model": "synthetic case design: normal-identity, bernoulli-logit, bernoulli-identity, poisson-log, gamma-log",
}


def _banner(title):
    print("\n" + "=" * 50, file=sys.stderr)
    print(title, file=sys.stderr)
    print("=" * 50, file=sys.stderr)


def _status(message):
    print(message, file=sys.stderr)


def _human(value):
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class StudyRunner:
    def __init__(self, config):
        self.config = config
        self.fl = None

    def setup(self):
        """Resolve the model named by the configuration"""
        _status(f"🔧 Command: {self.config.command} (version {VERSION})")
        self.fl = self.config.family_link()
        if self.fl is not None:
            _status(f"🔧 Model: {self.fl.label}, aux={self.fl.aux:g}")
        return True

    def run(self):
        """Dispatch the command; returns the process exit status"""
        handler = getattr(self, "run_" + self.config.command.replace("-", "_"))
        handler()
        _status("✅ Done")
        return 0

    # -- output ----------------------------------------------------------

    def metadata(self, **extra):
        values = {"version": VERSION}
        values.update(self.config.echo())
        values.update(extra)
        return values

    def emit_row(self, row, **extra):
        out = self.config.get("out")
        if out:
            path = write_csv(pd.DataFrame([row]), out, self.metadata(**extra))
            _status(f"📄 Wrote {path}")
        else:
            for key, value in row.items():
                print(f"{key}={_human(value)}")

    def emit_frame(self, frame, out=None, **extra):
        if out:
            path = write_csv(frame, out, self.metadata(**extra))
            _status(f"📄 Wrote {path} ({len(frame)} rows)")
        else:
            print(frame.to_string(index=False, na_rep="NA", float_format=lambda v: f"{v:.6g}"))

    # -- commands --------------------------------------------------------

    def planning_f2(self):
        values = self.config
        if values.get("f2") is not None:
            return values.get("f2"), {}
        if values.get("pseudo_r2") is not None:
            return approximate_f2(pseudo_r2=values.get("pseudo_r2")), {}
        w1 = w1_for_mean(self.fl, values.get("mean_y"))
        return approximate_f2(phi=values.get("phi"), mean_y=values.get("mean_y"), fl=self.fl), {"w1": w1}

    def run_power(self):
        f2, extra = self.planning_f2()
        value = power(self.config.get("n"), f2, self.config.get("df"), self.config.get("alpha"))
        self.emit_row({**extra, "f2": f2, "n": self.config.get("n"), "power": value})

    def run_samplesize(self):
        f2, extra = self.planning_f2()
        n = sample_size(self.config.get("power"), f2, self.config.get("df"), self.config.get("alpha"))
        self.emit_row({**extra, "f2": f2, "power": self.config.get("power"), "n": n})

    def load_design(self):
        cfg = self.config
        _status(f"📄 Loading design {cfg.get('design')}")
        return load_design_csv(
            cfg.get("design"), cfg.get("z_cols"), cfg.get("x_cols"), self.fl,
            y_col=cfg.get("y_col"), beta=cfg.get("beta"), lam=cfg.get("lambda"),
        )

    def scenario(self):
        cfg = self.config
        return ScenarioConfig(
            fl=self.fl,
            ref_mean=cfg.get("ref_mean"),
            a_x=cfg.get("a_x"),
            b_x=cfg.get("b_x"),
            a_z=cfg.get("a_z"),
            b_z=cfg.get("b_z"),
            s_x=cfg.get("s_x"),
            s_z=cfg.get("s_z"),
            rho=cfg.get("rho"),
            n_mc=cfg.get("n_mc"),
            seed=cfg.get("seed"),
            w1_convention=cfg.get("w1_convention"),
        )

    def run_effectsize(self):
        if self.config.get("design"):
            design = self.load_design()
            summary = compute_empirical_effects(design, self.config.get("w1_convention"))
            row = summary.as_row()
            row["aux"] = design.fl.aux
        else:
            result = run_scenario(self.scenario())
            row = result.summary.as_row()
            row["dropped_rows"] = result.dropped_rows
        self.emit_row(row)

    def run_relerror_sweep(self):
        cfg = self.config
        if cfg.get("figure"):
            base, axes = figure_grid(cfg.get("figure"), cfg.get("variant"), cfg.get("n_mc"), cfg.get("seed"))
        else:
            base, axes = self.scenario(), {}
        axes.update(dict(cfg.get("axis", ())))
        _banner("Relative Error Sweep")
        frame = sweep_frame(base, axes, cfg.get("workers"), verbose=True)
        self.emit_frame(frame, cfg.get("out"))

    def run_sensitivity(self):
        cfg = self.config
        _banner("STEP 1: Latin Hypercube Scenarios")
        draws = run_sensitivity(cfg.get("scenario"), cfg.get("draws"), cfg.get("n_mc"), cfg.get("seed"),
                                cfg.get("workers"), verbose=True)
        _banner("STEP 2: Summary and Partial Rank Correlations")
        summary = sensitivity_summary(draws)
        prcc = prcc_table(draws)
        out = cfg.get("out")
        if out:
            stem = Path(out)
            self.emit_frame(summary, stem)
            self.emit_frame(prcc, stem.with_name(f"{stem.stem}_prcc.csv"))
            self.emit_frame(draws, stem.with_name(f"{stem.stem}_draws.csv"))
        else:
            _status("📊 Relative error summary")
            self.emit_frame(summary)
            _status("📊 Partial rank correlation coefficients")
            self.emit_frame(prcc)

    def run_verify(self):
        cfg = self.config
        _banner("STEP 1: Building Design")
        if cfg.get("design"):
            design = self.load_design()
        else:
            design = synthetic_case_design(cfg.get("model"), cfg.get("rows"), cfg.get("seed"))
            _status(f"🔧 Synthetic {cfg.get('model')} design with {design.nrows} rows")
        _banner("STEP 2: Simulating Finite-Sample Power")
        result = verify_design(
            design, cfg.get("target_f2"), cfg.get("power"), cfg.get("alpha"), cfg.get("reps"),
            cfg.get("seed"), cfg.get("workers"), verbose=True,
        )
        self.emit_row(result.as_row(), information_estimator="expected")

    def run_table1(self):
        cfg = self.config
        table = power_error_table(cfg.get("targets"), cfg.get("rel_errors"), cfg.get("df"), cfg.get("alpha"))
        frame = table.reset_index()
        frame.columns = [str(c) for c in frame.columns]
        self.emit_frame(frame, cfg.get("out"))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="run_study.py",
        description="Power and sample-size calculations for Wald tests in generalized linear models",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", help="key=value configuration file; flags override it")
        for parameter in COMMAND_PARAMETERS[command]:
            flag = "--" + parameter.name.replace("_", "-")
            if parameter.name == "axis":
                sub.add_argument(flag, dest="axis", action="append", help=HELP.get("axis"))
            else:
                sub.add_argument(flag, dest=parameter.name, help=HELP.get(parameter.name))
    return parser


def cli_values(args):
    values = {key: value for key, value in vars(args).items() if key not in ("command", "config")}
    if values.get("axis"):
        values["axis"] = ";".join(values["axis"])
    return values


def main(argv=None):
    """Main function; returns the exit status"""
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args.command, cli_values(args), args.config)
        runner = StudyRunner(config)
        if not runner.setup():
            return 1
        return runner.run()
    except PssError as exc:
        print(exc.describe(), file=sys.stderr)
        print(f"❌ {exc.message}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("\n🛑 Run interrupted by user", file=sys.stderr)
        return 130
    except Exception as exc:
        print("error=UNEXPECTED exit=1", file=sys.stderr)
        print(f"❌ Unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
