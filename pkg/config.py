#!/usr/bin/env python3
"""
Study Configuration
Key=value configuration files and the typed parameter set of every command
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from errors import ConfigError, DomainError
from glm_core import FamilyLink

VERSION = "1.0.0"

COMMANDS = ("power", "samplesize", "effectsize", "relerror-sweep", "sensitivity", "verify", "table1")

# Keys written into output headers that are not command parameters
METADATA_KEYS = ("version", "command", "information_estimator")


def parse_key_values(lines):
    """Parse key=value lines; blank lines, comments and empty values are skipped"""
    values = {}
    for line in lines:
        line = line.strip()
        if line and not line.startswith('#') and '=' in line:
            key, value = line.split('=', 1)
            key = normalize_key(key)
            value = value.strip().strip('"\'')
            if value:  # Only keep non-empty values
                values[key] = value
    return values


def load_config_file(path):
    """Load a key=value configuration file"""
    config_file = Path(path)
    if not config_file.exists():
        raise ConfigError(f"configuration file not found: {config_file}")
    with open(config_file, 'r', encoding="utf-8") as f:
        return parse_key_values(f)


def normalize_key(key):
    return key.strip().lstrip('-').replace('-', '_').lower()


def _text_list(value):
    items = tuple(item.strip() for item in str(value).split(',') if item.strip())
    if not items:
        raise ValueError("empty list")
    return items


def _float_list(value):
    return tuple(float(item) for item in _text_list(value))


def _axes(value):
    """'name=v1,v2;name=v3' into an ordered tuple of (name, values)"""
    axes = []
    for part in str(value).split(';'):
        part = part.strip()
        if not part:
            continue
        name, sep, numbers = part.partition('=')
        if not sep:
            raise ValueError(f"axis {part!r} is not name=v1,v2,...")
        axes.append((name.strip(), _float_list(numbers)))
    return tuple(axes)


def _format(value):
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        return ';'.join(f"{name}={_format(numbers)}" for name, numbers in value)
    if isinstance(value, tuple):
        return ','.join(_format(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Parameter:
    name: str
    convert: Callable[[str], Any] = str
    default: Any = None
    required: bool = False


COMMON = (Parameter("seed", int, 0), Parameter("out"), Parameter("workers", int, 1))
TEST = (Parameter("alpha", float, 0.05), Parameter("df", int, 1))
GLM = (Parameter("family"), Parameter("link"), Parameter("aux", float, 1.0))
EFFECT_INPUTS = (Parameter("f2", float), Parameter("phi", float), Parameter("mean_y", float), Parameter("pseudo_r2", float))
DESIGN = (
    Parameter("design"),
    Parameter("z_cols", _text_list, ()),
    Parameter("x_cols", _text_list),
    Parameter("y_col"),
    Parameter("beta", _float_list),
    Parameter("lambda", _float_list),
)
SCENARIO = (
    Parameter("ref_mean", float),
    Parameter("a_x", float, 1.0),
    Parameter("b_x", float, 1.0),
    Parameter("a_z", float, 1.0),
    Parameter("b_z", float, 1.0),
    Parameter("s_x", float, 0.1),
    Parameter("s_z", float, 0.1),
    Parameter("rho", float, 0.0),
    Parameter("n_mc", int, 50000),
    Parameter("w1_convention", str, "mean_y"),
)

COMMAND_PARAMETERS: Dict[str, tuple] = {
    "power": COMMON + TEST + GLM + EFFECT_INPUTS + (Parameter("n", int, required=True),),
    "samplesize": COMMON + TEST + GLM + EFFECT_INPUTS + (Parameter("power", float, required=True),),
    "effectsize": COMMON + GLM + DESIGN + SCENARIO,
    "relerror-sweep": COMMON + GLM + SCENARIO + (
        Parameter("figure"),
        Parameter("variant", str, "shape"),
        Parameter("axis", _axes, ()),
    ),
    "sensitivity": COMMON + (
        Parameter("scenario", required=True),
        Parameter("draws", int, 1000),
        Parameter("n_mc", int, 50000),
    ),
    "verify": COMMON + (Parameter("alpha", float, 0.05),) + GLM + DESIGN + (
        Parameter("model"),
        Parameter("rows", int, 2000),
        Parameter("target_f2", float, 0.02),
        Parameter("power", float, 0.8),
        Parameter("reps", int, 2000),
    ),
    "table1": COMMON + TEST + (
        Parameter("targets", _float_list, (0.60, 0.64, 0.68, 0.72, 0.76, 0.80, 0.84, 0.88)),
        Parameter("rel_errors", _float_list, (-0.15, -0.10, -0.05, 0.05, 0.10, 0.15)),
    ),
}


@dataclass(frozen=True)
class CommandConfig:
    """
    A command with its resolved parameters.

    ``values`` holds raw strings until validate() converts them; a validated
    config holds typed values (tuples for lists) with defaults filled in.
    """

    command: str
    values: Dict[str, Any] = field(default_factory=dict)
    validated: bool = False

    @classmethod
    def from_sources(cls, command, file_values=None, cli_values=None):
        """Merge file values with CLI values; CLI values win"""
        merged = dict(file_values or {})
        for key, value in (cli_values or {}).items():
            if value is not None:
                merged[normalize_key(key)] = value
        merged.pop("command", None)
        return cls(command, merged)

    @classmethod
    def from_lines(cls, lines):
        """Re-read the output of to_lines() or a metadata header"""
        values = parse_key_values(lines)
        command = values.pop("command", None)
        if command is None:
            raise ConfigError("configuration echo does not name a command")
        for key in METADATA_KEYS:
            values.pop(key, None)
        return cls(command, values).validate()

    @property
    def seed(self):
        return self.values.get("seed")

    def get(self, key, default=None):
        value = self.values.get(key)
        return default if value is None else value

    def validate(self):
        """
        Convert and check every parameter before any computation.

        Raises ConfigError naming all unknown, missing or malformed keys.
        """
        if self.validated:
            return self
        if self.command not in COMMAND_PARAMETERS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        declared = {parameter.name: parameter for parameter in COMMAND_PARAMETERS[self.command]}
        problems = [f"unknown parameter '{key}'" for key in self.values if key not in declared]
        typed = {}
        for name, parameter in declared.items():
            raw = self.values.get(name)
            if raw is None:
                if parameter.required:
                    problems.append(f"missing required parameter '{name}'")
                typed[name] = parameter.default
                continue
            if not isinstance(raw, str):
                typed[name] = tuple(raw) if isinstance(raw, list) else raw
                continue
            try:
                typed[name] = parameter.convert(raw)
            except ValueError:
                problems.append(f"malformed value for '{name}': {raw!r}")
        if not problems:
            problems.extend(_check_rules(self.command, typed))
        if problems:
            raise ConfigError(f"invalid {self.command} configuration: " + "; ".join(problems))
        return CommandConfig(self.command, typed, True)

    def family_link(self):
        """FamilyLink named by the family/link/aux parameters, or None"""
        family, link = self.values.get("family"), self.values.get("link")
        if family is None and link is None:
            return None
        return FamilyLink.from_names(family, link, self.get("aux", 1.0))

    def to_lines(self):
        """Resolved configuration as key=value lines, command first"""
        config = self.validate()
        lines = [f"command={config.command}"]
        for parameter in COMMAND_PARAMETERS[config.command]:
            value = config.values.get(parameter.name)
            if value is None or value == ():
                continue
            lines.append(f"{parameter.name}={_format(value)}")
        return lines

    def echo(self):
        """to_lines() as an ordered dict for output metadata"""
        return dict(line.split('=', 1) for line in self.to_lines())


def _effect_source_problems(values):
    sources = [
        values.get("f2") is not None,
        values.get("phi") is not None,
        values.get("pseudo_r2") is not None,
    ]
    if sum(sources) != 1:
        return ["give exactly one of f2, phi (with mean_y, family, link) or pseudo_r2"]
    if values.get("phi") is not None and (values.get("mean_y") is None or values.get("family") is None):
        return ["phi needs mean_y, family and link"]
    return []


def _check_rules(command, values):
    problems = []

    def check(condition, message):
        if not condition:
            problems.append(message)

    check(values["seed"] >= 0 and values["seed"] < 2**64, "seed must be an unsigned 64-bit integer")
    check(values["workers"] >= 1, "workers must be at least 1")
    if "alpha" in values:
        check(0 < values["alpha"] < 1, "alpha must lie in (0, 1)")
    if "df" in values:
        check(values["df"] >= 1, "df must be at least 1")
    if "family" in values and (values.get("family") is not None or values.get("link") is not None):
        try:
            FamilyLink.from_names(values.get("family"), values.get("link"), values.get("aux", 1.0))
        except DomainError as exc:
            problems.append(exc.message)

    if command in ("power", "samplesize"):
        problems.extend(_effect_source_problems(values))
        if command == "power":
            check(values["n"] >= 1, "n must be at least 1")
        else:
            check(values["alpha"] < values["power"] < 1, "power must lie between alpha and 1")
    elif command == "effectsize":
        check(values.get("family") is not None, "family and link are required")
        check((values.get("design") is None) != (values.get("ref_mean") is None),
              "give either design (empirical CSV) or ref_mean (simulated scenario)")
        if values.get("design") is not None:
            check(values.get("x_cols") is not None, "x_cols is required with a design file")
    elif command == "relerror-sweep":
        if values.get("figure") is None:
            check(values.get("family") is not None and values.get("ref_mean") is not None,
                  "give figure, or family, link and ref_mean for a custom grid")
        check(values["variant"] in ("shape", "adjustor", "mean-rho"), "variant must be shape, adjustor or mean-rho")
        check(values["n_mc"] >= 2, "n_mc must be at least 2")
    elif command == "sensitivity":
        check(values["draws"] >= 1, "draws must be at least 1")
        check(values["n_mc"] >= 2, "n_mc must be at least 2")
    elif command == "verify":
        check((values.get("design") is None) != (values.get("model") is None),
              "give either design (empirical CSV) or model (synthetic case design)")
        if values.get("design") is not None:
            check(values.get("family") is not None, "family and link are required with a design file")
            check(values.get("x_cols") is not None, "x_cols is required with a design file")
        check(values["target_f2"] > 0, "target_f2 must be positive")
        check(values["alpha"] < values["power"] < 1, "power must lie between alpha and 1")
        check(values["reps"] >= 1, "reps must be at least 1")
    elif command == "table1":
        check(all(values["alpha"] < q < 1 for q in values["targets"]), "targets must lie between alpha and 1")
        check(all(re > -1 for re in values["rel_errors"]), "rel_errors must exceed -1")
    return problems


def resolve_config(command, cli_values, config_path: Optional[str] = None):
    """CommandConfig from an optional file plus CLI overrides, validated"""
    file_values = load_config_file(config_path) if config_path else {}
    return CommandConfig.from_sources(command, file_values, cli_values).validate()
