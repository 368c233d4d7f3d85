"""Command-line entry point.

    noisyfractal dim --config cantor.json
    noisyfractal simulate --config case1.json --trials 100000 --horizon 12
    noisyfractal analytic1 --config case1.json --max-stage 8
    noisyfractal analytic2 --config uniform.json --max-stage 6 --dump-densities dumps/
    noisyfractal chaos --config tent.json --x0 1/7
    noisyfractal chaos --config tent.json --x0 "q<=512"

Exit codes: 0 success, 1 invalid config or arguments, 2 a parameter
condition of the theory fails, 3 a runtime budget was exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import re
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .case1 import distribution_case1, exact_enumeration
from .case2 import distribution_case2
from .chaos import DEFAULT_MAX_STAGE, rationals_up_to, run_until_truncation, sweep_truncation
from .density import DEFAULT_RESOLUTION, build_density
from .errors import BudgetExceeded, ConditionViolation, NoisyFractalError, ValidationError
from .ifs import Address, emit_intervals, moran_dimension, validate_system
from .noise import DensityNoise, TentNoise, TriValuedNoise, make_rng
from .simulate import AddressPolicy, monte_carlo_distribution, run_tree

EXIT_OK, EXIT_CONFIG, EXIT_CONDITION, EXIT_BUDGET = 0, 1, 2, 3
PROB_FLOOR = 1e-12

_number = {"type": ["number", "string"]}
_count = {"type": "integer", "minimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "ratios": {"type": "array", "items": _number, "minItems": 1},
        "noise": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "trivalued"},
                        "deltas": {"type": "array", "items": _number, "minItems": 1},
                    },
                    "required": ["type", "deltas"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "density"},
                        "family": {"enum": ["uniform", "triangular", "truncated_gaussian", "tabulated"]},
                        "beta": {"type": "number"},
                        "sigma": {"type": "number"},
                        "cut": {"type": "number"},
                        "values": {"type": "array", "items": {"type": "number"}},
                        "lower": {"type": "number"},
                        "upper": {"type": "number"},
                        "resolution": {"type": "integer"},
                    },
                    "required": ["type", "family"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "tent"},
                        "epsilon": {"type": "number"},
                        "x0": {"type": "string"},
                        "variant": {"enum": ["collapse", "merge"]},
                    },
                    "required": ["type", "epsilon"],
                    "additionalProperties": False,
                },
            ]
        },
        "address": {"type": "string"},
        "policy": {"type": "string"},
        "depth": _count,
        "trials": _count,
        "horizon": _count,
        "max_stage": _count,
        "seed": _count,
        "resolution": _count,
        "output": {"type": "string"},
    },
    "required": ["ratios"],
    "additionalProperties": False,
}


class ConfigError(ValidationError):
    pass


# ---------------------------------------------------------------------------
# config handling


def _field_path(error) -> str:
    path = ""
    for part in error.absolute_path:
        path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else str(part))
    return path or "<root>"


def load_config(path: Optional[str]) -> dict:
    if path is None:
        raise ConfigError("--config is required")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if not errors:
        return
    err = errors[0]
    if err.validator == "oneOf" and isinstance(err.instance, dict):
        # report the branch matching the declared noise type
        kind = err.instance.get("type")
        for sub in err.context:
            branch = CONFIG_SCHEMA["properties"]["noise"]["oneOf"][sub.schema_path[0]]
            if branch["properties"]["type"].get("const") == kind:
                err = sub
                break
        else:
            raise ConfigError(f"noise.type: unknown noise type {kind!r}")
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        where = _field_path(err)
        prefix = "" if where == "<root>" else where + "."
        raise ConfigError(f"{prefix}{extra[0]}: unknown key")
    field = _field_path(err)
    if err.validator == "required":
        missing = re.findall(r"'([^']+)' is a required property", err.message)
        if missing:
            field = (field + "." if field != "<root>" else "") + missing[0]
    raise ConfigError(f"{field}: {err.message}")


def _noise_from(cfg: dict, system, resolution: Optional[int] = None):
    noise_cfg = cfg.get("noise")
    if noise_cfg is None:
        return TriValuedNoise.uniform(0, system.symbol_count)
    kind = noise_cfg["type"]
    try:
        if kind == "trivalued":
            return TriValuedNoise.of(noise_cfg["deltas"]).check(system)
        if kind == "density":
            params = {k: v for k, v in noise_cfg.items() if k not in ("type", "family", "resolution")}
            res = noise_cfg.get("resolution", resolution or DEFAULT_RESOLUTION)
            grid = build_density(noise_cfg["family"], res, **params)
            return DensityNoise.uniform(grid, system.symbol_count)
        return TentNoise(noise_cfg["epsilon"], noise_cfg.get("x0", "0"), noise_cfg.get("variant", "collapse"))
    except ValidationError as exc:
        raise ConfigError(f"noise: {exc}") from None


def _system_from(cfg: dict):
    try:
        return validate_system(cfg["ratios"])
    except ValidationError as exc:
        raise ConfigError(f"ratios: {exc}") from None


def _policy_from(cfg: dict, args, system) -> AddressPolicy:
    text = args.policy or cfg.get("policy")
    address = args.address if args.address is not None else cfg.get("address")
    try:
        if text:
            policy = AddressPolicy.parse(text)
        elif address:
            policy = AddressPolicy.fixed(Address.parse(address))
        else:
            policy = AddressPolicy()
        return policy.check(system)
    except ValidationError as exc:
        raise ConfigError(f"policy: {exc}") from None


def _address_for(policy: AddressPolicy, system, length: int, seed: int) -> Address:
    rng = make_rng(seed)
    return Address(tuple(int(policy.draw(n, 1, system.symbol_count, rng)[0]) + 1 for n in range(1, length + 1)))


def _pick(args, cfg, name, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


# ---------------------------------------------------------------------------
# output


def _fmt_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return f"{float(value):.12g}"


def _fmt_probability(value: float, clamped: list) -> str:
    if abs(value) < PROB_FLOOR:
        if value != 0:
            clamped.append(value)
        return "0"
    return np.format_float_positional(float(value), precision=12, unique=False, fractional=False, trim="-")


class Output:
    """A table with a fixed column order; probability columns are never written in exponent form."""

    def __init__(self, command: str, columns: list[str], prob_columns=(), meta: Optional[dict] = None):
        self.command = command
        self.columns = columns
        self.prob_columns = set(prob_columns)
        self.rows: list[dict] = []
        self.meta = meta or {}

    def add(self, row: dict):
        self.rows.append(row)

    def _cells(self, clamped):
        for row in self.rows:
            yield [
                _fmt_probability(row[c], clamped) if c in self.prob_columns and row[c] is not None
                else _fmt_number(row[c])
                for c in self.columns
            ]

    def header_lines(self):
        yield f"# noisyfractal {__version__}"
        yield f"# command: {self.command}"
        yield f"# config-sha256: {self.meta['config_sha256']}"
        yield f"# seed: {self.meta['seed']}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.header_lines():
            buf.write(line + "\n")
        buf.write(",".join(self.columns) + "\n")
        clamped: list = []
        for cells in self._cells(clamped):
            buf.write(",".join(cells) + "\n")
        if clamped:
            buf.write(f"# note: {len(clamped)} probabilities below {PROB_FLOOR:g} written as 0\n")
        return buf.getvalue()

    def to_json(self) -> str:
        clamped: list = []
        rows = []
        for cells in self._cells(clamped):
            row = {}
            for c, cell in zip(self.columns, cells):
                row[c] = _json_value(cell)
            rows.append(row)
        meta = {"tool": "noisyfractal", "version": __version__, "command": self.command, **self.meta}
        if clamped:
            meta["clamped_probabilities"] = len(clamped)
        return json.dumps({"meta": meta, "rows": rows}, indent=2, sort_keys=True) + "\n"


def _json_value(cell: str):
    if cell == "":
        return None
    if cell in ("true", "false"):
        return cell == "true"
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def _emit(out: Output, args, stdout) -> None:
    text = out.to_json() if args.json else out.to_csv()
    target = args.out
    if target:
        Path(target).parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def _meta(cfg: dict, seed: int) -> dict:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return {"config_sha256": hashlib.sha256(canonical.encode()).hexdigest(), "seed": seed}


# ---------------------------------------------------------------------------
# commands


def cmd_dim(args, cfg, stdout):
    system = _system_from(cfg)
    s = moran_dimension(system)
    if not args.json and not args.out:
        stdout.write(f"{s:.12g}\n")
        return
    out = Output("dim", ["dimension"], meta=_meta(cfg, args.seed))
    out.add({"dimension": s})
    _emit(out, args, stdout)


def cmd_simulate(args, cfg, stdout):
    system = _system_from(cfg)
    noise = _noise_from(cfg, system)
    if isinstance(noise, TentNoise):
        raise ConfigError("noise.type: 'simulate' needs stochastic noise; use 'chaos' for tent noise")
    policy = _policy_from(cfg, args, system)
    trials = _pick(args, cfg, "trials", 10000)
    horizon = _pick(args, cfg, "horizon", 20)
    seed = args.seed
    effective = {**cfg, "trials": trials, "horizon": horizon, "policy": str(policy)}
    dist = monte_carlo_distribution(system, noise, policy, trials, horizon, seed)
    out = Output("simulate", ["stage", "estimate", "stderr", "trials"], ["estimate", "stderr"], _meta(effective, seed))
    for n, est, se in zip(dist.stages, dist.estimates, dist.stderr):
        out.add({"stage": int(n), "estimate": est, "stderr": se, "trials": trials})
    _emit(out, args, stdout)


def _tree(args, cfg):
    system = _system_from(cfg)
    noise = _noise_from(cfg, system)
    depth = _pick(args, cfg, "depth", 3)
    tree = run_tree(system, noise, depth, args.seed)
    return system, tree, {**cfg, "depth": depth}


def cmd_tree(args, cfg, stdout):
    _, tree, effective = _tree(args, cfg)
    out = Output("tree", ["address", "stage", "diameter", "collapsed"], meta=_meta(effective, args.seed))
    for rec in tree:
        out.add({"address": str(rec.address), "stage": rec.address.stage, "diameter": rec.diameter,
                 "collapsed": rec.collapsed})
    _emit(out, args, stdout)


def cmd_emit_intervals(args, cfg, stdout):
    system, tree, effective = _tree(args, cfg)
    out = Output("emit-intervals", ["address", "length"], meta=_meta(effective, args.seed))
    for address, length in emit_intervals(system, tree):
        out.add({"address": address, "length": length})
    _emit(out, args, stdout)


def cmd_analytic1(args, cfg, stdout):
    system = _system_from(cfg)
    noise = _noise_from(cfg, system)
    if not isinstance(noise, TriValuedNoise):
        raise ConfigError("noise.type: 'analytic1' needs trivalued noise")
    policy = _policy_from(cfg, args, system)
    max_stage = _pick(args, cfg, "max_stage", 8)
    address = _address_for(policy, system, max_stage, args.seed)
    effective = {**cfg, "max_stage": max_stage, "address": str(address), "oracle": bool(args.oracle)}
    if args.oracle:
        table = exact_enumeration(system, noise, address, max_stage)
    else:
        table = distribution_case1(system, noise, address, max_stage)
    out = Output("analytic1", ["stage", "LE", "NT", "C", "GE", "regime"], ["LE", "NT", "C", "GE"],
                 _meta(effective, args.seed))
    for row in table.rows():
        out.add(row)
    _emit(out, args, stdout)


def cmd_analytic2(args, cfg, stdout):
    system = _system_from(cfg)
    resolution = _pick(args, cfg, "resolution", DEFAULT_RESOLUTION)
    noise = _noise_from(cfg, system, resolution)
    if not isinstance(noise, DensityNoise):
        raise ConfigError("noise.type: 'analytic2' needs density noise")
    policy = _policy_from(cfg, args, system)
    max_stage = _pick(args, cfg, "max_stage", 6)
    address = _address_for(policy, system, max_stage, args.seed)
    effective = {**cfg, "max_stage": max_stage, "address": str(address), "resolution": resolution}
    result = distribution_case2(system, noise, address, max_stage, resolution=resolution, keep_densities=True)
    meta = _meta(effective, args.seed)
    out = Output("analytic2", ["stage", "LE", "NT", "C"], ["LE", "NT", "C"], meta)
    for row in result.table.rows():
        out.add(row)
    _emit(out, args, stdout)
    if args.dump_densities:
        folder = Path(args.dump_densities)
        folder.mkdir(parents=True, exist_ok=True)
        for n, grid in enumerate(result.densities, start=1):
            dump = Output("analytic2-density", ["x", "value"], meta=meta)
            for x, v in zip(grid.x.tolist(), grid.values.tolist()):
                dump.add({"x": x, "value": v})
            (folder / f"density_stage_{n}.csv").write_text(dump.to_csv())


_SWEEP = re.compile(r"^\s*q\s*<=\s*(\d+)\s*$")


def cmd_chaos(args, cfg, stdout):
    system = _system_from(cfg)
    noise_cfg = dict(cfg.get("noise") or {})
    if noise_cfg and noise_cfg.get("type") != "tent":
        raise ConfigError("noise.type: 'chaos' needs tent noise")
    epsilon = args.epsilon if args.epsilon is not None else noise_cfg.get("epsilon")
    if epsilon is None:
        raise ConfigError("noise.epsilon: required (in the config or via --epsilon)")
    variant = args.variant or noise_cfg.get("variant", "collapse")
    x0_text = args.x0 if args.x0 is not None else noise_cfg.get("x0", "0")
    max_stage = _pick(args, cfg, "max_stage", DEFAULT_MAX_STAGE)
    policy = _policy_from(cfg, args, system)
    effective = {**cfg, "epsilon": epsilon, "variant": variant, "x0": x0_text, "max_stage": max_stage,
                 "policy": str(policy)}
    sweep = _SWEEP.match(x0_text)
    try:
        if sweep:
            x0s = rationals_up_to(int(sweep.group(1)))
        else:
            x0s = [Fraction(x0_text.strip())]
        noise = TentNoise(epsilon, x0s[0] if x0s else 0, variant)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"x0: cannot parse {x0_text!r}; use 'p/q' or 'q<=N'") from None
    except ValidationError as exc:
        raise ConfigError(f"noise: {exc}") from None
    if sweep:
        reports = sweep_truncation(system, noise.epsilon, x0s, variant, policy, max_stage)
    else:
        reports = [run_until_truncation(system, noise, policy, max_stage, args.seed)]
    out = Output("chaos", ["x0", "k", "collapse_stage", "n0", "bound_satisfied"], meta=_meta(effective, args.seed))
    for rep in reports:
        out.add(rep.row())
    _emit(out, args, stdout)


COMMANDS = {
    "dim": cmd_dim,
    "simulate": cmd_simulate,
    "tree": cmd_tree,
    "analytic1": cmd_analytic1,
    "analytic2": cmd_analytic2,
    "chaos": cmd_chaos,
    "emit-intervals": cmd_emit_intervals,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisyfractal", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"noisyfractal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help="write the table here instead of stdout")
        p.add_argument("--json", action="store_true", help="emit a JSON envelope {meta, rows}")
        p.add_argument("--seed", type=int, default=None, help="random seed (default: config or 0)")
        return p

    def addressing(p):
        p.add_argument("--policy", help="address policy: cyclic, uniform or fixed:1.2.1")
        p.add_argument("--address", help="fixed address, e.g. 1.2.1")

    common(sub.add_parser("dim", help="similarity dimension of the system"))
    p = common(sub.add_parser("simulate", help="Monte Carlo collapse distribution"))
    addressing(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--horizon", type=int)
    for name in ("tree", "emit-intervals"):
        p = common(sub.add_parser(name, help="grow one noisy address tree"))
        p.add_argument("--depth", type=int)
    p = common(sub.add_parser("analytic1", help="tri-valued noise distribution table"))
    addressing(p)
    p.add_argument("--max-stage", dest="max_stage", type=int)
    p.add_argument("--oracle", action="store_true", help="exact enumeration instead of the analytic table")
    p = common(sub.add_parser("analytic2", help="density-propagation distribution table"))
    addressing(p)
    p.add_argument("--max-stage", dest="max_stage", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--dump-densities", dest="dump_densities", help="folder for per-stage density CSVs")
    p = common(sub.add_parser("chaos", help="tent-map truncation runs"))
    addressing(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--x0", help="starting point 'p/q' or sweep 'q<=N'")
    p.add_argument("--variant", choices=["collapse", "merge"])
    p.add_argument("--max-stage", dest="max_stage", type=int)
    return parser


def dispatch(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = cfg.get("seed", 0)
        if args.out is None and cfg.get("output"):
            args.out = cfg["output"]
        COMMANDS[args.command](args, cfg, stdout)
    except ConditionViolation as exc:
        stderr.write(f"error: parameter condition violated: {exc}\n")
        if exc.inequality:
            stderr.write(f"required: {exc.inequality}\n")
        return EXIT_CONDITION
    except BudgetExceeded as exc:
        stderr.write(f"error: budget exceeded: {exc}\n")
        return EXIT_BUDGET
    except (ValidationError, NoisyFractalError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())
