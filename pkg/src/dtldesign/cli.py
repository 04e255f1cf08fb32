"""Command-line front end.

Workflows: `design` calibrates boundaries and the per-stage sample size from
a config file and writes a design record; `evaluate` computes the operating
characteristics of a designed trial; `simulate` cross-checks the analytic
numbers against the Monte Carlo oracle; `compare` emits the comparison table
across the competing designs.

Config files are flat ``key = value`` text under ``[section]`` headers
(sections: design, endpoint, calibration, effects).  Unknown sections or
keys are rejected with their line number.  `evaluate` and `simulate` also
accept a design record (the JSON written by `design`) as their input, which
round-trips the design at full float precision.

Reports are deterministic: one JSON document with sorted keys plus an
aligned plain-text table rounded the way the numbers are usually quoted
(boundaries to 2 decimals, probabilities to 3, expected sample sizes to 1).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass

from scipy.special import ndtr, ndtri

from .calibrate import (
    BoundaryShape,
    CalibrationConfig,
    calibrate_boundaries,
    find_sample_size,
)
from .characteristics import (
    comparator_multiarm,
    comparator_separate_trials,
    full_report,
    max_total_patients,
    multiarm_lfc_power,
    stage_total_patients,
)
from .covariance import EffectConfig, TrialDesign, build_moment_problem, single
from .events import (
    reject_problems,
    set_probability,
    stop_stage_problems,
    total_probability,
    win_problems,
)
from .endpoint import BinaryEndpointSpec, NormalEffectSpec, binary_to_normal
from .mvn import mvn_rectangle_prob
from .simulate import estimate_characteristics

__all__ = [
    "ParseError",
    "ParsedConfig",
    "RunConfig",
    "parse_config",
    "run",
    "main",
]

_SECTIONS = ("design", "endpoint", "calibration", "effects")
_KNOWN_KEYS = {
    "design": ("arms", "shape", "boundaries", "n"),
    "endpoint": ("type", "p_control", "rd_relevant", "rd_uninteresting",
                 "theta_prime", "theta_zero", "sigma_sq"),
    "calibration": ("alpha", "power", "omega"),
}
_REQUIRED = ("design.arms", "endpoint.type", "calibration.alpha",
             "calibration.power")
_SHAPES = {"obf": "obrien_fleming", "pocock": "pocock", "custom": "custom"}

# integration targets when --tol is not given; the simulate default is
# looser because its yardstick is Monte Carlo noise, not reporting precision
_DESIGN_TOL = 1e-5
_SIMULATE_TOL = 1e-5


class ParseError(ValueError):
    """Config file rejected; carries the offending line when there is one."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class ParsedConfig:
    """Validated inputs from one config file.

    design is present only when the file pins a complete trial (custom
    boundaries plus design.n); otherwise the design command derives it.
    """

    arms: int
    shape: BoundaryShape
    design: TrialDesign | None
    endpoint: BinaryEndpointSpec | NormalEffectSpec
    normal: NormalEffectSpec
    calibration: CalibrationConfig
    effects: dict[str, EffectConfig]


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation after argument parsing."""

    command: str
    config_path: str
    out_path: str | None = None
    seed: int = 0
    reps: int = 100_000
    tol: float | None = None
    alpha: float | None = None
    power: float | None = None
    omega: float | None = None


def _scan(text: str) -> dict[tuple[str, str], tuple[str, int]]:
    entries: dict[tuple[str, str], tuple[str, int]] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("malformed section header", no)
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ParseError(
                    f"unknown section '{name}' (expected one of "
                    f"{', '.join(_SECTIONS)})", no)
            section = name
            continue
        if "=" not in line:
            raise ParseError("expected key = value", no)
        if section is None:
            raise ParseError("key outside any [section]", no)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ParseError("expected key = value", no)
        if section != "effects" and key not in _KNOWN_KEYS[section]:
            raise ParseError(f"unknown key '{section}.{key}'", no)
        if (section, key) in entries:
            raise ParseError(f"duplicate key '{section}.{key}'", no)
        entries[(section, key)] = (value, no)
    return entries


def _take(entries, section, key, conv, default=None, required=False):
    if (section, key) not in entries:
        if required:
            raise ParseError(f"missing required key {section}.{key}")
        return default
    value, no = entries.pop((section, key))
    try:
        return conv(value)
    except ValueError:
        raise ParseError(f"bad value for {section}.{key}: {value!r}", no)


def _float_list(value: str) -> tuple[float, ...]:
    return tuple(float(part) for part in value.split(","))


def parse_config(text: str) -> ParsedConfig:
    """Parse and validate a config file; see the module docstring for the
    schema.  Raises ParseError with a line number for schema problems and
    ValueError naming the field for invariant violations."""
    entries = _scan(text)
    missing = [dotted for dotted in _REQUIRED
               if tuple(dotted.split(".")) not in entries]
    if missing:
        raise ParseError("missing required keys: " + ", ".join(missing))

    arms = _take(entries, "design", "arms", int, required=True)
    shape_name = _take(entries, "design", "shape", str, default="obf")
    if shape_name not in _SHAPES:
        raise ParseError(f"design.shape must be one of {', '.join(_SHAPES)}")
    boundaries = _take(entries, "design", "boundaries", _float_list)
    n_per_stage = _take(entries, "design", "n", int)
    if shape_name == "custom":
        if boundaries is None:
            raise ParseError("design.shape = custom needs design.boundaries")
        shape = BoundaryShape("custom", boundaries)
    else:
        if boundaries is not None and n_per_stage is None:
            raise ParseError(
                "design.boundaries without design.n only makes sense for "
                "design.shape = custom")
        shape = BoundaryShape(_SHAPES[shape_name])

    kind = _take(entries, "endpoint", "type", str, required=True)
    if kind == "binary":
        endpoint = BinaryEndpointSpec(
            _take(entries, "endpoint", "p_control", float, required=True),
            _take(entries, "endpoint", "rd_relevant", float, required=True),
            _take(entries, "endpoint", "rd_uninteresting", float,
                  required=True))
        normal = binary_to_normal(endpoint)
    elif kind == "normal":
        endpoint = normal = NormalEffectSpec(
            _take(entries, "endpoint", "theta_prime", float, required=True),
            _take(entries, "endpoint", "theta_zero", float, required=True),
            _take(entries, "endpoint", "sigma_sq", float, required=True))
    else:
        raise ParseError("endpoint.type must be binary or normal")

    calibration = CalibrationConfig(
        alpha=_take(entries, "calibration", "alpha", float, required=True),
        power_target=_take(entries, "calibration", "power", float,
                           required=True),
        omega=_take(entries, "calibration", "omega", float, default=1e-5))

    effects: dict[str, EffectConfig] = {}
    for (section, key) in [k for k in entries if k[0] == "effects"]:
        value, no = entries.pop((section, key))
        try:
            deltas = _float_list(value)
        except ValueError:
            raise ParseError(f"bad value for effects.{key}: {value!r}", no)
        if len(deltas) != arms:
            raise ParseError(
                f"effects.{key} needs {arms} values, got {len(deltas)}", no)
        effects[key] = EffectConfig(deltas)
    if not effects:
        effects = _default_effects(arms, normal)

    if entries:
        (section, key), (_, no) = next(iter(entries.items()))
        raise ParseError(f"key '{section}.{key}' does not apply here", no)

    design = None
    if n_per_stage is not None:
        if boundaries is None:
            raise ParseError("design.n requires design.boundaries")
        design = TrialDesign(arms, arms, n_per_stage, boundaries,
                             calibration.alpha, normal.sigma)
    return ParsedConfig(arms=arms, shape=shape, design=design,
                        endpoint=endpoint, normal=normal,
                        calibration=calibration, effects=effects)


def _default_effects(arms: int, normal: NormalEffectSpec):
    """The three standard configurations on the working normal scale."""
    return {
        "global_null": EffectConfig.global_null(arms),
        "lfc": EffectConfig.least_favorable(arms, normal.theta_prime,
                                            normal.theta_zero),
        "all_relevant": EffectConfig.all_relevant(arms, normal.theta_prime),
    }


# ---------------------------------------------------------------------------
# design records (JSON round-trip of a designed trial)

def _num_out(x: float):
    return "inf" if x == math.inf else x


def _endpoint_record(endpoint) -> dict:
    if isinstance(endpoint, BinaryEndpointSpec):
        return {"type": "binary", "p_control": endpoint.p_control,
                "rd_relevant": endpoint.rd_relevant,
                "rd_uninteresting": endpoint.rd_uninteresting}
    return {"type": "normal", "theta_prime": endpoint.theta_prime,
            "theta_zero": endpoint.theta_zero,
            "sigma_sq": endpoint.sigma_sq}


def _endpoint_from_record(rec: dict):
    if rec["type"] == "binary":
        return BinaryEndpointSpec(rec["p_control"], rec["rd_relevant"],
                                  rec["rd_uninteresting"])
    return NormalEffectSpec(rec["theta_prime"], rec["theta_zero"],
                            rec["sigma_sq"])


def _design_record(design: TrialDesign) -> dict:
    return {"arms": design.arms, "stages": design.stages,
            "n_per_stage": design.n_per_stage,
            "boundaries": [_num_out(u) for u in design.boundaries],
            "alpha": design.alpha, "sigma": design.sigma}


def _design_from_record(rec: dict) -> TrialDesign:
    return TrialDesign(rec["arms"], rec["stages"], rec["n_per_stage"],
                       tuple(float(u) for u in rec["boundaries"]),
                       rec["alpha"], rec["sigma"])


def _load_designed(path: str):
    """A complete design plus its endpoint and effect configs, from either a
    design record or a config file that pins boundaries and n."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        rec = json.loads(text)
        endpoint = _endpoint_from_record(rec["endpoint"])
        normal = (binary_to_normal(endpoint)
                  if isinstance(endpoint, BinaryEndpointSpec) else endpoint)
        design = _design_from_record(rec["design"])
        effects = {name: EffectConfig(tuple(v))
                   for name, v in rec["effects"].items()}
        return design, endpoint, normal, effects
    parsed = parse_config(text)
    if parsed.design is None:
        raise ValueError(
            "config does not pin a complete design (custom boundaries plus "
            "design.n); run the design command first and pass its record")
    return parsed.design, parsed.endpoint, parsed.normal, parsed.effects


# ---------------------------------------------------------------------------
# text tables

def _fmt(x, nd: int, width: int = 0) -> str:
    s = "-" if x is None else f"{x:.{nd}f}"
    return s.rjust(width) if width else s


def _design_lines(design: TrialDesign) -> list[str]:
    bounds = "  ".join(_fmt(u, 2) if math.isfinite(u) else "inf"
                       for u in design.boundaries)
    return [
        f"arms {design.arms}  stages {design.stages}  "
        f"n/stage {design.n_per_stage}  max N {max_total_patients(design)}",
        f"boundaries  {bounds}",
    ]


def render_design_table(record: dict) -> str:
    design = _design_from_record(record["design"])
    lines = ["designed trial"] + ["  " + s for s in _design_lines(design)]
    return "\n".join(lines) + "\n"


def render_evaluate_table(report: dict) -> str:
    design = _design_from_record(report["design"])
    chars = report["characteristics"]
    lines = ["evaluated trial"] + ["  " + s for s in _design_lines(design)]
    lines.append(
        f"  pwer {_fmt(chars['pwer'], 3)}  power(lfc) "
        f"{_fmt(chars['power_lfc'], 3)}  type I(null) "
        f"{_fmt(chars['type_i_global_null'], 3)}")
    names = list(chars["ess"])
    if names:
        stages = len(next(iter(chars["stop_probs"].values())))
        width = max(len(s) for s in names)
        header = "  ".join(f"stop@{j}" for j in range(1, stages + 1))
        lines.append(f"  {'config'.ljust(width)}      ess  {header}")
        for name in names:
            stops = "  ".join(_fmt(p, 3, 6) for p in chars["stop_probs"][name])
            lines.append(f"  {name.ljust(width)}  {_fmt(chars['ess'][name], 1, 7)}  {stops}")
    return "\n".join(lines) + "\n"


def render_simulate_table(report: dict) -> str:
    lines = [f"simulation cross-check: {report['replicates']} replicates, "
             f"seed {report['seed']}"]
    for name, block in report["configs"].items():
        lines.append(f"  {name}")
        lines.append("    metric          analytic  empirical     mc se")
        for metric, analytic in block["analytic"].items():
            value, se = block["empirical"][metric]
            nd = 1 if metric == "ess" else 3
            lines.append(
                f"    {metric.ljust(14)} {_fmt(analytic, nd, 9)}  "
                f"{_fmt(value, nd, 9)}  {se:8.2g}")
    return "\n".join(lines) + "\n"


def render_compare_table(report: dict) -> str:
    ess_names = [name for row in report["rows"] if row["status"] == "computed"
                 for name in row["ess"]]
    names = list(dict.fromkeys(ess_names))
    width = max(len(row["name"]) for row in report["rows"])
    header = (f"{'design'.ljust(width)}  power  type I  pwer   max N  "
              + "  ".join(f"ESS({n})" for n in names))
    lines = [header]
    for row in report["rows"]:
        if row["status"] != "computed":
            lines.append(f"{row['name'].ljust(width)}  "
                         "not reproduced (out of scope)")
            continue
        ess = "  ".join(
            _fmt(row["ess"][n], 1, len(f"ESS({n})")) for n in names)
        lines.append(
            f"{row['name'].ljust(width)}  {_fmt(row['power'], 3)}  "
            f"{_fmt(row['type_i'], 3, 6)}  {_fmt(row['pwer'], 3)}  "
            f"{row['max_n']:5d}  {ess}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands

def _apply_overrides(cal: CalibrationConfig, cfg: RunConfig):
    updates = {}
    if cfg.alpha is not None:
        updates["alpha"] = cfg.alpha
    if cfg.power is not None:
        updates["power_target"] = cfg.power
    if cfg.omega is not None:
        updates["omega"] = cfg.omega
    return dataclasses.replace(cal, **updates) if updates else cal


def _calibrated_design(parsed: ParsedConfig, shape: BoundaryShape,
                       cal: CalibrationConfig, cfg: RunConfig) -> TrialDesign:
    template = TrialDesign(parsed.arms, parsed.arms, 1,
                           shape.multipliers(parsed.arms), cal.alpha,
                           parsed.normal.sigma)
    design = calibrate_boundaries(template, shape, cal, seed=cfg.seed)
    return find_sample_size(design, parsed.normal.theta_prime,
                            parsed.normal.theta_zero, cal, seed=cfg.seed,
                            target_abs_error=cfg.tol or _DESIGN_TOL)


def _read_config(path: str) -> ParsedConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _cmd_design(cfg: RunConfig) -> tuple[dict, str]:
    parsed = _read_config(cfg.config_path)
    cal = _apply_overrides(parsed.calibration, cfg)
    design = _calibrated_design(parsed, parsed.shape, cal, cfg)
    record = {
        "command": "design",
        "seed": cfg.seed,
        "design": _design_record(design),
        "endpoint": _endpoint_record(parsed.endpoint),
        "calibration": {"alpha": cal.alpha, "power": cal.power_target,
                        "omega": cal.omega},
        "effects": {name: list(e.deltas)
                    for name, e in parsed.effects.items()},
        "max_total_patients": max_total_patients(design),
    }
    return record, render_design_table(record)


def _cmd_evaluate(cfg: RunConfig) -> tuple[dict, str]:
    design, endpoint, normal, effects = _load_designed(cfg.config_path)
    kwargs = {"seed": cfg.seed}
    if cfg.tol is not None:
        kwargs["target_abs_error"] = cfg.tol
    chars = full_report(design, normal, effects, **kwargs)
    report = {
        "command": "evaluate",
        "seed": cfg.seed,
        "design": _design_record(design),
        "endpoint": _endpoint_record(endpoint),
        "characteristics": {
            "pwer": chars.pwer,
            "power_lfc": chars.power_lfc,
            "type_i_global_null": chars.type_i_global_null,
            "max_n": chars.max_n,
            "ess": dict(chars.ess),
            "stop_probs": {k: list(v) for k, v in chars.stop_probs.items()},
        },
    }
    return report, render_evaluate_table(report)


def _analytic_block(design: TrialDesign, effects: EffectConfig,
                    tol: float) -> dict:
    kw = {"target_abs_error": tol, "seed": 0}
    win = total_probability(win_problems(design, effects), **kw)
    rej = total_probability(reject_problems(design, effects), **kw)
    stops = [set_probability(s, **kw)
             for s in stop_stage_problems(design, effects)]
    ess = sum(est.value * stage_total_patients(design, j)
              for j, est in enumerate(stops, start=1))
    coords = [single(1, j) for j in range(1, design.stages + 1)]
    never = mvn_rectangle_prob(
        build_moment_problem(design, effects, coords,
                             [-math.inf] * design.stages,
                             list(design.boundaries)),
        target_abs_error=tol, seed=0)
    block = {"power": win.value, "reject": rej.value,
             "focal_crossing": 1.0 - never.value, "ess": ess}
    for j, est in enumerate(stops, start=1):
        block[f"stop_stage_{j}"] = est.value
    return block


def _cmd_simulate(cfg: RunConfig) -> tuple[dict, str]:
    design, endpoint, _, effects = _load_designed(cfg.config_path)
    tol = cfg.tol or _SIMULATE_TOL
    configs = {}
    for name, effect in effects.items():
        sim = estimate_characteristics(design, effect, cfg.reps,
                                       seed=cfg.seed)
        analytic = _analytic_block(design, effect, tol)
        empirical = {metric: list(sim.estimates[metric])
                     for metric in analytic}
        configs[name] = {"analytic": analytic, "empirical": empirical}
    report = {
        "command": "simulate",
        "replicates": cfg.reps,
        "seed": cfg.seed,
        "integration_tol": tol,
        "design": _design_record(design),
        "endpoint": _endpoint_record(endpoint),
        "configs": configs,
    }
    return report, render_simulate_table(report)


# comparison rows the engine does not reproduce; listed so their absence
# from the numbers is explicit rather than silent
_OUT_OF_SCOPE = ("mams_symmetric", "mams_zero_futility",
                 "separate_multistage")


def _characteristics_row(name: str, design: TrialDesign,
                         normal: NormalEffectSpec,
                         effects: dict[str, EffectConfig],
                         cfg: RunConfig) -> dict:
    kwargs = {"seed": cfg.seed}
    if cfg.tol is not None:
        kwargs["target_abs_error"] = cfg.tol
    chars = full_report(design, normal, effects, **kwargs)
    return {"name": name, "status": "computed",
            "n": design.n_per_stage, "n_is": "per arm per stage",
            "max_n": chars.max_n, "power": chars.power_lfc,
            "type_i": chars.type_i_global_null, "pwer": chars.pwer,
            "ess": dict(chars.ess),
            "design": _design_record(design)}


def _cmd_compare(cfg: RunConfig) -> tuple[dict, str]:
    parsed = _read_config(cfg.config_path)
    cal = _apply_overrides(parsed.calibration, cfg)
    normal = parsed.normal
    names = list(parsed.effects)

    proposed = _calibrated_design(parsed, parsed.shape, cal, cfg)
    rows = [_characteristics_row("proposed", proposed, normal,
                                 parsed.effects, cfg)]

    # pure drop-the-loser: no early stopping, final boundary calibrated
    dtl_shape = BoundaryShape(
        "custom", (math.inf,) * (parsed.arms - 1) + (1.0,))
    dtl = _calibrated_design(parsed, dtl_shape, cal, cfg)
    rows.append(_characteristics_row("dtl", dtl, normal, parsed.effects, cfg))

    n_multi, max_multi = comparator_multiarm(
        parsed.arms, cal.alpha, cal.power_target, normal.theta_prime,
        normal.theta_zero, normal.sigma)
    rows.append({
        "name": "multi_arm", "status": "computed",
        "n": n_multi, "n_is": "per arm, single stage", "max_n": max_multi,
        "power": multiarm_lfc_power(parsed.arms, n_multi, cal.alpha,
                                    normal.theta_prime, normal.theta_zero,
                                    normal.sigma),
        # every arm is tested against its own marginal critical value, so
        # both error rates sit at alpha by construction
        "type_i": cal.alpha, "pwer": cal.alpha,
        "ess": {name: float(max_multi) for name in names},
    })

    n_sep, total_sep = comparator_separate_trials(
        parsed.arms, cal.alpha, cal.power_target, normal.theta_prime,
        normal.sigma)
    power_sep = float(ndtr(
        normal.theta_prime * math.sqrt(n_sep / 2.0) / normal.sigma
        - ndtri(1.0 - cal.alpha)))
    rows.append({
        "name": "separate_trials", "status": "computed",
        "n": n_sep, "n_is": "per group per trial", "max_n": total_sep,
        "power": power_sep, "type_i": cal.alpha, "pwer": cal.alpha,
        "ess": {name: float(total_sep) for name in names},
    })

    rows.extend({"name": name, "status": "out_of_scope"}
                for name in _OUT_OF_SCOPE)
    report = {
        "command": "compare",
        "seed": cfg.seed,
        "calibration": {"alpha": cal.alpha, "power": cal.power_target,
                        "omega": cal.omega},
        "endpoint": _endpoint_record(parsed.endpoint),
        "rows": rows,
    }
    return report, render_compare_table(report)


_COMMANDS = {
    "design": _cmd_design,
    "evaluate": _cmd_evaluate,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
}


def run(cfg: RunConfig) -> int:
    """Execute one parsed invocation; returns the process exit status."""
    try:
        report, table = _COMMANDS[cfg.command](cfg)
    except (ValueError, RuntimeError, OSError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(table)
    if cfg.out_path:
        payload = json.dumps(report, indent=2, sort_keys=True) + "\n"
        with open(cfg.out_path, "w", encoding="utf-8") as fh:
            fh.write(payload)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dtldesign",
        description="Design and evaluate multi-stage drop-the-loser trials "
                    "with early stopping for superiority.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "design": "calibrate boundaries and sample size, write the record",
        "evaluate": "operating characteristics of a designed trial",
        "simulate": "Monte Carlo cross-check of the analytic numbers",
        "compare": "comparison table across competing designs",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help="config file (evaluate/simulate also take a "
                            "design record)")
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float,
                       help="integration target override")
        if name == "simulate":
            p.add_argument("--reps", type=int, default=100_000)
        if name in ("design", "compare"):
            p.add_argument("--alpha", type=float,
                           help="override calibration.alpha")
            p.add_argument("--power", type=float,
                           help="override calibration.power")
            p.add_argument("--omega", type=float,
                           help="override calibration.omega")
    ns = parser.parse_args(argv)
    cfg = RunConfig(command=ns.command, config_path=ns.config,
                    out_path=ns.out, seed=ns.seed,
                    reps=getattr(ns, "reps", 100_000), tol=ns.tol,
                    alpha=getattr(ns, "alpha", None),
                    power=getattr(ns, "power", None),
                    omega=getattr(ns, "omega", None))
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
