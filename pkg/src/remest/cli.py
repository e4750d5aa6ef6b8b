"""Command-line front end: analyze | sweep | optimize | simulate.

Configuration lives in a single YAML file (nested key/value sections);
command-line flags override config fields. Results are emitted as CSV (one
header row, '.' decimal) or JSON lines, one record per row, so external
plotting needs no bespoke tooling. Exit codes: 0 success, 1 validation
error, 2 infeasible (estimation unbounded everywhere).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from typing import Any, Sequence

import numpy as np
import yaml

from . import analysis, coding, montecarlo
from .analysis import AllUnboundedError
from .coding import BecChannel
from .quantizer import BitAllocation
from .system import ScalarPlant, VectorPlant


class ConfigError(ValueError):
    """Configuration file failed validation; message carries the field path."""


# ---------------------------------------------------------------------------
# config access helpers
# ---------------------------------------------------------------------------

_MISSING = object()


def _section(cfg: dict, name: str, required: bool = True) -> dict:
    value = cfg.get(name, _MISSING)
    if value is _MISSING:
        if required:
            raise ConfigError(f"{name}: section is required")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a mapping")
    return value


def _field(section: dict, path: str, key: str, typ, default=_MISSING):
    value = section.get(key, _MISSING)
    if value is _MISSING:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}: field is required")
        return default
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, int) and not isinstance(value, bool):
        return int(value)
    if typ is str and isinstance(value, str):
        return value
    if typ is bool and isinstance(value, bool):
        return value
    if typ is list and isinstance(value, list):
        return value
    raise ConfigError(f"{path}.{key}: expected {typ.__name__}, got {value!r}")


def load_config(path: str) -> dict:
    try:
        with open(path) as handle:
            cfg = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    return cfg


def build_plant(cfg: dict) -> ScalarPlant | VectorPlant:
    sec = _section(cfg, "plant")
    kind = _field(sec, "plant", "type", str, "scalar")
    try:
        if kind == "scalar":
            x0 = _field(sec, "plant", "x0", list, [-0.5, 0.5])
            if len(x0) != 2:
                raise ConfigError("plant.x0: expected [lo, hi]")
            return ScalarPlant(
                a=_field(sec, "plant", "a", float),
                w_max=_field(sec, "plant", "w_max", float),
                t_samp=_field(sec, "plant", "t_samp", int),
                x0_lo=float(x0[0]),
                x0_hi=float(x0[1]),
            )
        if kind == "vector":
            jordan = None
            if "jordan" in sec:
                jsec = sec["jordan"]
                if not isinstance(jsec, dict) or "phi" not in jsec or "j_mat" not in jsec:
                    raise ConfigError("plant.jordan: expected a mapping with phi and j_mat")
                jordan = (
                    np.array(jsec["phi"], dtype=float),
                    np.array(jsec["j_mat"], dtype=float),
                )
            return VectorPlant(
                a_mat=np.array(_field(sec, "plant", "a_mat", list), dtype=float),
                w_max=np.array(_field(sec, "plant", "w_max", list), dtype=float),
                t_samp=_field(sec, "plant", "t_samp", int),
                x0_box=np.array(_field(sec, "plant", "x0_box", list), dtype=float),
                jordan=jordan,
            )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"plant: {exc}") from exc
    raise ConfigError(f"plant.type: expected 'scalar' or 'vector', got {kind!r}")


def build_comm(cfg: dict, plant) -> dict:
    sec = _section(cfg, "comm")
    mode = _field(sec, "comm", "mode", str, "abstract")
    if mode not in ("abstract", "uncoded", "coded"):
        raise ConfigError(f"comm.mode: unknown mode {mode!r}")
    out = {
        "mode": mode,
        "r_bits": _field(sec, "comm", "r_bits", int),
        "p_e": _field(sec, "comm", "p_e", float, None),
        "d": _field(sec, "comm", "d", int, None),
        "n": _field(sec, "comm", "n", int, None),
        "code": _field(sec, "comm", "code", str, "ensemble"),
    }
    if out["r_bits"] < 1:
        raise ConfigError("comm.r_bits: must be >= 1")
    if mode == "abstract":
        if out["p_e"] is None:
            raise ConfigError("comm.p_e: required in abstract mode")
        if not 0.0 <= out["p_e"] <= 1.0:
            raise ConfigError("comm.p_e: must be in [0, 1]")
        if out["d"] is None:
            raise ConfigError("comm.d: required in abstract mode")
        if not 0 <= out["d"] <= plant.t_samp:
            raise ConfigError(f"comm.d: must be in [0, t_samp={plant.t_samp}]")
    if mode == "coded":
        if out["n"] is None:
            raise ConfigError("comm.n: required in coded mode")
        if not out["r_bits"] <= out["n"] <= plant.t_samp:
            raise ConfigError("comm.n: must satisfy r_bits <= n <= t_samp")
    if mode == "uncoded" and out["r_bits"] > plant.t_samp:
        raise ConfigError("comm.r_bits: uncoded mode needs r_bits <= t_samp")
    return out


def build_channel(cfg: dict, required: bool) -> BecChannel | None:
    sec = _section(cfg, "channel", required=required)
    if not sec:
        return None
    zeta = _field(sec, "channel", "zeta", float)
    try:
        return BecChannel(zeta)
    except ValueError as exc:
        raise ConfigError(f"channel.zeta: {exc}") from exc


def build_pe_model(cfg: dict, comm: dict, channel: BecChannel | None, seed: int | None):
    sec = _section(cfg, "pe_model", required=False)
    name = _field(sec, "pe_model", "model", str, "normal_approx") if sec else "normal_approx"
    if name == "normal_approx":
        return "normal_approx", name
    if name == "simulated_curve":
        if channel is None:
            raise ConfigError("pe_model.model: simulated_curve needs a channel section")
        trials = _field(sec, "pe_model", "trials", int, 20_000)
        model = coding.simulated_pe_model(
            comm["r_bits"], channel, trials=trials, seed=0 if seed is None else seed
        )
        return model, name
    raise ConfigError(f"pe_model.model: unknown model {name!r}")


# ---------------------------------------------------------------------------
# record emission
# ---------------------------------------------------------------------------

def _encode(value: Any) -> Any:
    if value is None:
        return None
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return "unbounded" if math.isinf(value) else value
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def write_records(path: str, fmt: str, records: list[dict]) -> None:
    """Write records as CSV (one header row) or JSON lines."""
    records = [{k: _encode(v) for k, v in rec.items()} for rec in records]
    if fmt == "jsonl":
        with open(path, "w") as handle:
            for rec in records:
                handle.write(json.dumps(rec) + "\n")
        return
    if fmt != "csv":
        raise ConfigError(f"output.format: expected 'csv' or 'jsonl', got {fmt!r}")
    fields = list(records[0].keys()) if records else []
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        for rec in records:
            writer.writerow(
                {
                    k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                    for k, v in rec.items()
                }
            )


def _decode_csv(text: str) -> Any:
    if text == "":
        return None
    if text == "unbounded":
        return math.inf
    if text == "True" or text == "true":
        return True
    if text == "False" or text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_records(path: str, fmt: str) -> list[dict]:
    """Parse a file written by write_records back to typed records."""
    if fmt == "jsonl":
        with open(path) as handle:
            records = [json.loads(line) for line in handle if line.strip()]
        return [
            {k: (math.inf if v == "unbounded" else v) for k, v in rec.items()}
            for rec in records
        ]
    with open(path, newline="") as handle:
        return [
            {k: _decode_csv(v) for k, v in row.items()}
            for row in csv.DictReader(handle)
        ]


# ---------------------------------------------------------------------------
# shared assembly
# ---------------------------------------------------------------------------

def _abstraction_for(comm: dict, channel: BecChannel | None, pe_model) -> tuple[float, int]:
    """Map the configured comm mode to an effective (p_e, d) pair."""
    mode = comm["mode"]
    if mode == "abstract":
        return comm["p_e"], comm["d"]
    if channel is None:
        raise ConfigError("channel: section required for uncoded/coded modes")
    if mode == "uncoded":
        return coding.uncoded_error_prob(channel, comm["r_bits"]), comm["r_bits"]
    n = comm["n"]
    model = analysis.resolve_pe_model(pe_model, channel, comm["r_bits"])
    return model(n), n


def _analysis_record(plant, comm, channel, pe_model) -> dict:
    p_e, d = _abstraction_for(comm, channel, pe_model)
    r = comm["r_bits"]
    rec = {
        "plant_type": "vector" if isinstance(plant, VectorPlant) else "scalar",
        "mode": comm["mode"],
        "zeta": channel.zeta if channel is not None else None,
        "r_bits": r,
        "n": comm["n"],
        "d": d,
        "p_e": p_e,
    }
    if isinstance(plant, VectorPlant):
        alloc = BitAllocation.equal_split(r, plant.dim)
        report = analysis.vector_stability_check(p_e, alloc, plant)
        worst = int(np.argmax(report.growth))
        rec.update(
            theta=report.theta[worst],
            growth=report.growth[worst],
            stable=report.stable,
            single_shot_bound=None,
            steady_state_bound=analysis.vector_steady_state_bound(plant, alloc, p_e, d),
        )
    else:
        report = analysis.stability_check(p_e, r, plant)
        rec.update(
            theta=report.theta,
            growth=report.growth,
            stable=report.stable,
            single_shot_bound=analysis.single_shot_bound(p_e, r, d, plant),
            steady_state_bound=analysis.steady_state_bound(p_e, r, d, plant),
        )
    return rec


def _sim_config(
    cfg: dict, plant, comm, seed: int, zeta_override: float | None = None
) -> montecarlo.SimConfig:
    sec = _section(cfg, "sim")
    trials = _field(sec, "sim", "trials", int)
    if trials < 1:
        raise ConfigError("sim.trials: must be >= 1")
    rounds = _field(sec, "sim", "rounds", int)
    if rounds < 1:
        raise ConfigError("sim.rounds: must be >= 1")
    zeta = zeta_override
    if zeta is None:
        channel = build_channel(cfg, required=comm["mode"] != "abstract")
        zeta = channel.zeta if channel is not None else None
    try:
        return montecarlo.SimConfig(
            plant=plant,
            r_bits=comm["r_bits"],
            comm_mode=comm["mode"],
            trials=trials,
            rounds=rounds,
            master_seed=seed,
            p_e=comm["p_e"],
            zeta=zeta,
            n_code=comm["n"],
            code_mode=comm["code"],
            d_latency=comm["d"],
            burn_in=_field(sec, "sim", "burn_in", int, None),
            noise_mode=_field(sec, "sim", "noise", str, "uniform"),
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc


def _resolve_seed(cfg: dict, args) -> int | None:
    if args.seed is not None:
        return args.seed
    sec = _section(cfg, "sim", required=False)
    if sec:
        return _field(sec, "sim", "seed", int, None)
    return None


def _emit(args, cfg: dict, records: list[dict]) -> None:
    out_sec = _section(cfg, "output", required=False)
    path = args.out or (out_sec.get("path") if out_sec else None)
    fmt = args.format or (out_sec.get("format") if out_sec else None) or "csv"
    if fmt not in ("csv", "jsonl"):
        raise ConfigError(f"output.format: expected 'csv' or 'jsonl', got {fmt!r}")
    if path:
        write_records(path, fmt, records)
        print(f"wrote {len(records)} record(s) to {path}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    plant = build_plant(cfg)
    comm = build_comm(cfg, plant)
    channel = build_channel(cfg, required=comm["mode"] != "abstract")
    pe_model, _ = build_pe_model(cfg, comm, channel, _resolve_seed(cfg, args))
    rec = _analysis_record(plant, comm, channel, pe_model)
    bound = rec["steady_state_bound"]
    print(f"stable: {rec['stable']}  growth: {rec['growth']:.6g}")
    print(f"steady-state bound: {'unbounded' if math.isinf(bound) else f'{bound:.6g}'}")
    _emit(args, cfg, [rec])
    return 0


def _sweep_axes(cfg: dict, comm: dict) -> list[tuple[str, list]]:
    sec = _section(cfg, "sweep")
    axes = []
    for name in ("n", "p_e", "d", "zeta"):
        if name in sec:
            values = sec[name]
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep.{name}: expected a nonempty list")
            axes.append((name, values))
    if not axes:
        raise ConfigError("sweep: at least one axis (n, p_e, d, zeta) is required")
    mode = comm["mode"]
    allowed = {
        "abstract": {"p_e", "d"},
        "uncoded": {"zeta"},
        "coded": {"n", "zeta"},
    }[mode]
    for name, _ in axes:
        if name not in allowed:
            raise ConfigError(
                f"sweep.{name}: axis not valid for comm.mode={mode!r} "
                f"(allowed: {sorted(allowed)})"
            )
    return axes


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    plant = build_plant(cfg)
    comm = build_comm(cfg, plant)
    axes = _sweep_axes(cfg, comm)
    seed = _resolve_seed(cfg, args)
    sweep_sec = _section(cfg, "sweep")
    with_sim = bool(sweep_sec.get("simulate", False))
    if with_sim and seed is None:
        raise ConfigError("sim.seed or --seed: required when sweep.simulate is on")
    records = []
    names = [name for name, _ in axes]
    for idx, values in enumerate(itertools.product(*(vals for _, vals in axes))):
        point = dict(comm)
        zeta_override = None
        for name, value in zip(names, values):
            if name == "zeta":
                zeta_override = float(value)
            elif name == "n":
                point["n"] = int(value)
            elif name == "d":
                point["d"] = int(value)
            elif name == "p_e":
                point["p_e"] = float(value)
        channel = (
            BecChannel(zeta_override)
            if zeta_override is not None
            else build_channel(cfg, required=comm["mode"] != "abstract")
        )
        pe_model, _ = build_pe_model(cfg, point, channel, seed)
        try:
            rec = _analysis_record(plant, point, channel, pe_model)
        except coding.RateAboveCapacityError:
            rec = {
                "plant_type": "vector" if isinstance(plant, VectorPlant) else "scalar",
                "mode": point["mode"],
                "zeta": channel.zeta if channel is not None else None,
                "r_bits": point["r_bits"],
                "n": point["n"],
                "d": point["n"],
                "p_e": None,
                "theta": None,
                "growth": None,
                "stable": False,
                "single_shot_bound": None,
                "steady_state_bound": math.inf,
            }
        if with_sim:
            sim_seed = int(np.random.SeedSequence((seed, idx)).generate_state(1)[0])
            sim_cfg = _sim_config(cfg, plant, point, sim_seed, zeta_override)
            report = montecarlo.simulate(sim_cfg, parallel=args.parallel)
            rec["empirical_error"] = report.steady_state_error
            rec["empirical_failure_rate"] = report.failure_rate
        records.append(rec)
    print(f"swept {len(records)} point(s)")
    _emit(args, cfg, records)
    return 0


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    plant = build_plant(cfg)
    comm = build_comm(cfg, plant)
    channel = build_channel(cfg, required=True)
    seed = _resolve_seed(cfg, args)
    pe_model, _ = build_pe_model(cfg, comm, channel, seed)
    opt_sec = _section(cfg, "optimize", required=False)
    n_range = None
    if opt_sec:
        n_lo = _field(opt_sec, "optimize", "n_min", int, None)
        n_hi = _field(opt_sec, "optimize", "n_max", int, None)
        if (n_lo is None) != (n_hi is None):
            raise ConfigError("optimize: n_min and n_max must be given together")
        if n_lo is not None:
            n_range = range(n_lo, n_hi + 1)
    result = analysis.optimize_blocklength(
        comm["r_bits"], plant, channel, pe_model, n_range=n_range
    )
    records = [
        {
            "n": n,
            "bound": value,
            "n_star": result.n_star,
            "n_heuristic": result.n_heuristic,
            "n_min_feasible": result.feasible_range[0],
            "n_max_feasible": result.feasible_range[1],
            "bound_at_star": result.bound_at_star,
        }
        for n, value in result.curve
    ]
    print(
        f"optimal blocklength: {result.n_star} "
        f"(bound {result.bound_at_star:.6g}, heuristic {result.n_heuristic})"
    )
    _emit(args, cfg, records)
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(cfg, args)
    if seed is None:
        raise ConfigError("--seed (or sim.seed): required for simulate")
    plant = build_plant(cfg)
    comm = build_comm(cfg, plant)
    sim_cfg = _sim_config(cfg, plant, comm, seed)
    report = montecarlo.simulate(sim_cfg, parallel=args.parallel)
    vector = isinstance(plant, VectorPlant)
    records = []
    for rd in range(report.rounds):
        rec: dict[str, Any] = {"round": rd}
        rec["mean_error"] = float(report.mean_error[rd])
        rec["error_se"] = float(report.error_se[rd])
        if vector:
            for i in range(plant.dim):
                rec[f"mean_width_{i}"] = float(report.mean_width[rd, i])
            if report.expected_width is not None:
                for i in range(plant.dim):
                    rec[f"expected_width_{i}"] = float(report.expected_width[rd, i])
        else:
            rec["mean_width"] = float(report.mean_width[rd])
            if report.expected_width is not None:
                rec["expected_width"] = float(report.expected_width[rd])
        rec.update(
            trials=report.trials,
            burn_in=report.burn_in,
            seed=seed,
            failure_rate=report.failure_rate,
            steady_state_error=report.steady_state_error,
            expected_p_e=report.expected_p_e,
            analytic_bound=report.analytic_bound,
            containment_violations=report.containment_violations,
            half_width_violations=report.half_width_violations,
            bound_violations=report.bound_violations,
            width_mismatches=report.width_mismatches,
        )
        records.append(rec)
    bound = report.analytic_bound
    print(
        f"steady-state error: {report.steady_state_error:.6g}  "
        f"bound: {'n/a' if bound is None else 'unbounded' if math.isinf(bound) else f'{bound:.6g}'}  "
        f"failure rate: {report.failure_rate:.4f}"
    )
    print(
        f"violations: containment={report.containment_violations} "
        f"half_width={report.half_width_violations} "
        f"bound={report.bound_violations} width={report.width_mismatches}"
    )
    _emit(args, cfg, records)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; bad flags are validation errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="remest",
        description=(
            "Remote-estimation analysis and simulation over a "
            "latency-reliability constrained link"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "analyze": (cmd_analyze, "stability report and error bounds for one configuration"),
        "sweep": (
            cmd_sweep,
            "Cartesian sweep over config axes (sweep.n / p_e / d / zeta); "
            "CSV columns: inputs, p_e, theta, growth, stable, bounds"
            " (+ empirical columns with sweep.simulate)",
        ),
        "optimize": (
            cmd_optimize,
            "grid-search the blocklength minimizing the steady-state bound; "
            "CSV columns: n, bound, n_star, n_heuristic, feasible range",
        ),
        "simulate": (
            cmd_simulate,
            "Monte Carlo simulation; CSV columns: per-round means/SEs, "
            "widths, summary fields, violation counters",
        ),
    }
    for name, (func, help_text) in specs.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument(
            "--format", default=None, choices=("csv", "jsonl"), help="output format"
        )
        p.add_argument("--seed", type=int, default=None, help="master random seed")
        p.add_argument(
            "--parallel", type=int, default=1, help="worker processes for trials"
        )
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except AllUnboundedError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except (ValueError, coding.RateAboveCapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
