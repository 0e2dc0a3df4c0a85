"""Batch command-line front end.

``qrestrict <command> [--config FILE] [--set KEY=VALUE ...] [--out FILE]
[--format json|csv] [--seed N] [--threads N] [--timings]``

Exit codes: 0 success, 2 validation, 3 numerical failure, 4 capability exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from scipy.linalg import expm

from . import dyson, fcs, ising_exact, locality, mobius
from .errors import CapabilityError, DomainError, NumericalFailure, QRestrictError
from .gibbs import classical_restriction, format_float, gibbs_state, ground_state
from .quadrature import QuadratureRule
from .spin_algebra import (
    PAULI,
    Lattice,
    build_hamiltonian,
    is_hermitian,
    spectral_projections,
    transverse_ising,
)

COMMANDS = ("restrict", "potential", "betamax", "ising-ldp", "locality", "dyson-check", "fcs")
THERMAL_CAP = 12
GROUND_CAP = 20
WINDOW_CAP = 16

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CAPABILITY = 0, 2, 3, 4


class ConfigError(DomainError):
    pass


# ---------------------------------------------------------------- validation helpers

def _number(key, lo=None, hi=None, integer=False, lo_open=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {v!r}")
        if integer and (not float(v).is_integer()):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        v = int(v) if integer else float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{key}: must be finite")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ConfigError(f"{key}: {v} is below the allowed minimum {lo}")
        if hi is not None and v > hi:
            raise ConfigError(f"{key}: {v} exceeds the cap of {hi}")
        return v
    return check


def _beta(key):
    def check(v):
        if v == "ground":
            return v
        return _number(key, lo=0)(v)
    return check


def _choice(key, options):
    def check(v):
        if v not in options:
            raise ConfigError(f"{key}: {v!r} is not one of {list(options)}")
        return v
    return check


def _list_of(key, item):
    def check(v):
        if not isinstance(v, list) or not v:
            raise ConfigError(f"{key}: expected a non-empty list")
        return [item(x) for x in v]
    return check


def _optional_list(key, item):
    inner = _list_of(key, item)
    return lambda v: None if v is None else inner(v)


def _matrix(key):
    def check(v):
        if v is None:
            return None
        try:
            arr = np.array([[complex(*x) if isinstance(x, list) else complex(x) for x in row] for row in v])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse matrix ({exc})") from None
        if arr.shape != (2, 2):
            raise ConfigError(f"{key}: expected a 2x2 matrix")
        if not is_hermitian(arr):
            raise ConfigError(f"{key}: matrix is not Hermitian")
        return v
    return check


def _any(v):
    return v


@dataclass(frozen=True)
class Field:
    check: Callable[[Any], Any]
    default: Any = None
    required: bool = False


_X = Field(_choice("X", ("sx", "sy", "sz", "custom")), "sz")

SCHEMAS: dict[str, dict[str, Field]] = {
    "restrict": {
        "J": Field(_number("J"), 1.0),
        "h": Field(_number("h"), 1.0),
        "N": Field(_number("N", lo=1, integer=True), required=True),
        "X": _X,
        "matrix": Field(_matrix("matrix")),
        "beta": Field(_beta("beta"), "ground"),
        "window": Field(_optional_list("window", _number("window", lo=0, integer=True))),
    },
    "potential": {
        "J": Field(_number("J"), 1.0),
        "h": Field(_number("h"), 1.0),
        "N": Field(_number("N", lo=1, hi=mobius.MAX_SITES, integer=True), required=True),
        "X": _X,
        "matrix": Field(_matrix("matrix")),
        "beta": Field(_beta("beta"), "ground"),
        "kappa": Field(_number("kappa", lo=0), 0.0),
    },
    "betamax": {
        "J": Field(_number("J"), 1.0),
        "h": Field(_number("h"), 1.0),
        "a": Field(_number("a", lo=0), 1.0),
    },
    "ising-ldp": {
        "g": Field(_number("g"), required=True),
        "J": Field(_number("J", lo=0, lo_open=True), 1.0),
        "quadrature": Field(_number("quadrature", lo=8, integer=True), 4096),
        "n": Field(_list_of("n", _number("n", lo=1, integer=True)), [1, 2, 4, 8, 16, 32, 64]),
        "t": Field(_list_of("t", _number("t", lo=-ising_exact.T_BRACKET, hi=ising_exact.T_BRACKET)), [-0.5, 0.5]),
        "m": Field(_list_of("m", _number("m", lo=-1, hi=1)), [round(-1 + 0.1 * i, 10) for i in range(21)]),
    },
    "locality": {
        "epsilon": Field(_number("epsilon", lo=0), 0.2),
        "L": Field(_list_of("L", _number("L", lo=1, integer=True)), [1, 2]),
        "buffer": Field(_number("buffer", lo=0, integer=True), 3),
        "field_sign": Field(_choice("field_sign", ("up", "down")), "up"),
    },
    "dyson-check": {
        "epsilon": Field(_number("epsilon", lo=0), 0.2),
        "beta": Field(_number("beta", lo=0), 0.5),
        "sites": Field(_number("sites", lo=1, hi=6, integer=True), 3),
        "orders": Field(_list_of("orders", _number("orders", lo=0, hi=4, integer=True)), [0, 1, 2, 3]),
        "diagrams": Field(_number("diagrams", lo=0, integer=True), 20),
        "diagram_sites": Field(_number("diagram_sites", lo=2, hi=6, integer=True), 6),
        "diagram_beta": Field(_number("diagram_beta", lo=0, lo_open=True), 2.0),
        "fixtures": Field(_optional_list("fixtures", _any)),
        "kappa": Field(_number("kappa", lo=0), 6.0),
        "kp_beta": Field(_number("kp_beta", lo=0, lo_open=True), 20.0),
        "kp_sites": Field(_number("kp_sites", lo=1, integer=True), 12),
        "alpha1": Field(_number("alpha1", lo=0, lo_open=True), 0.5),
        "alpha2": Field(_number("alpha2", lo=0, lo_open=True), 0.5),
        "delta1": Field(_number("delta1", lo=0, lo_open=True, hi=1), 0.5),
        "delta2": Field(_number("delta2", lo=0, lo_open=True, hi=1), 0.5),
    },
    "fcs": {
        "model": Field(_any, "aklt"),
        "n": Field(_number("n", lo=1, hi=8, integer=True), 5),
        "ell": Field(_number("ell", lo=0, hi=8, integer=True), 3),
        "samples": Field(_number("samples", lo=0, integer=True), 16),
    },
}

COMMON = {"seed": Field(_number("seed", lo=0, integer=True), 0)}


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"command": self.command, **self.params}

    def __getitem__(self, key):
        return self.params[key]


def parse_config(obj: Mapping[str, Any] | str | Path, command: str | None = None,
                 overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Validate a config mapping (or JSON file); ``overrides`` win over file values."""
    if isinstance(obj, (str, Path)):
        path = Path(obj)
        if not path.is_file():
            raise ConfigError(f"config: file {path} does not exist")
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
    if not isinstance(obj, Mapping):
        raise ConfigError("config: top level must be an object")
    raw = dict(obj)
    file_command = raw.pop("command", None)
    command = command or file_command
    if command is None:
        raise ConfigError("command: missing required key")
    if file_command is not None and file_command != command:
        raise ConfigError(f"command: config says {file_command!r} but {command!r} was requested")
    if command not in SCHEMAS:
        raise ConfigError(f"command: unknown command {command!r}")
    raw.update(overrides or {})
    schema = {**SCHEMAS[command], **COMMON}
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{key}: unknown key for {command}")
    params = {}
    for key, spec in schema.items():
        if key in raw:
            params[key] = spec.check(raw[key])
        elif spec.required:
            raise ConfigError(f"{key}: missing required key")
        else:
            params[key] = spec.default
    _cross_checks(command, params)
    return RunConfig(command, params)


def _cross_checks(command: str, p: dict) -> None:
    if command in ("restrict", "potential"):
        if p["X"] == "custom" and p["matrix"] is None:
            raise ConfigError("matrix: required when X is 'custom'")
        if p["X"] != "custom" and p["matrix"] is not None:
            raise ConfigError("matrix: only allowed when X is 'custom'")
    if command == "restrict":
        cap = GROUND_CAP if p["beta"] == "ground" else THERMAL_CAP
        kind = "ground states" if p["beta"] == "ground" else "thermal states"
        if p["N"] > cap:
            raise ConfigError(f"N: {p['N']} exceeds the cap of {cap} sites for {kind}")
        window = p["window"] if p["window"] is not None else list(range(p["N"]))
        if len(window) > WINDOW_CAP:
            raise ConfigError(f"window: {len(window)} sites exceed the cap of {WINDOW_CAP}")
        if any(s >= p["N"] for s in window) or len(set(window)) != len(window):
            raise ConfigError("window: sites must be distinct and lie in 0..N-1")
    if command == "ising-ldp":
        if abs(p["g"]) <= 1:
            raise ConfigError(f"g: |g| = {abs(p['g'])} must exceed 1")
        if p["quadrature"] < 8 * max(p["n"]):
            raise ConfigError(f"quadrature: {p['quadrature']} is below 8 * max(n) = {8 * max(p['n'])}")
    if command == "locality":
        if p["epsilon"] >= 1:
            raise ConfigError(f"epsilon: {p['epsilon']} must lie in [0, 1)")
        for L in p["L"]:
            N = 2 * L * L + 1 + 2 * p["buffer"]
            if N > locality.MAX_SITES:
                raise ConfigError(f"L: L={L} gives N={N}, above the cap of {locality.MAX_SITES} sites")
    if command == "dyson-check" and p["alpha1"] >= 2.0:
        raise ConfigError("alpha1: must be smaller than the gap 2")


# ---------------------------------------------------------------- serialization

def _plain(obj):
    """Convert to JSON-ready values; floats stay floats for the custom writer."""
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _float_token(x: float) -> str:
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format_float(x)


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: insertion key order, 17 significant digits, LF."""

    def emit(v, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {emit(x, level + 1)}" for k, x in v.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(v, list):
            if not v:
                return "[]"
            if all(not isinstance(x, (dict, list)) for x in v):
                return "[" + ", ".join(emit(x, level) for x in v) + "]"
            return "[\n" + ",\n".join(pad + emit(x, level + 1) for x in v) + "\n" + end + "]"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, int):
            return str(v)
        if isinstance(v, float):
            return _float_token(v)
        if v is None:
            return "null"
        return json.dumps(v, ensure_ascii=False)

    return emit(_plain(obj), 0) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


@dataclass
class Outcome:
    results: dict
    csv: str
    extra_csv: dict[str, str] = field(default_factory=dict)


# ---------------------------------------------------------------- commands

def _observable(p):
    if p["X"] == "custom":
        return np.array([[complex(*x) if isinstance(x, list) else complex(x) for x in row] for row in p["matrix"]])
    return PAULI[p["X"]]


def run_restrict(p, seed) -> Outcome:
    lat = Lattice.chain(p["N"])
    H = build_hamiltonian(transverse_ising(p["J"], p["h"]), lat)
    if p["beta"] == "ground":
        state = ground_state(H, "auto", seed=seed, lattice=lat)
        meta = {"energy": state.energy, "degenerate": state.degenerate, "residual": state.residual}
    else:
        state = gibbs_state(H, p["beta"], lattice=lat)
        meta = {"log_partition": state.log_partition}
    spec = spectral_projections(_observable(p))
    window = p["window"] if p["window"] is not None else list(range(p["N"]))
    mu = classical_restriction(state, spec, window)
    table = [{"config": list(c), "prob": pr} for c, pr in mu.items()]
    return Outcome({**meta, "window": list(mu.window), "values": list(mu.values), "table": table}, mu.to_csv())


def run_potential(p, seed) -> Outcome:
    phi = transverse_ising(p["J"], p["h"])
    spec = spectral_projections(_observable(p))
    sites = list(range(p["N"]))
    psi = mobius.classical_potential(phi, spec, p["beta"], sites)
    lat = Lattice.chain(p["N"])
    H = build_hamiltonian(phi, lat)
    state = ground_state(H, "auto", seed=seed, lattice=lat) if p["beta"] == "ground" else gibbs_state(H, p["beta"], lat)
    mu = classical_restriction(state, spec, sites)
    err = float(np.abs(psi.reconstruct(sites) - mu.probs).max())
    terms = []
    for A, t in psi.terms.items():
        for idx in np.ndindex(t.shape):
            terms.append({"sites": list(A), "config": [float(psi.values[i]) for i in idx], "value": float(t[idx])})
    res = {
        "hard_core": psi.hard_core,
        "norm": mobius.potential_norm(psi, p["kappa"]),
        "reconstruction_error": err,
        "terms": terms,
    }
    return Outcome(res, psi.to_csv())


def run_betamax(p, seed) -> Outcome:
    phi = transverse_ising(p["J"], p["h"])
    b = mobius.beta_max(phi, p["a"])
    lhs = mobius.high_temperature_lhs(phi, p["a"], b) if math.isfinite(b) else 0.0
    res = {"a": p["a"], "beta_max": b, "lhs_at_beta_max": lhs}
    return Outcome(res, _csv(["a", "beta_max"], [[p["a"], b]]))


def run_ising_ldp(p, seed) -> Outcome:
    params = ising_exact.IsingParams(p["g"], p["J"])
    quad = QuadratureRule.trapezoid(p["quadrature"])
    rows = []
    for n in p["n"]:
        for t in p["t"]:
            logG = ising_exact.log_toeplitz_generating(n, t, params, quad)
            G = math.exp(logG) if logG < 709 else math.inf
            rows.append([n, float(t), G, logG / n, ising_exact.szego_F(t, params, quad)])
    rate = []
    for m in p["m"]:
        r = ising_exact.rate_function(m, params, quad)
        rate.append([float(m), r.value, r.t_star, r.at_boundary])
    res = {
        "magnetization": ising_exact.magnetization(params, quad),
        "generating": [dict(zip(["n", "t", "G_n", "logG_over_n", "F"], r)) for r in rows],
        "rate": [dict(zip(["m", "I", "t_star", "at_boundary"], r)) for r in rate],
    }
    return Outcome(res, _csv(["n", "t", "G_n", "logG_over_n", "F"], rows),
                   {"_rate": _csv(["m", "I"], [r[:2] for r in rate])})


def run_locality(p, seed) -> Outcome:
    probes = [locality.ProbeSpec(p["epsilon"], L, p["buffer"], p["field_sign"]) for L in p["L"]]
    reports = locality.nonlocality_scan(probes, seed)
    keys = ["L", "N", "epsilon", "p_zero", "p_one", "gap"]
    rows = [[r.L, r.N, float(r.epsilon), r.p_zero, r.p_one, r.gap] for r in reports]
    res = {"scan": [{**dict(zip(keys, row)), "error": r.error} for row, r in zip(rows, reports)]}
    return Outcome(res, _csv(keys, rows))


def run_dyson_check(p, seed) -> Outcome:
    phi0, ups, P = dyson.ising_polymer_model(p["epsilon"])
    lat = Lattice.chain(p["sites"])
    H0 = build_hamiltonian(phi0, lat)
    V = build_hamiltonian(ups, lat)
    exact = expm(-p["beta"] * (np.asarray(H0) + np.asarray(V)))
    trunc = []
    for order in p["orders"]:
        approx = dyson.truncated_dyson(H0, V, p["beta"], order)
        trunc.append({"order": order, "error": float(np.linalg.norm(approx - exact, 2)),
                      "bound": dyson.dyson_remainder_bound(H0, V, p["beta"], order)})

    spec = spectral_projections(PAULI["sx"])
    sites = tuple(range(p["diagram_sites"]))
    rng = np.random.default_rng(seed)
    if p["fixtures"] is not None:
        diagrams = [dyson.Diagram.from_json(d) for d in p["fixtures"]]
    else:
        diagrams = []
        while len(diagrams) < p["diagrams"]:
            d = dyson.random_diagram(rng, sites, p["diagram_beta"], n_max=4)
            if len(dyson.polymer_decompose(d)) >= 2:
                diagrams.append(d)
    worst = {"residual": 0.0, "volume_delta": 0.0, "off_root_delta": 0.0}
    fact = []
    for d in diagrams:
        config = {s: float(rng.choice(spec.eigenvalues)) for s in sites}
        ctx = dyson.DensityContext(phi0, ups, P, spec, config, sites)
        r = dyson.factorization_residual(d, ctx)
        fact.append({"n": d.n, "polymers": r.polymers, "density": r.density, "residual": r.residual,
                     "volume_delta": r.volume_delta, "off_root_delta": r.off_root_delta})
        for k in worst:
            worst[k] = max(worst[k], getattr(r, k))

    kp_params = dyson.KPParams(p["alpha1"], p["alpha2"], p["delta1"], p["delta2"], 2.0, p["kappa"], p["kp_beta"],
                               dyson.gamma_constant(spec, P))
    _, kp_ups, _ = dyson.ising_polymer_model(math.exp(-2 * p["kappa"]))
    cert = dyson.kp_certificate(kp_params, kp_ups, range(p["kp_sites"]))
    res = {
        "truncation": trunc,
        "factorization": {"diagrams": fact, **{f"max_{k}": v for k, v in worst.items()}},
        "kp": {"passes": cert.passes, "worst_ratio": cert.worst_ratio, "gamma": kp_params.gamma},
    }
    rows = [[f"truncation_error_order_{t['order']}", t["error"]] for t in trunc]
    rows += [[f"truncation_bound_order_{t['order']}", t["bound"]] for t in trunc]
    rows += [[f"max_{k}", v] for k, v in worst.items()]
    rows += [["kp_passes", str(cert.passes).lower()], ["kp_worst_ratio", cert.worst_ratio]]
    return Outcome(res, _csv(["quantity", "value"], rows))


def run_fcs(p, seed) -> Outcome:
    model = fcs.aklt() if p["model"] == "aklt" else fcs.FcsModel.from_json(p["model"])
    single = fcs.fcs_restriction(model, 1)
    scan = fcs.mie_scan(model, p["n"], seed=seed, samples=p["samples"])
    per_outcome: dict[tuple, float] = {}
    for _, _, c in scan.rows:
        per_outcome[c.x_V] = max(per_outcome.get(c.x_V, 0.0), c.value)
    rows = [[p["n"], " ".join(str(x) for x in xv), v] for xv, v in per_outcome.items()]
    res = {
        "conditions": model.conditions(),
        "marginals": list(single.probs),
        "product_deviation": fcs.product_deviation(model, p["ell"]),
        "best": {"A": scan.a_name, "B": scan.b_name, "x_V": list(scan.best.x_V), "corr": scan.best.value},
        "correlations": [{"n": r[0], "x_V": r[1], "corr": r[2]} for r in rows],
    }
    return Outcome(res, _csv(["n", "x_V", "corr"], rows))


RUNNERS = {
    "restrict": run_restrict,
    "potential": run_potential,
    "betamax": run_betamax,
    "ising-ldp": run_ising_ldp,
    "locality": run_locality,
    "dyson-check": run_dyson_check,
    "fcs": run_fcs,
}


def execute(config: RunConfig, timings: bool = False) -> tuple[dict, Outcome]:
    start = time.perf_counter()
    outcome = RUNNERS[config.command](config.params, config.params["seed"])
    report = {
        "command": config.command,
        "config_echo": config.to_json(),
        "results": outcome.results,
        "timings_ms": {"total": (time.perf_counter() - start) * 1e3} if timings else {},
    }
    return report, outcome


def emit_report(report: dict, outcome: Outcome, fmt: str, path: str | None) -> None:
    if fmt == "json":
        payloads = {path: dumps(report)}
    else:
        payloads = {path: outcome.csv}
        for suffix, text in outcome.extra_csv.items():
            if path is None:
                payloads[f"<stdout>{suffix}"] = text
            else:
                p = Path(path)
                payloads[str(p.with_name(p.stem + suffix + (p.suffix or ".csv")))] = text
    for target, text in payloads.items():
        if target is None or target.startswith("<stdout>"):
            sys.stdout.write(text)
            continue
        try:
            with open(target, "w", newline="\n", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"out: cannot write {target} ({exc.strerror})") from None


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set: expected KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qrestrict", description="Classical restrictions of quantum spin states.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (JSON value)")
    ap.add_argument("--out", help="output file (default: stdout)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--timings", action="store_true", help="record wall-clock timings (breaks byte-identity)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = _parse_set(args.set)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads: must be >= 1")
        config = parse_config(args.config if args.config else {}, args.command, overrides)
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                report, outcome = execute(config, args.timings)
        else:
            report, outcome = execute(config, args.timings)
        emit_report(report, outcome, args.format, args.out)
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QRestrictError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
