"""Command-line experiment runner.

Every subcommand reads its parameters from an optional JSON config file,
then applies ``--param key=value`` overrides and the common flags (flags
win). Results go to a CSV file (``--out``, or stdout) and, with ``--out``,
a JSON summary next to it (same stem, ``.json``).

Exit status: 0 on success, 1 when a checked inequality is violated, 2 when
the configuration is invalid.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

import numpy as np

from . import anderson as an
from . import verify
from .bounds import DomainError, ModelParams, bound_rows, delta_t_lower
from .cheeger import WindowTooLargeError, beta_bruteforce
from .hamiltonian import Potential, assemble
from .lattice import BoxRegion, TrimPattern, k_star
from .spectra import derivative_check, energy_curve, ground_energy

COMMANDS = ("bounds", "gsenergy", "curve", "cheeger", "wegner", "pvp", "specavg", "gsmc", "verify")


class ConfigError(ValueError):
    def __init__(self, param: str, message: str):
        super().__init__(f"{param}: {message}")
        self.param = param


class Params:
    """Typed access to the merged parameter map; errors name the key."""

    def __init__(self, data: dict):
        self.data = dict(data)

    def get(self, key, default=None, kind=None, required=False):
        if key not in self.data or self.data[key] is None:
            if required:
                raise ConfigError(key, "missing required parameter")
            return default
        v = self.data[key]
        if kind is None:
            return v
        try:
            return kind(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"invalid value {v!r} ({exc})") from None

    def positive_int(self, key, default=None, required=False):
        v = self.get(key, default, int, required)
        if v is not None and v < 1:
            raise ConfigError(key, f"must be a positive integer, got {v}")
        return v


def _float_pair(v):
    a, b = (float(x) for x in v)
    return a, b


def _float_list(v):
    return [float(x) for x in (v if isinstance(v, (list, tuple)) else [v])]


def _box(P: Params, d: int, key: str = "L") -> BoxRegion:
    L = P.get(key, required=True)
    center = P.get("center", [0] * d)
    try:
        box = BoxRegion(tuple(center), str(L) if isinstance(L, str) else L, bool(P.get("open", False)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, str(exc)) from None
    if box.dim != d:
        raise ConfigError("center", f"has {box.dim} coordinates, expected d = {d}")
    return box


def _gamma(P: Params, d: int) -> TrimPattern:
    g = P.get("gamma")
    try:
        if g is None:
            return TrimPattern.sublattice(P.positive_int("K", required=True), d)
        if isinstance(g, int):
            return TrimPattern.sublattice(g, d)
        pat = TrimPattern.from_dict(g)
    except (TypeError, ValueError) as exc:
        raise ConfigError("gamma", str(exc)) from None
    if pat.dim != d:
        raise ConfigError("gamma", f"has dimension {pat.dim}, expected d = {d}")
    return pat


def _potential(P: Params, d: int) -> Potential:
    v = P.get("V")
    try:
        if v is None or v == "zero":
            return Potential.zero(d)
        if isinstance(v, list):
            return Potential.periodic(v, d)
        return Potential.from_dict({"dim": d, **v})
    except (TypeError, ValueError) as exc:
        raise ConfigError("V", str(exc)) from None


def _dists(P: Params):
    rec = P.get("dists", {"kind": "uniform", "a": 0.0, "b": 1.0})
    try:
        if "classes" in rec:
            return {tuple(c["residue"]): an.SiteDistribution.from_dict({k: v for k, v in c.items() if k != "residue"})
                    for c in rec["classes"]}
        return an.SiteDistribution.from_dict(rec)
    except (TypeError, ValueError, KeyError, NotImplementedError) as exc:
        raise ConfigError("dists", str(exc)) from None


def _KQ(P: Params, gamma: TrimPattern) -> tuple[int, int]:
    K = P.positive_int("K", gamma.period or None, required=not gamma.period)
    Q = P.positive_int("Q", gamma.claimed_Q)
    return K, Q


def _model(P: Params) -> an.AndersonModel:
    d = P.positive_int("d", 1)
    gamma = _gamma(P, d)
    K, Q = _KQ(P, gamma)
    lam = P.get("lambda", 1.0, float)
    if not lam > 0:
        raise ConfigError("lambda", f"must be positive, got {lam}")
    V, dists, box = _potential(P, d), _dists(P), _box(P, d)
    try:
        return an.AndersonModel(V, gamma, dists, lam, box, K, Q)
    except ValueError as exc:
        raise ConfigError("gamma", str(exc)) from None


def cmd_bounds(P: Params, seed: int):
    d, K, Q = P.positive_int("d", required=True), P.positive_int("K", required=True), P.positive_int("Q", 1)
    spr, E0 = P.get("spr", 0.0, float), P.get("E0", 0.0, float)
    try:
        p = ModelParams(d, K, Q, spr, E0)
    except DomainError as exc:
        raise ConfigError("Q", str(exc)) from None
    rows = bound_rows(p, P.get("t", [], _float_list), P.get("E1", None, float))
    cols = ["bound", "d", "K", "Q", "spr", "E0", "t", "E1", "value", "valid"]
    rows = [{c: r.get(c) for c in cols} for r in rows]
    return rows, {"params": P.data}, []


def cmd_gsenergy(P: Params, seed: int):
    d = P.positive_int("d", 1)
    mode = P.get("mode", "full", str)
    if mode not in ("full", "trimmed", "penalized"):
        raise ConfigError("mode", f"unknown mode {mode!r}")
    box = _box(P, d)
    gamma = _gamma(P, d) if mode != "full" or "gamma" in P.data or "K" in P.data else None
    t = P.get("t", None, float)
    if mode == "penalized" and (t is None or t < 0):
        raise ConfigError("t", "penalized mode needs t >= 0")
    V = _potential(P, d)
    method = P.get("method", "auto", str)
    if method not in ("auto", "dense", "krylov"):
        raise ConfigError("method", f"unknown method {method!r}")
    try:
        op = assemble(box, V, gamma, mode, t)
    except ValueError as exc:
        raise ConfigError("gamma", str(exc)) from None
    e = ground_energy(op, P.get("tol", 1e-10, float), method)
    row = {"mode": mode, "d": d, "L": str(box.side), "n": op.n, "t": t, "energy": e}
    bad = []
    expected = P.get("expected", None, float)
    if expected is not None:
        tol = P.get("check_tol", 1e-10, float)
        row.update(expected=expected, abs_error=abs(e - expected), ok=abs(e - expected) <= tol)
        if not row["ok"]:
            bad.append(dict(row))
    return [row], {"params": P.data, "energy": e}, bad


def cmd_curve(P: Params, seed: int):
    d = P.positive_int("d", 1)
    gamma = _gamma(P, d)
    K, Q = _KQ(P, gamma)
    box = _box(P, d)
    V = _potential(P, d)
    t_grid = P.get("t_grid", list(np.linspace(0, 10, 21)), _float_list)
    try:
        curve = energy_curve(box, gamma, V, t_grid)
    except ValueError as exc:
        raise ConfigError("t_grid", str(exc)) from None
    rep = derivative_check(curve, Q, K)
    p = _domain("Q", ModelParams, d, K, Q, curve.spr)
    E = curve.energies
    rows, bad = [], []
    for i, r in enumerate(curve.rows(Q, K)):
        lift = E[i] - E[0]
        lo = delta_t_lower(p, r["t"])
        ok = lift >= lo - 1e-8
        # the slope bound is only claimed on closed boxes of side K * odd
        if rep.proof_geometry and i < len(rep.points):
            ok = ok and rep.points[i].ok
        row = {**r, "delta": lift, "delta_t_lower": lo, "ok": ok}
        rows.append(row)
        if not ok:
            bad.append(dict(row))
    summary = {"params": P.data, "trimmed_energy": curve.trimmed_energy, "proof_geometry": rep.proof_geometry,
               "Y": curve.Y}
    return rows, summary, bad


def cmd_cheeger(P: Params, seed: int):
    d = P.positive_int("d", 1)
    gamma = _gamma(P, d)
    K, Q = _KQ(P, gamma)
    window = _box(P, d)
    mode = P.get("mode", "trimmed", str)
    if mode not in ("trimmed", "penalized"):
        raise ConfigError("mode", f"unknown mode {mode!r}")
    ts = P.get("t", [1.0], _float_list) if mode == "penalized" else [None]
    cap = P.positive_int("max_cardinality", None)
    floor = 1.0 / k_star(K) ** d
    rows, bad = [], []
    for t in ts:
        try:
            res = beta_bruteforce(window, gamma, mode, t, cap)
        except WindowTooLargeError as exc:
            raise ConfigError("L", str(exc)) from None
        ok = mode != "trimmed" or res.value >= floor - 1e-12
        row = {"mode": mode, "t": t, "value": res.value, "exhaustive": res.exhaustive, "n_subsets": res.n_subsets,
               "floor": floor, "ok": ok, "minimizer": " ".join(":".join(map(str, s)) for s in res.minimizer)}
        rows.append(row)
        if not ok:
            bad.append(res.to_dict())
    return rows, {"params": P.data}, bad


def _domain(key: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (DomainError, an.PreconditionError) as exc:
        raise ConfigError(key, str(exc)) from None


def cmd_wegner(P: Params, seed: int):
    model = _model(P)
    I = P.get("I", required=True, kind=_float_pair)
    E1 = P.get("E1", required=True, kind=float)
    n = P.positive_int("n_samples", 100)
    mode = P.get("kappa_mode", "numeric", str)
    if mode not in ("numeric", "analytic"):
        raise ConfigError("kappa_mode", f"unknown mode {mode!r}")
    rep = _domain("E1", an.wegner_experiment, model, I, E1, n, seed, mode)
    row = rep.row()
    return [row], {"params": P.data, **rep.to_dict()}, [] if rep.passed else [rep.to_dict()]


def cmd_pvp(P: Params, seed: int):
    model = _model(P)
    E1 = P.get("E1", required=True, kind=float)
    n = P.positive_int("n_samples", 100)
    mode = P.get("kappa_mode", "analytic", str)
    if mode not in ("numeric", "analytic"):
        raise ConfigError("kappa_mode", f"unknown mode {mode!r}")
    rep = _domain("E1", an.pvp_check, model, E1, seed, n, kappa_mode=mode)
    rows = [{**r, "kappa_lb": rep.kappa_lb} for r in rep.records]
    summary = {"params": P.data, "kappa_lb": rep.kappa_lb, "n_vacuous": rep.n_vacuous, "min_eig": rep.min_value}
    return rows, summary, rep.violations


def cmd_specavg(P: Params, seed: int):
    model = _model(P)
    qn = P.positive_int("quadrature_n", 512)
    gsites = model.gamma_sites()
    if len(gsites) == 0:
        raise ConfigError("gamma", "no Gamma site in the box")
    intervals = P.get("intervals")
    rng = np.random.default_rng(seed)
    if intervals is None:
        k = P.positive_int("n_intervals", 50)
        intervals = []
        for _ in range(k):
            a = float(rng.uniform(-0.5, 2 * model.dim + model.lam * max(d.M for d in model.distributions()) + 0.5))
            intervals.append((a, a + float(rng.uniform(0, 0.5))))
    else:
        try:
            intervals = [_float_pair(x) for x in intervals]
        except (TypeError, ValueError) as exc:
            raise ConfigError("intervals", str(exc)) from None
    zeta = P.get("zeta")
    rows, bad = [], []
    for i, (a, b) in enumerate(intervals):
        z = tuple(zeta) if zeta is not None else tuple(gsites[rng.integers(len(gsites))].tolist())
        try:
            rep = an.spectral_averaging_check(model, z, (a, b), qn, seed, i)
        except ValueError as exc:
            raise ConfigError("zeta" if zeta is not None else "intervals", str(exc)) from None
        row = {"site": ":".join(map(str, rep.site)), "I_lo": a, "I_hi": b, "integral": rep.integral,
               "bound": rep.bound, "error_bound": rep.error_bound, "ok": rep.passed}
        rows.append(row)
        if not rep.passed:
            bad.append(row)
    return rows, {"params": P.data}, bad


def cmd_gsmc(P: Params, seed: int):
    model = _model(P)
    L_list = P.get("L_list", [model.box.side], _float_list)
    L_list = [int(x) if float(x).is_integer() else x for x in L_list]
    n = P.positive_int("n_samples", 100)
    rep = _domain("dists", an.ground_energy_mc, model, L_list, n, seed)
    bad = [] if rep.passed else [{"checks": rep.checks, "rows": rep.rows}]
    return rep.rows, {"params": P.data, "E0": rep.E0, "checks": rep.checks}, bad


RUNNERS = {
    "bounds": cmd_bounds,
    "gsenergy": cmd_gsenergy,
    "curve": cmd_curve,
    "cheeger": cmd_cheeger,
    "wegner": cmd_wegner,
    "pvp": cmd_pvp,
    "specavg": cmd_specavg,
    "gsmc": cmd_gsmc,
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trimspec", description="Trimmed lattice operator experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp_ = sub.add_parser(name)
        sp_.add_argument("--config", type=Path, help="JSON file with the experiment parameters")
        sp_.add_argument("--seed", type=int, help="base seed (overrides the config)")
        sp_.add_argument("--out", type=Path, help="CSV output path; a .json summary is written beside it")
        sp_.add_argument("--no-timestamp", action="store_true", help="omit the timestamp comment line")
        sp_.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                         help="override one parameter; VALUE is parsed as JSON when possible")
        if name == "verify":
            sp_.add_argument("--level", default="fast", help="fast or full")
    return parser


def load_params(args) -> dict:
    data = {}
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError("config", f"file {args.config} does not exist")
        try:
            data = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        cmd = data.pop("command", args.command)
        if cmd != args.command:
            raise ConfigError("command", f"config is for {cmd!r}, not {args.command!r}")
        data = {**data.pop("params", {}), **data}
    for item in args.param:
        if "=" not in item:
            raise ConfigError("param", f"expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        data[k.strip()] = _parse_value(v)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out_path"] = str(args.out)
    return data


def write_outputs(rows, summary, out, timestamp: bool) -> None:
    stamp = f"generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}" if timestamp else None
    text = an.rows_to_csv(rows, stamp)
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    with open(out.with_suffix(".json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(an.summary_json(summary))


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        data = load_params(args)
        P = Params(data)
        seed = P.get("seed", 0, int)
        if seed < 0:
            raise ConfigError("seed", "must be nonnegative")
        out = P.get("out_path")
        if args.command == "verify":
            return _run_verify(args.level, data.get("seed"), out, not args.no_timestamp)
        rows, summary, bad = RUNNERS[args.command](P, seed)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    summary = {**summary, "command": args.command, "seed": seed, "violations": bad}
    write_outputs(rows, summary, out, not args.no_timestamp)
    if bad:
        print(f"{len(bad)} violation(s); first: {json.dumps(bad[0], default=str)}", file=sys.stderr)
        return 1
    return 0


def _run_verify(level, seed, out, timestamp) -> int:
    if level not in verify.LEVELS:
        print(f"invalid config: level: must be one of {verify.LEVELS}, got {level!r}", file=sys.stderr)
        return 2
    results = verify.run_suite(level, seed)
    for r in results:
        print(r.line(), file=sys.stderr)
    rows = [{"id": r.id, "name": r.name, "passed": r.passed} for r in results]
    summary = {"level": level, "seed": seed, "results": [r.to_dict() for r in results]}
    write_outputs(rows, summary, out, timestamp)
    return 0 if all(r.passed for r in results) else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
