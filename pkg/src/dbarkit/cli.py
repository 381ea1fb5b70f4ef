"""Command line driver: reproducible experiments writing JSON and CSV files.

    dbarkit partition --preset exp_density --out run/
    dbarkit solve --config my.json --grid 256 --seed 3
    dbarkit verify --preset criterion4

Exit status: 0 pass, 1 criterion failure or failed construction, 2 usage error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, criteria
from .errors import DbarError
from .geometry import Domain

SCHEMA = "dbarkit.experiment/1"

_PLANE = {"kind": "plane", "bounds": [-5.0, 5.0, -5.0, 5.0], "n": 256}
_DISK = {"kind": "disk", "r_max": 0.95, "n": 256}

PRESETS: dict[str, dict] = {
    "gaussian": {"domain": _PLANE, "weight": {"kind": "gaussian", "parameters": {"alpha": 1.0}},
                 "m": 2, "k": 1},
    "gaussian_sin": {"domain": _PLANE, "m": 2, "k": 1,
                     "weight": {"kind": "gaussian_sin", "parameters": {"alpha": 1.0, "beta": 0.3}}},
    "disk_log": {"domain": _DISK, "weight": {"kind": "disk_log", "parameters": {"alpha": 0.5}},
                 "m": 1, "k": 1},
    "exp_density": {"domain": {"kind": "plane", "bounds": [-4.0, 4.0, -4.0, 4.0], "n": 128},
                    "measure": {"kind": "exp_x", "parameters": {"c": 2.0, "a": 0.5}}, "N": 1.0},
    "uniform": {"domain": {"kind": "plane", "bounds": [-4.0, 4.0, -4.0, 4.0], "n": 64},
                "measure": {"kind": "uniform"}, "N": 1.0},
    "bumps": {"domain": {"kind": "plane", "bounds": [-6.0, 6.0, -6.0, 6.0], "n": 256},
              "weight": criteria.BUMPS},
}
for _i in criteria.CHECKS:
    PRESETS[f"criterion{_i}"] = {"criterion": _i}

DEFAULTS = {
    "schema": SCHEMA, "m": 2, "k": 1, "eps_exc": 0.25, "n_colors": 25, "M_sep": 5.0,
    "p": [1, 2, "inf"], "seed": 0, "n_data": 10, "reduce_model": True,
}


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


# ------------------------------------------------------------------ config

def load_config(path: str | None, preset: str | None) -> dict:
    if path and preset:
        raise ConfigError("give either --config or --preset, not both")
    if path:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e.strerror}") from None
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}: top level must be an object")
    else:
        name = preset or "gaussian"
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
        cfg = copy.deepcopy(PRESETS[name])
        cfg["preset"] = name
    out = copy.deepcopy(DEFAULTS)
    out.update(cfg)
    return out


def _positive_int(cfg, key):
    v = cfg.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(f"field {key!r}: expected a positive integer, got {v!r}")


def validate(cfg: dict) -> dict:
    if cfg.get("schema") != SCHEMA:
        raise ConfigError(f"field 'schema': expected {SCHEMA!r}, got {cfg.get('schema')!r}")
    if "criterion" in cfg:
        if cfg["criterion"] not in criteria.CHECKS:
            raise ConfigError(f"field 'criterion': no acceptance check {cfg['criterion']!r}")
        return cfg
    for key in ("m", "k", "n_colors", "n_data"):
        _positive_int(cfg, key)
    if not 0 < float(cfg["eps_exc"]) < 1:
        raise ConfigError("field 'eps_exc': must lie in (0, 1)")
    if float(cfg["M_sep"]) <= 0:
        raise ConfigError("field 'M_sep': must be positive")
    if "N" in cfg and not (isinstance(cfg["N"], (int, float)) and cfg["N"] > 0):
        raise ConfigError(f"field 'N': must be positive, got {cfg['N']!r}")
    if not isinstance(cfg.get("seed"), int):
        raise ConfigError("field 'seed': expected an integer")
    if "domain" not in cfg:
        raise ConfigError("field 'domain': missing")
    if "weight" not in cfg and "measure" not in cfg:
        raise ConfigError("config needs a 'weight' or a 'measure'")
    for p in cfg["p"]:
        if not (p == "inf" or (isinstance(p, (int, float)) and p >= 1)):
            raise ConfigError(f"field 'p': entries must be >= 1 or \"inf\", got {p!r}")
    try:
        Domain.from_json(cfg["domain"])
    except DbarError as e:
        raise ConfigError(f"field 'domain': {e}") from None
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _p_values(cfg) -> list[float]:
    return [math.inf if p == "inf" else float(p) for p in cfg["p"]]


def _p_key(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


# ------------------------------------------------------------------ output

class Writer:
    def __init__(self, out: Path, cfg: dict):
        self.out = out
        self.cfg = cfg
        self.hash = config_hash(cfg)
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj) -> None:
        text = json.dumps(criteria._plain(obj), indent=1, sort_keys=True)
        (self.out / name).write_text(text + "\n")

    def csv(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        buf.write(f"# dbarkit {__version__} config {self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, (float, np.floating)) else v for v in r])
        (self.out / name).write_text(buf.getvalue())

    def verdict(self, checks: dict) -> bool:
        passed = all(c["passed"] for c in checks.values())
        self.json("verdict.json", {"config_hash": self.hash, "passed": passed, "checks": checks})
        return passed


def _domain(cfg):
    return Domain.from_json(cfg["domain"])


def _weight(cfg, D):
    from .measure import weight_from_spec
    if "weight" not in cfg:
        raise ConfigError("this command needs a 'weight'")
    return weight_from_spec(D, cfg["weight"])


def _measure(cfg, D):
    from .measure import DoublingMeasure
    if "measure" in cfg:
        return DoublingMeasure.from_spec(D, cfg["measure"])
    return _weight(cfg, D).measure()


# ------------------------------------------------------------------ commands

def cmd_partition(cfg, w: Writer) -> bool:
    from .measure import rho
    from .partition import build_partition
    D = _domain(cfg)
    mu = _measure(cfg, D)
    N = float(cfg.get("N", cfg["m"] * cfg["k"]))
    P = build_partition(mu, N)
    w.json("partition.json", P.to_json())
    centres = np.array([mr.rect.center for mr in P.rectangles])
    rc = rho(mu, centres)
    if D.kind == "disk":
        rc = np.arctanh(rc)
    rows, ratios = [], []
    for i, (mr, r) in enumerate(zip(P.rectangles, rc)):
        q = mr.rect.diameter / r
        ratios.append(q)
        rows.append([i, mr.rect.a0, mr.rect.a1, mr.rect.b0, mr.rect.b1, mr.mass, mr.eccentricity, q])
    w.csv("partition.csv", ["id", "a0", "a1", "b0", "b1", "mass", "eccentricity", "diam_over_rho"], rows)
    err = max(abs(mr.mass - N) for mr in P.rectangles) / N
    return w.verdict({
        "mass": {"criterion": 3, "value": err, "limit": 1e-6, "passed": err <= 1e-6},
        "eccentricity": {"criterion": 3, "value": P.E_bisect, "limit": 3.0, "passed": P.E_bisect <= 3.0},
        "diam_over_rho": {"criterion": 3, "value": [min(ratios), max(ratios)],
                          "passed": bool(min(ratios) > 0 and np.isfinite(max(ratios)))},
    })


def cmd_nodes(cfg, w: Writer) -> bool:
    from .partition import build_partition
    from .quadrature import chebyshev_nodes
    D = _domain(cfg)
    mu = _measure(cfg, D)
    m, k = cfg["m"], cfg["k"]
    P = build_partition(mu, float(cfg.get("N", m * k)))
    sets = [chebyshev_nodes(mu, mr.rect, m, k) for mr in P.rectangles]
    w.json("nodes.json", {"m": m, "k": k, "sets": [ns.to_json(i) for i, ns in enumerate(sets)]})
    rows, worst = [], 0.0
    for i, ns in enumerate(sets):
        rel = criteria.moment_relative_residual(ns, mu)
        worst = max(worst, rel)
        for z in ns.lam:
            rows.append([i, z.real, z.imag, ns.weight, rel])
    w.csv("nodes.csv", ["rect_id", "x", "y", "weight", "relative_residual"], rows)
    return w.verdict({"moments": {"criterion": 1, "value": worst, "limit": 1e-9, "passed": worst <= 1e-9}})


def cmd_multiplier(cfg, w: Writer) -> bool:
    from .multiplier import build_multiplier, sandwich_ratio
    D = _domain(cfg)
    psi = _weight(cfg, D)
    M = build_multiplier(psi, cfg["m"], cfg["k"], float(cfg["eps_exc"]))
    w.json("multiplier.json", M.to_json())
    s = sandwich_ratio(M, D)
    w.json("sandwich.json", s)
    text = M.grid_csv(D, header=f"dbarkit {__version__} config {w.hash}")
    (w.out / "multiplier_grid.csv").write_text(text)
    return w.verdict({
        "spread": {"criterion": 4, "value": s["spread"], "passed": bool(np.isfinite(s["spread"]))},
        "M": {"criterion": 4, "value": s["M_fit"], "limit": 4, "passed": s["M_fit"] <= 4},
    })


def cmd_solve(cfg, w: Writer) -> bool:
    from .dbar import norm_report, prepare_weighted, random_data, solve_weighted
    D = _domain(cfg)
    phi = _weight(cfg, D)
    setup = prepare_weighted(phi, reduce_model=bool(cfg["reduce_model"]), eps_exc=float(cfg["eps_exc"]),
                             n_colors=cfg["n_colors"], M_sep=float(cfg["M_sep"]))
    variant = cfg.get("variant") or ("disk_boundary_weighted" if D.kind == "disk" else "plain")
    rng = np.random.default_rng(cfg["seed"])
    ps = _p_values(cfg)
    reports, ratios = [], {p: [] for p in ps}
    first = None
    for i in range(cfg["n_data"]):
        f = random_data(D, rng, phi)
        u, rep = solve_weighted(f, setup=setup, p=ps[0], variant=variant)
        if first is None:
            first = (f, u)
        for p in ps:
            r = norm_report(u, f, setup, p, variant)
            r.flagged_cells, r.members_used = rep.flagged_cells, rep.members_used
            ratios[p].append(r.ratio)
            reports.append({"datum": i, **r.to_json()})
    w.json("solve_report.json", {"variant": variant, "model": list(setup.model),
                                 "members": 1 if setup.trivial else len(setup.family.members),
                                 "reports": reports})
    f, u = first
    Z = D.grid()
    sel = D.mask()
    w.csv("solution.csv", ["x", "y", "f_re", "f_im", "u_re", "u_im"],
          ([z.real, z.imag, a.real, a.imag, b.real, b.imag]
           for z, a, b in zip(Z[sel], f.values[sel], u.values[sel])))
    checks = {}
    for p in ps:
        r = np.array(ratios[p])
        spread = float(r.max() / r.min())
        checks[f"ratio_p{_p_key(p)}"] = {"criterion": 9, "value": spread, "limit": 4.0,
                                         "passed": bool(np.all(np.isfinite(r)) and spread <= 4.0)}
    return w.verdict(checks)


def cmd_decay(cfg, w: Writer) -> bool:
    from .dbar import kernel_decay_profile, prepare_weighted
    D = _domain(cfg)
    phi = _weight(cfg, D)
    setup = prepare_weighted(phi, reduce_model=bool(cfg["reduce_model"]), eps_exc=float(cfg["eps_exc"]),
                             n_colors=cfg["n_colors"], M_sep=float(cfg["M_sep"]))
    fit = kernel_decay_profile(setup, rng=np.random.default_rng(cfg["seed"]))
    w.json("decay.json", fit)
    checks = {"epsilon": {"criterion": 10, "value": fit["epsilon_fit"], "passed": fit["epsilon_fit"] > 0},
              "r2": {"criterion": 10, "value": fit["r2"], "limit": 0.9, "passed": fit["r2"] >= 0.9}}
    if setup.trivial:
        rel = abs(fit["epsilon_fit"] - setup.model[1]) / setup.model[1]
        checks["model_alpha"] = {"criterion": 10, "value": rel, "limit": 0.1, "passed": rel <= 0.1}
    return w.verdict(checks)


def cmd_verify(cfg, w: Writer) -> bool:
    if "criterion" in cfg:
        v = criteria.run(cfg["criterion"])
        w.json("verdict.json", {"config_hash": w.hash, **v.to_json()})
        print(v.line())
        return v.passed
    # a plain weight config: run the multiplier sandwich on it
    return cmd_multiplier(cfg, w)


COMMANDS = {
    "partition": cmd_partition, "nodes": cmd_nodes, "multiplier": cmd_multiplier,
    "solve": cmd_solve, "verify": cmd_verify, "decay": cmd_decay,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dbarkit", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"dbarkit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", "") + " experiment")
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--preset", help="named preset (" + ", ".join(sorted(PRESETS)) + ")")
        p.add_argument("--out", default="dbarkit-out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--grid", type=int, help="override the grid resolution")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.grid is not None and "domain" in cfg:
            cfg["domain"] = {**cfg["domain"], "n": args.grid}
        validate(cfg)
    except ConfigError as e:
        print(f"dbarkit: config error: {e}", file=sys.stderr)
        return 2
    writer = Writer(Path(args.out), cfg)
    writer.json("config.json", cfg)
    try:
        passed = COMMANDS[args.command](cfg, writer)
    except ConfigError as e:
        print(f"dbarkit: config error: {e}", file=sys.stderr)
        return 2
    except DbarError as e:
        print(f"dbarkit: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(f"{args.command}: {'PASS' if passed else 'FAIL'} ({writer.out})")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
