"""Command-line front end.

Subcommands: assemble, reduce, measure, propagate, verify-norms, full.
Settings come from built-in defaults, then an optional JSON file
(``--config``), then explicit flags. Every run writes ``<command>.json`` and,
where relevant, CSV tables into ``--out``; all records carry the config hash
and seed. Outputs contain no timestamps, so identical settings give
byte-identical files.

Exit codes: 0 success, 2 invalid input, 3 resonant frequency, 4 the KAM
norms left the schedule, 5 a numerical accuracy check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .decay_matrix import NormParams, algebra_ratios, op_norm_bound_check
from .errors import AccuracyError, DomainError, NormBlowup, ResonantFrequency
from .fourier import strip_norm, theta_grid
from .hermite import CATALOG, HermiteBasis, assemble_P, audit_potential, ladder_check, perturbation_series, potential, verify_P_decay
from .kam import KamConfig, reducibility_residual, run, run_sampled, transformation_report
from .propagate import PAD, REPORT_EXCLUDE, integrate, norm_drift_report
from .resonance import build_h2_region
from .spectrum import nu_array, qho

__all__ = ["DEFAULTS", "run_command", "main", "config_hash"]

COMMANDS = ("assemble", "reduce", "measure", "propagate", "verify-norms", "full")

DEFAULTS = {
    "potential": "cos_decay",
    "mu": 1.0,
    "n": 1,
    "N": 64,
    "K": 2,
    "eps": 1e-3,
    "omega": "sample",
    "sigma": 1.0,
    "alpha": 1.0,
    "beta": 0.5,
    "max_steps": 4,
    "stop_tol": 1e-9,
    "kappa_floor": 1e-5,
    "K_cap": 16,
    "gamma": 0.01,
    "samples": 100000,
    "seed": 0,
    "T": 1000.0,
    "dt": 0.1,
    "p": 2.0,
    "pairs": 100,
    "out": "out",
}

KAM_COLUMNS = ["m", "eps_m", "kappa_m", "sigma_m", "K_m", "norm_Atilde", "norm_B", "norm_P", "min_divisor"]
TRAJ_COLUMNS = ["t", "norm_l0", "norm_lp"]
REGION_COLUMNS = ["seed", "samples", "measure", "bound"]


def _to_builtin(x):
    if isinstance(x, dict):
        return {str(k): _to_builtin(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_builtin(v) for v in x]
    if isinstance(x, np.ndarray):
        return _to_builtin(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def config_hash(cfg: dict) -> str:
    text = json.dumps(_to_builtin(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qho-kam", description="Reducibility experiments for the perturbed harmonic oscillator.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with settings; flags override it")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--potential", choices=CATALOG)
        sp.add_argument("--mu", type=float)
        sp.add_argument("--n", type=int)
        sp.add_argument("--N", type=int)
        sp.add_argument("--K", type=int)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--omega", help="comma separated frequencies or 'sample'")
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--max-steps", dest="max_steps", type=int)
        sp.add_argument("--stop-tol", dest="stop_tol", type=float)
        sp.add_argument("--kappa-floor", dest="kappa_floor", type=float)
        sp.add_argument("--K-cap", dest="K_cap", type=int)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--T", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--p", type=float)
        sp.add_argument("--pairs", type=int)
    return ap


def _load_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise DomainError(f"cannot read config file: {err}") from err
        if not isinstance(data, dict):
            raise DomainError("config file must hold a JSON object")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _parse_omega(cfg):
    w = cfg["omega"]
    if isinstance(w, str):
        if w == "sample":
            return None
        try:
            w = [float(v) for v in w.split(",")]
        except ValueError as err:
            raise DomainError(f"cannot parse omega {cfg['omega']!r}") from err
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (cfg["n"],):
        raise DomainError(f"omega needs {cfg['n']} components")
    if not np.all(np.isfinite(w)):
        raise DomainError("omega must be finite")
    return w


def validate(cfg: dict) -> dict:
    """Check every numeric setting before any computation."""
    c = cfg
    if c["potential"] not in CATALOG:
        raise DomainError(f"unknown potential {c['potential']!r}")
    checks = [
        (isinstance(c["n"], int) and c["n"] >= 1, "n must be an integer >= 1"),
        (isinstance(c["N"], int) and c["N"] >= 2, "N must be an integer >= 2"),
        (isinstance(c["K"], int) and c["K"] >= 1, "K must be an integer >= 1"),
        (0 <= c["eps"] < 1, "eps must lie in [0, 1)"),
        (c["sigma"] > 0, "sigma must be positive"),
        (0 < c["beta"] <= c["alpha"], "need 0 < beta <= alpha"),
        (c["mu"] > 0, "mu must be positive"),
        (isinstance(c["max_steps"], int) and c["max_steps"] >= 1, "max_steps must be >= 1"),
        (c["stop_tol"] >= 0, "stop_tol must be >= 0"),
        (c["kappa_floor"] > 0, "kappa_floor must be positive"),
        (isinstance(c["K_cap"], int) and c["K_cap"] >= 1, "K_cap must be >= 1"),
        (c["gamma"] > 0, "gamma must be positive"),
        (isinstance(c["samples"], int) and c["samples"] >= 1, "samples must be >= 1"),
        (isinstance(c["seed"], int) and c["seed"] >= 0, "seed must be a non-negative integer"),
        (c["T"] > 0, "T must be positive"),
        (c["dt"] > 0, "dt must be positive"),
        (0 <= c["p"] < 2 * c["alpha"] + 1, "p must lie in [0, 2 alpha + 1)"),
        (isinstance(c["pairs"], int) and c["pairs"] >= 1, "pairs must be >= 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise DomainError(msg)
    _parse_omega(c)
    return c


class _Writer:
    def __init__(self, cfg):
        self.cfg = cfg
        self.hash = config_hash({k: v for k, v in cfg.items() if k != "out"})
        self.dir = Path(cfg["out"])
        self.dir.mkdir(parents=True, exist_ok=True)

    def tag(self, rec: dict) -> dict:
        return {**rec, "config_hash": self.hash, "seed": self.cfg["seed"]}

    def json(self, name: str, rec: dict):
        body = {"config": {k: v for k, v in self.cfg.items() if k != "out"}, **self.tag(rec)}
        text = json.dumps(_to_builtin(body), sort_keys=True, indent=2)
        (self.dir / f"{name}.json").write_text(text + "\n")

    def csv(self, name: str, columns: list, rows: list):
        cols = columns + [c for c in ("config_hash", "seed") if c not in columns]
        with open(self.dir / f"{name}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(v) for k, v in self.tag(r).items()})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _problem(cfg, N=None):
    N = cfg["N"] if N is None else N
    pot = potential(cfg["potential"], cfg["n"], cfg["sigma"], cfg["mu"])
    basis = HermiteBasis.build(N)
    P0 = perturbation_series(basis, pot, cfg["K"], cfg["eps"])
    return pot, basis, P0


def _region(cfg):
    return build_h2_region(qho(), cfg["gamma"], cfg["K"], cfg["n"], samples=cfg["samples"], seed=cfg["seed"])


def _cmd_assemble(cfg, out):
    pot, basis, P0 = _problem(cfg)
    audit = audit_potential(pot)
    if not audit.passed:
        raise DomainError(f"potential fails its bound audit: {audit}")
    mats = assemble_P(basis, pot, theta_grid(cfg["n"], 2 * cfg["K"] + 2))
    dec = verify_P_decay(mats)
    p = NormParams(cfg["alpha"], cfg["beta"])
    rec = {
        "gram_defect": basis.gram_defect(),
        "ladder_residual": ladder_check(basis).max_residual,
        "audit": audit._asdict(),
        "c_alpha": dec.c_alpha,
        "c_beta": dec.c_beta,
        "argmax_alpha": dec.argmax_alpha,
        "argmax_beta": dec.argmax_beta,
        "eps_measured": strip_norm(P0, p, cfg["sigma"]) if cfg["eps"] > 0 else 0.0,
    }
    out.json("assemble", rec)
    print(f"c_alpha={dec.c_alpha:.6g} c_beta={dec.c_beta:.6g} gram_defect={rec['gram_defect']:.2e}")
    return 0


def _cmd_reduce(cfg, out):
    _, _, P0 = _problem(cfg)
    kc = KamConfig(NormParams(cfg["alpha"], cfg["beta"]), kappa_floor=cfg["kappa_floor"], K_cap=cfg["K_cap"])
    kw = dict(max_steps=cfg["max_steps"], stop_tol=cfg["stop_tol"], cfg=kc)
    omega = _parse_omega(cfg)
    rejected = []
    if omega is None:
        region = _region(cfg)
        res, omega, rejected = run_sampled(P0, qho(), region, **kw)
    else:
        res = run(P0, qho(), omega, **kw)
    rows = [{c: r[c] for c in KAM_COLUMNS} for r in res.diagnostics]
    out.csv("kam_log", KAM_COLUMNS, rows)
    nu = nu_array(qho(), P0.N)
    keep = P0.N - REPORT_EXCLUDE
    resid = reducibility_residual(res, P0, qho())
    rec = {
        "omega": omega,
        "rejected_omega": [w for w, _ in rejected],
        "eps0": res.eps0,
        "steps": len(res.diagnostics),
        "converged": res.converged,
        "departure_step": res.departure_step,
        "max_shift": float(np.max(np.abs(res.lambda_inf[:keep] - nu[:keep]))),
        "residual": resid._asdict(),
        "transformation": transformation_report(res),
        "log": res.diagnostics,
    }
    out.json("reduce", rec)
    print(" ".join(f"{c:>12}" for c in KAM_COLUMNS))
    for r in rows:
        print(" ".join(f"{r[c]:>12.4g}" if isinstance(r[c], float) else f"{r[c]:>12}" for c in KAM_COLUMNS))
    print(f"converged={res.converged} residual={resid.residual:.3e} max_shift={rec['max_shift']:.3e}")
    if res.departure_step is not None:
        print(f"norms left the schedule at step {res.departure_step}", file=sys.stderr)
        return 4
    return 0


def _cmd_measure(cfg, out):
    region = _region(cfg)
    r = region.record()
    rec = {**r, "agrees": None if r["exact"] is None else bool(abs(r["measure"] - r["exact"]) <= r["halfwidth"])}
    out.json("measure", rec)
    out.csv("region", REGION_COLUMNS, [{"samples": r["samples"], "measure": r["measure"], "bound": r["bound"]}])
    ex = "n/a" if r["exact"] is None else f"{r['exact']:.6g}"
    print(f"monte_carlo={r['measure']:.6g} +- {r['halfwidth']:.2g} exact={ex} bound={r['bound']:.6g}")
    return 0


def _cmd_propagate(cfg, out):
    N_big = cfg["N"] + PAD
    _, _, P0 = _problem(cfg, N_big)
    omega = _parse_omega(cfg)
    if omega is None:
        omega = _region(cfg).sample(0)
    rng = np.random.default_rng(cfg["seed"])
    u0 = np.zeros(N_big, dtype=complex)
    u0[:4] = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    u0 /= np.linalg.norm(u0)
    # P0 already carries eps, so the coupling passed on is 1
    traj = integrate(qho(), P0, 1.0, omega, u0, cfg["T"], dt=cfg["dt"])
    rep = norm_drift_report(traj, cfg["p"], cfg["alpha"], eps=cfg["eps"] or None)
    out.csv("trajectory", TRAJ_COLUMNS, traj.records(cfg["p"], REPORT_EXCLUDE))
    rec = {"omega": omega, "N_big": N_big, "l0_drift": traj.drift(), "report": rep._asdict(), "samples": len(traj.t)}
    out.json("propagate", rec)
    print(f"l0_drift={rec['l0_drift']:.2e} ratio in [{rep.min_ratio:.8f}, {rep.max_ratio:.8f}] C_fit={rep.C_fit:.4g}")
    return 0


def _cmd_verify_norms(cfg, out):
    rng = np.random.default_rng(cfg["seed"])
    p = NormParams(cfg["alpha"], cfg["beta"])
    N = cfg["N"]
    idx = np.arange(1, N + 1)
    decay = (1.0 + np.abs(idx[:, None] - idx[None, :])) ** (-(p.alpha + 2))
    s_iv = 2 * p.alpha - 2.5 if 0.5 < p.alpha <= 1 else 0.0
    worst = {"plus": 0.0, "left": 0.0, "right": 0.0, "op_iii": 0.0, "op_iv": 0.0}
    for _ in range(cfg["pairs"]):
        A, B = (decay * (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) for _ in range(2))
        r = algebra_ratios(A, B, p)
        for k in ("plus", "left", "right"):
            worst[k] = max(worst[k], r[k])
        worst["op_iii"] = max(worst["op_iii"], op_norm_bound_check(A, p, 0.0, "iii").ratio)
        worst["op_iv"] = max(worst["op_iv"], op_norm_bound_check(A, p, s_iv, "iv").ratio)
    out.json("verify-norms", {"N": N, "pairs": cfg["pairs"], "max_ratios": worst})
    print(" ".join(f"{k}={v:.4g}" for k, v in worst.items()))
    return 0


def _cmd_full(cfg, out):
    codes = [f(cfg, out) for f in (_cmd_assemble, _cmd_measure, _cmd_reduce, _cmd_propagate)]
    return max(codes)


_DISPATCH = {
    "assemble": _cmd_assemble,
    "reduce": _cmd_reduce,
    "measure": _cmd_measure,
    "propagate": _cmd_propagate,
    "verify-norms": _cmd_verify_norms,
    "full": _cmd_full,
}


def run_command(argv=None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        cfg = validate(_load_config(args))
        out = _Writer(cfg)
        return _DISPATCH[args.command](cfg, out)
    except ResonantFrequency as err:
        print(f"resonant frequency: {err}", file=sys.stderr)
        return 3
    except NormBlowup as err:
        print(f"norm blow-up: {err}", file=sys.stderr)
        return 4
    except AccuracyError as err:
        print(f"accuracy check failed: {err}", file=sys.stderr)
        return 5
    except (DomainError, ValueError, TypeError) as err:
        print(f"invalid input: {err}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_command())
