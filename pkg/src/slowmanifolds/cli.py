"""Command-line front end: ``simulate``, ``manifold``, ``verify`` and ``study``.

Exit codes: 0 success, 1 suite or study failure, 2 configuration error
(including systems whose hypotheses are not certified), 3 numerical
divergence or non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import subprocess
import sys as _sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import StudyParams, coupled_study, to_jsonable
from .config import RunConfig, build_system, load_config
from .convolution import stationary_eta, xi_lookback
from .errors import (ConfigurationError, ContractionError, ConvergenceError, DivergenceError,
                     PartialResultError)
from .integrators import integrate_reduced, integrate_sde, integrate_transformed
from .lyapunov_perron import (PathwiseExpansion, default_horizon, expansion_graph, manifold_graph,
                              noise_for, path_span_for)
from .stable_noise import generate_path
from .system_model import validate_hypotheses

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

DEFAULT_Z0 = {
    "example1": [[1.0, 0.0]],
    "example2": [[0.5, 0.5, 0.0]],
    "example3": [[1.0, 0.0, 0.0]],
}


# -- run records -------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _source_version() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


class RunRecord:
    def __init__(self, command: str, cfg: RunConfig, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.files: list[Path] = []
        self.warnings: list[str] = []
        self.hypotheses: dict | None = None
        self.extra: dict = {}
        self.t0 = time.time()

    def add(self, path: Path) -> Path:
        self.files.append(path)
        return path

    def write(self) -> Path:
        record = {
            "command": self.command,
            "version": _source_version(),
            "python": platform.python_version(),
            "config": self.cfg.model_dump(mode="json"),
            "timing": {"start": self.t0, "seconds": time.time() - self.t0},
            "outputs": [{"file": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size}
                        for p in self.files],
            "hypotheses": self.hypotheses,
            "warnings": self.warnings,
        }
        record.update(self.extra)
        dest = self.out / "run_record.json"
        dest.write_text(_dump(record))
        return dest


# -- simulate ---------------------------------------------------------------------

def simulate_example(name_or_cfg, seed: int = 0, out: Path | None = None, record: RunRecord | None = None) -> dict:
    """Full, transformed and reduced orbits for one configuration.

    The reduced orbit uses ``h0 + eps h1`` evaluated on the noise window
    seen from each time; the distance to the full orbit is reported over
    ``t > t0 + 0.05``.
    """
    cfg = name_or_cfg if isinstance(name_or_cfg, RunConfig) else RunConfig(system=name_or_cfg, seed=seed)
    sys = build_system(cfg)
    eps = sys.epsilon
    dt = cfg.dt or eps / 100
    t0, t1 = cfg.t_span
    horizon = cfg.reduced_horizon
    lb = xi_lookback(sys.F, cfg.lookback_tol, eps)
    n_back = math.ceil((eps * horizon + lb) / dt) + 1
    path = generate_path(sys.noise, min(0.0, t0) - n_back * dt, t1, dt, cfg.seed)
    n_eta = int(round((t1 - t0 + eps * horizon) / dt))
    eta_times = t1 - dt * np.arange(n_eta, -1, -1)
    eta = stationary_eta(sys.F, eps, sys.alpha, path, eta_times, cfg.lookback_tol)
    z0s = cfg.z0 or DEFAULT_Z0.get(cfg.name) or [[1.0] * sys.n1 + [0.0] * sys.n2]
    h = PathwiseExpansion(sys, eta, horizon)
    result = {"orbits": [], "distance_after_transient": 0.0}
    for i, z0 in enumerate(z0s):
        z0 = np.asarray(z0, dtype=float)
        if z0.shape != (sys.n1 + sys.n2,):
            raise ConfigurationError(f"z0[{i}] must have {sys.n1 + sys.n2} entries")
        full = integrate_sde(sys, path, z0, (t0, t1), dt)
        y_hat0 = z0[sys.n1:] - sys.sigma * eta.at(t0)
        tr = integrate_transformed(sys, eta, np.concatenate([z0[:sys.n1], y_hat0]), (t0, t1), dt)
        red = integrate_reduced(sys, h, z0[:sys.n1], (t0, t1), cfg.reduced_dt)
        stride = int(round(cfg.reduced_dt / dt))
        diff = np.linalg.norm(full.states[::stride] - red.states, axis=1)
        after = red.times > t0 + 0.05
        dist = float(diff[after].max()) if after.any() else float("nan")
        result["distance_after_transient"] = max(result["distance_after_transient"], dist)
        result["orbits"].append({"full": full, "transformed": tr, "reduced": red, "distance": dist})
        if out is not None:
            for tag, traj in (("full", full), ("transformed", tr), ("reduced", red)):
                p = out / f"{tag}_{i}.csv"
                traj.to_csv(p)
                if record:
                    record.add(p)
    if out is not None:
        # manifold expansion over the slow grid at the initial time
        grid = cfg.grid(sys.n1)
        win = eta.window(t0, horizon, 1, time_scale=eps)
        g = expansion_graph(sys, win, grid, eps)
        g.h_values = g.h_values + sys.sigma * eta.at(t0)
        p = out / "manifold_expansion.csv"
        g.to_csv(p)
        if record:
            record.add(p)
    return result


def cmd_simulate(cfg: RunConfig, out: Path, rec: RunRecord) -> int:
    sys = build_system(cfg)
    rep = validate_hypotheses(sys)
    rec.hypotheses = rep.as_dict()
    if not rep.contraction_ok:
        rec.warnings.append("hypotheses not certified; reduced orbit uses the expansion regardless")
    res = simulate_example(cfg, cfg.seed, out, rec)
    rec.extra["distance_after_transient"] = res["distance_after_transient"]
    print(f"simulate {cfg.name}: {len(res['orbits'])} orbit(s), "
          f"max full/reduced distance after transient {res['distance_after_transient']:.4g}")
    return EXIT_OK


# -- manifold ---------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False)


def _write_graph(graph, out: Path, stem: str, rec: RunRecord, extra: dict):
    p = out / f"{stem}.csv"
    graph.to_csv(p)
    side = out / f"{stem}.json"
    meta = graph.sidecar()
    meta.update(extra)
    side.write_text(_dump(meta))
    rec.add(p)
    rec.add(side)


def cmd_manifold(cfg: RunConfig, out: Path, rec: RunRecord) -> int:
    eps = cfg.epsilon
    zero = eps == 0
    sys = build_system(cfg, epsilon=0.01 if zero else None)
    eps = 0.0 if zero else sys.epsilon
    rep = validate_hypotheses(sys)
    rec.hypotheses = rep.as_dict()
    if not rep.a3_ok or not rep.contraction_ok:
        raise ContractionError(f"hypotheses not certified for {cfg.name}: {list(rep.notes) or 'K >= -gamma_f'}")
    grid = cfg.grid(sys.n1)
    mc = cfg.manifold
    T_tilde = mc.T or default_horizon(sys, "tilde", cfg.lookback_tol)
    xi_path = generate_path(sys.noise, -path_span_for(sys, "tilde", T_tilde, mc.dt, cfg.lookback_tol),
                            0.0, mc.dt, cfg.seed)
    xi = noise_for(sys, xi_path, "tilde", T_tilde, cfg.lookback_tol)
    meta = {"seed": cfg.seed, "tol": cfg.tol}
    if "fixed_point" in mc.variants and zero:
        rec.warnings.append("epsilon = 0: only the critical manifold is produced")
    elif "fixed_point" in mc.variants and mc.system == "tilde":
        g = manifold_graph(sys, xi, grid, system="tilde", T=T_tilde, tol=cfg.tol)
        _write_graph(g, out, "manifold_tilde_fixed_point", rec, dict(meta, T=T_tilde, dt=mc.dt))
    elif "fixed_point" in mc.variants:
        # hat system in original time; grid step scales with eps
        T_hat = default_horizon(sys, "hat", cfg.lookback_tol)
        dt = mc.dt * eps
        path = generate_path(sys.noise, -path_span_for(sys, "hat", T_hat, dt, cfg.lookback_tol), 0.0, dt, cfg.seed)
        eta = noise_for(sys, path, "hat", T_hat, cfg.lookback_tol)
        g = manifold_graph(sys, eta, grid, system="hat", T=T_hat, tol=cfg.tol)
        _write_graph(g, out, "manifold_hat_fixed_point", rec, dict(meta, T=T_hat, dt=dt))
    if "expansion" in mc.variants:
        g = expansion_graph(sys, xi, grid, eps, T=T_tilde, tol=cfg.tol)
        _write_graph(g, out, "manifold_expansion", rec, dict(meta, T=T_tilde, dt=mc.dt))
    print(f"manifold {cfg.name}: {len(grid)} grid points, epsilon={eps}")
    return EXIT_OK


# -- study / verify ---------------------------------------------------------------

def cmd_study(cfg: RunConfig, out: Path, rec: RunRecord) -> int:
    sys = build_system(cfg)
    st = cfg.study
    x0 = st.x0 or [1.0] * sys.n1
    params = StudyParams(T=st.T, dt=st.dt, tol=cfg.tol, lookback_tol=cfg.lookback_tol)
    rec.hypotheses = validate_hypotheses(sys).as_dict()
    try:
        d0, d1 = coupled_study(sys, x0, st.epsilons, st.n_real, cfg.seed, params, cfg.workers)
        code = EXIT_OK
    except PartialResultError as exc:
        d0, d1 = exc.partial
        rec.warnings.append(str(exc))
        code = EXIT_FAIL
    for tab, stem in ((d0, "study_h0"), (d1, "study_h1")):
        tab.to_csv(out / f"{stem}.csv")
        tab.to_json(out / f"{stem}.json")
        rec.add(out / f"{stem}.csv")
        rec.add(out / f"{stem}.json")
        print(f"{stem}: slope {tab.slope:.3f} CI [{tab.slope_ci[0]:.3f}, {tab.slope_ci[1]:.3f}]")
    return code


def cmd_verify(cfg: RunConfig, out: Path, rec: RunRecord) -> int:
    from .verification import run_suite
    report = run_suite(cfg.seed, cfg.verify.scale, cfg.workers, cfg.verify.extra)
    p = out / "verify_report.json"
    p.write_text(_dump(report))
    rec.add(p)
    for c in report["checks"]:
        print(("PASS " if c["passed"] else "FAIL ") + c["name"])
    return EXIT_OK if report["passed"] else EXIT_FAIL


COMMANDS = {"simulate": cmd_simulate, "manifold": cmd_manifold, "verify": cmd_verify, "study": cmd_study}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slowmanifolds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("runs") / name, help="output directory")
        p.add_argument("--workers", type=int, help="parallel workers for ensembles")
        p.add_argument("--tol", type=float, help="fixed-point tolerance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "workers": args.workers, "tol": args.tol})
        if cfg.workers is None and args.command in ("study", "verify"):
            cfg = cfg.model_copy(update={"workers": os.cpu_count() or 1})
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        rec = RunRecord(args.command, cfg, out)
        code = COMMANDS[args.command](cfg, out, rec)
        rec.write()
        return code
    except (ConfigurationError, ContractionError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    _sys.exit(main())
