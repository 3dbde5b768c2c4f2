"""
Command-line driver: ``krflab run``, ``krflab resume`` and ``krflab verify``.

A run is described by a flat JSON object; unknown keys are rejected.  All
randomness comes from ``numpy.random.default_rng(seed)`` (PCG64) with the
recorded seed.  Outputs go to ``output_dir``: ``timeseries.csv``,
``report.json``, ``config.json`` and checkpoint records.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from . import calabi as cb
from . import io as kio
from .cp1 import AutomorphismElement, CP1Geometry, cluster_eigenvalues, gauge_potential, norms, sl2_basis, spectrum
from .flow import (
    FlowConfig,
    PositivityBreach,
    random_potential,
    rough_potential,
    run_flow,
    smoothing_probe,
)
from .functionals import normalize_to_H0, report as functional_report
from .mabuchi import distance_upper_bound, project_IJ

__all__ = ["RunConfig", "ConfigError", "main", "execute", "load_config"]

EXPERIMENTS = ("flow", "modified-flow", "soliton-solve", "gauge-fix", "spectrum", "probe-weak",
               "functional-eval")
GENERATORS = ("zero", "random", "rough", "gauge", "cosine")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """
    Flat run configuration.

    Flow keys are those of :class:`~krflab.flow.FlowConfig`.  Initial data
    comes from ``init_file`` (a potential or reduced record) or from
    ``generator`` with ``seed`` and ``amplitude``:

    - ``zero``: the reference metric;
    - ``random``: smooth data of degrees ``lmin..lmax`` with C2proxy ``amplitude``
      (Calabi backend: Chebyshev modes with sup norm ``amplitude``);
    - ``rough``: rough data with sup norm ``amplitude``;
    - ``gauge``: pure-gauge potential of ``exp(H)``, ``|H| = amplitude``;
    - ``cosine``: Calabi backend only, ``amplitude cos(pi (tau - 1))``.
    """

    experiment: str = "flow"
    backend: str = "cp1"
    bandlimit: int = 32
    chebyshev_n: int = 32
    integrator: str = "rk4"
    dt: float = 1e-3
    t_end: float = 1.0
    eps1: float = 0.25
    recenter: str = "off"
    delta_pos: float = 1e-6
    X: object = None
    output_every: int = 10
    normalized: bool = True
    hysteresis: float = 0.5
    mu_floor: float = 1e-24
    init_file: str | None = None
    generator: str = "zero"
    seed: int = 0
    amplitude: float = 0.0
    lmin: int = 2
    lmax: int = 4
    checkpoint_every: int = 0
    output_dir: str = "krflab-out"
    spectrum_k: int = 9
    probe_t0: float = 0.1
    ladder: list = field(default_factory=lambda: [0.3, 0.1, 0.03])

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown kind {self.experiment!r}")
        if self.generator not in GENERATORS:
            raise ConfigError(f"generator: unknown name {self.generator!r}")
        if self.init_file is not None and not os.path.exists(self.init_file):
            raise ConfigError(f"init_file: {self.init_file!r} does not exist")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed: must be a 64-bit unsigned integer")
        if self.bandlimit < 8:
            raise ConfigError("bandlimit: must be at least 8")
        try:
            self.flow_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def flow_config(self):
        names = {f.name for f in fields(FlowConfig)}
        return FlowConfig(**{k: getattr(self, k) for k in names})

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config(source):
    """Parse a JSON config (path or dict); the offending key is named on errors."""
    if isinstance(source, dict):
        doc = source
    else:
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name: f for f in fields(RunConfig)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{key}: unknown configuration key")
    for key, val in doc.items():
        default = known[key].default
        if isinstance(default, bool) and not isinstance(val, bool):
            raise ConfigError(f"{key}: expected true/false")
        if isinstance(default, int) and not isinstance(default, bool) and not (
                isinstance(val, int) and not isinstance(val, bool)):
            raise ConfigError(f"{key}: expected an integer")
        if isinstance(default, float) and not isinstance(val, (int, float)):
            raise ConfigError(f"{key}: expected a number")
    return RunConfig(**doc)


# -- initial data -------------------------------------------------------------

def _initial_cp1(cfg, geometry, rng):
    if cfg.init_file is not None:
        return kio.read_potential(cfg.init_file, geometry)
    if cfg.generator == "zero" or cfg.amplitude == 0:
        return geometry.zero()
    if cfg.generator == "random":
        return random_potential(geometry, rng, cfg.amplitude, cfg.lmin, cfg.lmax)
    if cfg.generator == "rough":
        return rough_potential(geometry, rng, cfg.amplitude)
    if cfg.generator == "gauge":
        d = rng.normal(size=3)
        H = sum(c * E for c, E in zip(d / np.linalg.norm(d), sl2_basis()[:3]))
        return gauge_potential(AutomorphismElement.exp(cfg.amplitude * H), geometry)
    raise ConfigError(f"generator: {cfg.generator!r} is not available on the cp1 backend")


def _initial_calabi(cfg, reference, rng):
    if cfg.init_file is not None:
        state = kio.read_reduced(cfg.init_file)
        if state.grid.N != reference.grid.N:
            raise ConfigError("init_file: node count differs from chebyshev_n")
        return state
    tau = reference.grid.tau
    if cfg.generator == "zero" or cfg.amplitude == 0:
        w = np.zeros_like(tau)
    elif cfg.generator == "cosine":
        w = cfg.amplitude * np.cos(np.pi * (tau - 1.0))
    elif cfg.generator == "random":
        x = tau - 2.0
        w = sum(rng.normal() / k * np.polynomial.chebyshev.chebval(x, np.eye(k + 1)[k])
                for k in range(1, 5))
        w = cfg.amplitude * w / np.max(np.abs(w))
    else:
        raise ConfigError(f"generator: {cfg.generator!r} is not available on the calabi backend")
    return cb.ReducedPotential(reference, w).normalized()


# -- experiments ---------------------------------------------------------------

class _Outcome:
    def __init__(self, result, status="ok", rows=None):
        self.result = result
        self.status = status
        self.rows = rows


def _exp_flow(cfg, rng, out):
    fc = cfg.flow_config()
    if cfg.experiment == "modified-flow" and fc.holomorphic_field() is None:
        raise ConfigError("X: the modified flow needs a holomorphic field")
    if cfg.experiment == "flow" and cfg.X is not None:
        raise ConfigError("X: use experiment 'modified-flow' for a holomorphic field")
    if cfg.backend == "calabi":
        if cfg.experiment != "modified-flow":
            raise ConfigError("experiment: the calabi backend evolves the modified flow")
        reference = cb.solve_soliton(cfg.chebyshev_n)
        phi0 = _initial_calabi(cfg, reference, rng)
    else:
        phi0 = _initial_cp1(cfg, CP1Geometry(cfg.bandlimit), rng)
    return _run_and_collect(cfg, fc, phi0, None, None, out)


def _run_and_collect(cfg, fc, phi0, state, base, out):
    echo = cfg.to_dict()

    def on_step(index, st, b):
        if cfg.checkpoint_every and index % cfg.checkpoint_every == 0:
            kio.write_checkpoint(os.path.join(out, f"checkpoint_{index:08d}.txt"), st, echo, b, index)

    try:
        rep = run_flow(fc, phi0, state=state, base=base, on_step=on_step)
    except PositivityBreach as exc:
        partial = exc.report
        return _Outcome({"termination": "positivity", "error": str(exc),
                         **(partial.to_dict() if partial else {})}, "fatal",
                        partial.rows if partial else [])
    final = rep.final_state
    step = int(round(final.t / fc.dt))
    kio.write_checkpoint(os.path.join(out, "checkpoint.txt"), final, echo,
                         rep.extras["a_plus_nu_base"], step)
    result = rep.to_dict()
    result.pop("defect_series", None)
    result["integrator_drift"] = float(np.max(np.abs(np.array(rep.extras["defect_series"])
                                                     - rep.extras["defect_series"][0])))
    status = "flagged" if rep.flagged else "ok"
    return _Outcome(result, status, rep.rows)


def _exp_soliton(cfg, rng, out):
    prof = cb.solve_soliton(cfg.chebyshev_n)
    kio.write_profile(os.path.join(out, "profile.txt"), prof)
    res = cb.soliton_residual(prof)
    sa, sb = prof.slopes()
    return _Outcome({
        "lambda": prof.lam,
        "futaki_at_zero": cb.futaki_radial(0.0),
        "futaki_at_lambda": cb.futaki_radial(prof.lam),
        "residual_max": float(np.max(np.abs(res))),
        "slopes": [sa, sb],
    })


def _exp_gauge(cfg, rng, out):
    phi = _initial_cp1(cfg, CP1Geometry(cfg.bandlimit), rng)
    res = project_IJ(normalize_to_H0(phi), eps1=cfg.eps1)
    d = res.to_dict()
    d["distance_upper_bound"] = distance_upper_bound(normalize_to_H0(phi))
    return _Outcome(d, "flagged" if res.flagged else "ok")


def _exp_spectrum(cfg, rng, out):
    phi = _initial_cp1(cfg, CP1Geometry(cfg.bandlimit), rng)
    vals = spectrum(phi, cfg.spectrum_k)
    return _Outcome({"eigenvalues": [float(v) for v in vals],
                     "clusters": [[v, n] for v, n in cluster_eigenvalues(vals)]})


def _exp_probe(cfg, rng, out):
    g = CP1Geometry(cfg.bandlimit)
    rows = []
    seed = int(cfg.seed)
    for sup in cfg.ladder:
        # the same roughness shape on every rung
        phi0 = rough_potential(g, np.random.default_rng(seed), float(sup))
        p = smoothing_probe(phi0, cfg.probe_t0)
        rows.append({"sup_target": float(sup), **p})
    c2 = [r["c2proxy"] for r in rows]
    order = np.argsort([-r["sup_target"] for r in rows])
    monotone = bool(all(c2[order[i]] > c2[order[i + 1]] for i in range(len(order) - 1)))
    with open(os.path.join(out, "probe.csv"), "w") as fh:
        fh.write("sup_target,sup0,sup_t,c2proxy,bound_ok\n")
        for r in rows:
            fh.write(",".join(kio.fmt(r[k]) for k in ("sup_target", "sup0", "sup_t", "c2proxy", "bound_ok"))
                     + "\n")
    ok = monotone and all(r["bound_ok"] for r in rows)
    return _Outcome({"ladder": rows, "monotone": monotone}, "ok" if ok else "flagged")


def _exp_functionals(cfg, rng, out):
    phi = normalize_to_H0(_initial_cp1(cfg, CP1Geometry(cfg.bandlimit), rng))
    rep = functional_report(phi, distance_upper_bound=distance_upper_bound(phi), **norms(phi))
    return _Outcome(rep.to_dict())


_DISPATCH = {
    "flow": _exp_flow,
    "modified-flow": _exp_flow,
    "soliton-solve": _exp_soliton,
    "gauge-fix": _exp_gauge,
    "spectrum": _exp_spectrum,
    "probe-weak": _exp_probe,
    "functional-eval": _exp_functionals,
}

_EXIT = {"ok": 0, "flagged": 2, "fatal": 1}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _verdicts(cfg, outcome):
    r = outcome.result
    v = {}
    if outcome.rows:
        rows = np.array(outcome.rows, dtype=float)
        nu = rows[:, 1]
        v["nu_monotone"] = bool(np.all(np.diff(nu) <= 1e-10))
        if cfg.experiment == "flow":
            v["drift_le_1e-8"] = bool(np.max(np.abs(rows[:, 3])) <= 1e-8)
        if "I_max" in r:
            v["normalization_le_1e-8"] = bool(r["I_max"] <= 1e-8)
    return v


def _emit(cfg, outcome, t0, out):
    if outcome.rows is not None:
        kio.write_timeseries(os.path.join(out, "timeseries.csv"), outcome.rows)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(_jsonable(cfg.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    doc = {
        "schema": "krflab-report/1",
        "tool": "krflab",
        "version": __version__,
        "experiment": cfg.experiment,
        "status": outcome.status,
        "exit_code": _EXIT[outcome.status],
        "config": _jsonable(cfg.to_dict()),
        "wall_clock_seconds": time.perf_counter() - t0,
        "result": _jsonable(outcome.result),
        "verdicts": _verdicts(cfg, outcome),
    }
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return _EXIT[outcome.status]


def execute(cfg, output_dir=None):
    """Run one configured experiment and write its bundle; returns the exit code."""
    t0 = time.perf_counter()
    out = output_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(int(cfg.seed))
    outcome = _DISPATCH[cfg.experiment](cfg, rng, out)
    return _emit(cfg, outcome, t0, out)


def resume(checkpoint, t_end, output_dir=None):
    state, echo, base, step = kio.read_checkpoint(checkpoint)
    echo = dict(echo)
    echo["t_end"] = float(t_end)
    if output_dir is not None:
        echo["output_dir"] = output_dir
    cfg = load_config(echo)
    fc = cfg.flow_config()
    if abs(state.t - step * fc.dt) > 1e-12 * max(1.0, state.t):
        raise ConfigError("checkpoint time is inconsistent with its step count and dt")
    if isinstance(state.phi, cb.ReducedPotential) != (cfg.backend == "calabi"):
        raise ConfigError("checkpoint data does not match the configured backend")
    if cfg.backend == "cp1" and state.phi.geometry.L != cfg.bandlimit:
        raise ConfigError("checkpoint bandlimit differs from the configured bandlimit")
    t0 = time.perf_counter()
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    outcome = _run_and_collect(cfg, fc, None, state, base, out)
    return _emit(cfg, outcome, t0, out)


def verify(bundle, replay=False):
    """Re-check an emitted bundle; prints one line per check and returns the exit code."""
    with open(os.path.join(bundle, "report.json")) as fh:
        doc = json.load(fh)
    checks = []
    problems = kio.validate_report(doc)
    checks.append(("report schema", not problems, "; ".join(problems) or "valid"))
    csv = os.path.join(bundle, "timeseries.csv")
    if os.path.exists(csv):
        rows = kio.read_timeseries(csv)
        nu, a, drift = rows[:, 1], rows[:, 2], rows[:, 3]
        base = a[0] + nu[0] - drift[0]
        checks.append(("drift column reproducible", bool(np.allclose(a + nu - base, drift, rtol=0, atol=1e-15)),
                       f"max diff {np.max(np.abs(a + nu - base - drift)):.2e}"))
        if doc.get("experiment") == "flow":
            # a + nu is conserved by the unmodified flow only
            checks.append(("conservation drift <= 1e-8", bool(np.max(np.abs(drift)) <= 1e-8),
                           f"{np.max(np.abs(drift)):.3e}"))
        inc = float(np.max(np.diff(nu))) if len(nu) > 1 else 0.0
        checks.append(("energy non-increasing (slack 1e-10)", inc <= 1e-10, f"max increase {inc:.3e}"))
        checks.append(("time monotone", bool(np.all(np.diff(rows[:, 0]) > 0)), ""))
        if doc.get("config", {}).get("backend") == "cp1":
            checks.append(("K-energy >= -1e-10", bool(np.min(nu) >= -1e-10), f"min {np.min(nu):.3e}"))
        imax = doc.get("result", {}).get("I_max")
        if imax is not None:
            checks.append(("|I| <= 1e-8", imax <= 1e-8, f"{imax:.3e}"))
    if replay and os.path.exists(csv):
        cfg = load_config(doc["config"])
        with tempfile.TemporaryDirectory() as tmp:
            execute(cfg, tmp)
            with open(csv, "rb") as f1, open(os.path.join(tmp, "timeseries.csv"), "rb") as f2:
                same = f1.read() == f2.read()
        checks.append(("replay byte-identical", same, ""))
    for name, ok, info in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {info}".rstrip())
    return 0 if all(ok for _, ok, _ in checks) else 2


def main(argv=None):
    parser = argparse.ArgumentParser(prog="krflab", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir")
    p_res = sub.add_parser("resume", help="continue a flow from a checkpoint record")
    p_res.add_argument("checkpoint")
    p_res.add_argument("--t-end", type=float, required=True)
    p_res.add_argument("--output-dir")
    p_ver = sub.add_parser("verify", help="re-check an emitted bundle")
    p_ver.add_argument("bundle")
    p_ver.add_argument("--replay", action="store_true", help="also replay the config echo")
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            return execute(cfg, args.output_dir)
        if args.command == "resume":
            return resume(args.checkpoint, args.t_end, args.output_dir)
        return verify(args.bundle, args.replay)
    except (ConfigError, kio.RecordError, OSError) as exc:
        print(f"krflab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
