"""
Text records for potentials, profiles and checkpoints, and run outputs.

Every record starts with a ``<kind> v<version>`` line followed by
``key value`` header lines and a data block.  Floats are written with 17
significant digits, which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import json

import numpy as np

from . import calabi as cb
from .cp1 import AutomorphismElement, CP1Geometry, PotentialField
from .flow import COLUMNS, FlowState

__all__ = [
    "FORMAT_VERSION",
    "RecordError",
    "fmt",
    "write_potential",
    "read_potential",
    "write_profile",
    "read_profile",
    "write_reduced",
    "read_reduced",
    "write_checkpoint",
    "read_checkpoint",
    "write_timeseries",
    "read_timeseries",
    "REPORT_SCHEMA",
    "validate_report",
]

FORMAT_VERSION = 1


class RecordError(ValueError):
    """Malformed, truncated or version-mismatched record."""


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def _header(kind):
    return f"{kind} v{FORMAT_VERSION}"


class _Reader:
    def __init__(self, lines, kind):
        self.lines = [ln.rstrip("\n") for ln in lines]
        self.pos = 0
        head = self.next()
        expected = _header(kind)
        if head != expected:
            if head.split(" ")[0] == kind:
                raise RecordError(f"version mismatch: found {head!r}, expected {expected!r}")
            raise RecordError(f"not a {kind} record: {head!r}")

    def next(self):
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise RecordError("record truncated")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def field(self, key, conv=str):
        line = self.next()
        parts = line.split(" ", 1)
        if parts[0] != key or len(parts) != 2:
            raise RecordError(f"expected {key!r}, found {line!r}")
        try:
            return conv(parts[1])
        except ValueError as exc:
            raise RecordError(f"bad value for {key!r}: {parts[1]!r}") from exc

    def floats(self, n_expected=None):
        line = self.next()
        try:
            vals = [float(x) for x in line.split()]
        except ValueError as exc:
            raise RecordError(f"unparseable numeric line: {line!r}") from exc
        if n_expected is not None and len(vals) != n_expected:
            raise RecordError(f"expected {n_expected} numbers, found {len(vals)}: {line!r}")
        if not all(np.isfinite(vals)):
            raise RecordError(f"non-finite value in {line!r}")
        return vals


# -- potentials ---------------------------------------------------------------

def _potential_lines(phi):
    g = phi.geometry
    out = [_header("potential"), f"bandlimit {g.L}",
           f"grid {g.grid.nlat} {g.grid.nlon}", "coefficients l m re im"]
    A = phi.coeffs
    for l in range(g.L + 1):
        for m in range(l + 1):
            out.append(f"{l} {m} {fmt(A[l, m].real)} {fmt(A[l, m].imag)}")
    return out


def _parse_potential(rd, geometry=None):
    L = rd.field("bandlimit", int)
    nlat, nlon = (int(x) for x in rd.field("grid").split())
    if rd.next() != "coefficients l m re im":
        raise RecordError("missing coefficient block")
    if geometry is None:
        geometry = CP1Geometry(L, nlat, nlon)
    elif geometry.L != L:
        raise RecordError(f"record bandlimit {L} differs from geometry {geometry.L}")
    A = geometry.grid.zeros()
    for l in range(L + 1):
        for m in range(l + 1):
            vals = rd.floats(4)
            if int(vals[0]) != l or int(vals[1]) != m:
                raise RecordError(f"coefficient order broken at ({l}, {m})")
            A[l, m] = vals[2] + 1j * vals[3]
    return PotentialField(geometry, A)


def write_potential(path, phi):
    with open(path, "w") as fh:
        fh.write("\n".join(_potential_lines(phi)) + "\n")


def read_potential(path, geometry=None):
    with open(path) as fh:
        return _parse_potential(_Reader(fh.readlines(), "potential"), geometry)


# -- profiles -----------------------------------------------------------------

def _profile_lines(profile):
    coeffs = profile.grid.coefficients(profile.values)
    out = [_header("profile"), f"interval {fmt(profile.grid.a)} {fmt(profile.grid.b)}",
           f"lambda {fmt(profile.lam)}", f"metric_complete {int(profile.metric_complete)}",
           f"chebyshev {len(coeffs)}"]
    out += [fmt(c) for c in coeffs]
    return out


def write_profile(path, profile):
    with open(path, "w") as fh:
        fh.write("\n".join(_profile_lines(profile)) + "\n")


def read_profile(path):
    with open(path) as fh:
        rd = _Reader(fh.readlines(), "profile")
    a, b = (float(x) for x in rd.field("interval").split())
    lam = rd.field("lambda", float)
    complete = bool(rd.field("metric_complete", int))
    n = rd.field("chebyshev", int)
    coeffs = np.array([rd.floats(1)[0] for _ in range(n)])
    grid = cb.ChebyshevGrid(n - 1, a, b)
    values = np.polynomial.chebyshev.chebval(grid.x, coeffs)
    if complete:
        values[0] = values[-1] = 0.0
    return cb.MomentumProfile(grid, values, lam=lam, metric_complete=complete)


def _reduced_lines(state):
    ref = state.reference
    out = [_header("reduced"), f"lambda {fmt(ref.lam)}", f"nodes {ref.grid.N + 1}",
           "tau phi_sol w"]
    for t, p, w in zip(ref.grid.tau, ref.values, state.w):
        out.append(f"{fmt(t)} {fmt(p)} {fmt(w)}")
    return out


def _parse_reduced(rd):
    lam = rd.field("lambda", float)
    n = rd.field("nodes", int)
    if rd.next() != "tau phi_sol w":
        raise RecordError("missing node block")
    rows = np.array([rd.floats(3) for _ in range(n)])
    grid = cb.ChebyshevGrid(n - 1)
    if np.max(np.abs(grid.tau - rows[:, 0])) > 1e-14:
        raise RecordError("node positions do not match a Chebyshev grid on [1, 3]")
    ref = cb.MomentumProfile(grid, rows[:, 1], lam=lam)
    return cb.ReducedPotential(ref, rows[:, 2])


def write_reduced(path, state):
    with open(path, "w") as fh:
        fh.write("\n".join(_reduced_lines(state)) + "\n")


def read_reduced(path):
    with open(path) as fh:
        return _parse_reduced(_Reader(fh.readlines(), "reduced"))


# -- checkpoints ----------------------------------------------------------------

def write_checkpoint(path, state, config, base, step):
    """
    Checkpoint record: the config echo, flow scalars, gauge factors and the
    embedded potential (CP^1) or reduced state (Calabi).
    """
    out = [_header("checkpoint"),
           "config " + json.dumps(config, sort_keys=True),
           f"step {int(step)}", f"t {fmt(state.t)}", f"a_integral {fmt(state.a_integral)}",
           f"defect {fmt(state.defect)}", f"base {fmt(base)}",
           f"armed {int(state.armed)}", f"recenter_failed {int(state.recenter_failed)}",
           f"gauge {len(state.gauge)}"]
    for t, s in state.gauge:
        vals = [t] + [v for z in s.entries for v in (z.real, z.imag)]
        out.append(" ".join(fmt(v) for v in vals))
    if isinstance(state.phi, cb.ReducedPotential):
        out += _reduced_lines(state.phi)
    else:
        out += _potential_lines(state.phi)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def read_checkpoint(path):
    """Return ``(state, config_dict, base, step)``."""
    with open(path) as fh:
        rd = _Reader(fh.readlines(), "checkpoint")
    try:
        config = json.loads(rd.field("config"))
    except json.JSONDecodeError as exc:
        raise RecordError(f"config echo is not valid JSON: {exc}") from exc
    step = rd.field("step", int)
    t = rd.field("t", float)
    a_int = rd.field("a_integral", float)
    defect = rd.field("defect", float)
    base = rd.field("base", float)
    armed = bool(rd.field("armed", int))
    failed = bool(rd.field("recenter_failed", int))
    ng = rd.field("gauge", int)
    gauge = []
    for _ in range(ng):
        v = rd.floats(9)
        z = [v[1 + 2 * k] + 1j * v[2 + 2 * k] for k in range(4)]
        gauge.append((v[0], AutomorphismElement.from_entries(*z)))
    kind = rd.next()
    rd.pos -= 1
    if kind == _header("reduced"):
        rd.next()
        phi = _parse_reduced(rd)
    elif kind == _header("potential"):
        rd.next()
        phi = _parse_potential(rd)
    else:
        raise RecordError(f"unknown embedded record {kind!r}")
    state = FlowState(phi, t, a_int, gauge, None, defect, armed, failed)
    return state, config, base, step


# -- run outputs ----------------------------------------------------------------

def write_timeseries(path, rows):
    with open(path, "w") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")


def read_timeseries(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != COLUMNS:
            raise RecordError(f"unexpected timeseries header {header}")
        data = [[float(x) for x in ln.split(",")] for ln in fh if ln.strip()]
    return np.array(data).reshape(-1, len(COLUMNS))


REPORT_SCHEMA = {
    "schema": str,
    "tool": str,
    "version": str,
    "experiment": str,
    "status": str,
    "exit_code": int,
    "config": dict,
    "wall_clock_seconds": float,
    "result": dict,
    "verdicts": dict,
}


def validate_report(doc):
    """Check the documented top-level keys and types; return a list of problems."""
    problems = []
    for key, typ in REPORT_SCHEMA.items():
        if key not in doc:
            problems.append(f"missing key {key!r}")
        elif typ is float and not isinstance(doc[key], (int, float)):
            problems.append(f"{key!r} should be a number")
        elif typ is not float and not isinstance(doc[key], typ):
            problems.append(f"{key!r} should be {typ.__name__}")
    extra = set(doc) - set(REPORT_SCHEMA)
    if extra:
        problems.append(f"unexpected keys {sorted(extra)}")
    if doc.get("status") not in ("ok", "flagged", "fatal"):
        problems.append("status must be ok, flagged or fatal")
    return problems
