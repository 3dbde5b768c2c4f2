import json
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from krflab import calabi as cb
from krflab import io as kio
from krflab.cli import ConfigError, load_config, main
from krflab.cp1 import AutomorphismElement, CP1Geometry
from krflab.flow import FlowState

from conftest import small_potentials


def write_config(path, **kw):
    with open(path, "w") as fh:
        json.dump(kw, fh)
    return str(path)


def report_of(out):
    with open(os.path.join(out, "report.json")) as fh:
        return json.load(fh)


def test_potential_round_trip(tmp_path, geom24):
    phi = small_potentials(geom24, 1, c2=0.3, seed=71)[0]
    kio.write_potential(tmp_path / "p.txt", phi)
    back = kio.read_potential(tmp_path / "p.txt")
    assert np.array_equal(back.coeffs, phi.coeffs)
    with pytest.raises(kio.RecordError, match="bandlimit"):
        kio.read_potential(tmp_path / "p.txt", CP1Geometry(16))


def test_profile_and_reduced_round_trip(tmp_path):
    prof = cb.solve_soliton(24)
    kio.write_profile(tmp_path / "prof.txt", prof)
    back = kio.read_profile(tmp_path / "prof.txt")
    assert back.lam == prof.lam and back.metric_complete
    assert_allclose(back.values, prof.values, atol=1e-14)
    state = cb.ReducedPotential(prof, 0.01 * np.cos(prof.tau))
    kio.write_reduced(tmp_path / "r.txt", state)
    again = kio.read_reduced(tmp_path / "r.txt")
    assert np.array_equal(again.w, state.w) and np.array_equal(again.reference.values, prof.values)


def test_checkpoint_round_trip(tmp_path, geom24):
    phi = small_potentials(geom24, 1, c2=0.3, seed=72)[0]
    s = AutomorphismElement.exp(np.array([[0.1, 0.2 - 0.1j], [0.2 + 0.1j, -0.1]]))
    state = FlowState(phi, 0.25, -1e-3, [(0.125, s)], None, 3e-17, False, False)
    kio.write_checkpoint(tmp_path / "c.txt", state, {"dt": 0.001}, 0.5, 250)
    back, cfg, base, step = kio.read_checkpoint(tmp_path / "c.txt")
    assert (cfg, base, step) == ({"dt": 0.001}, 0.5, 250)
    assert (back.t, back.a_integral, back.defect, back.armed) == (0.25, -1e-3, 3e-17, False)
    assert np.array_equal(back.phi.coeffs, phi.coeffs)
    assert back.gauge[0][0] == 0.125 and np.array_equal(back.gauge[0][1].matrix, s.matrix)


@pytest.mark.parametrize("mutate, match", [
    (lambda t: t.replace("potential v1", "potential v2"), "version"),
    (lambda t: t.replace("bandlimit", "bandwidth"), "expected"),
    (lambda t: "\n".join(t.splitlines()[:20]), "truncated"),
    (lambda t: t.replace("\n3 1 ", "\n3 1 x", 1), "unparseable"),
])
def test_corrupt_records(tmp_path, geom24, mutate, match):
    kio.write_potential(tmp_path / "p.txt", small_potentials(geom24, 1, seed=73)[0])
    text = (tmp_path / "p.txt").read_text()
    (tmp_path / "p.txt").write_text(mutate(text))
    with pytest.raises(kio.RecordError, match=match):
        kio.read_potential(tmp_path / "p.txt")


def test_timeseries_round_trip(tmp_path):
    rows = [(0.0, 1 / 3, -1 / 3, 0.0, 1e-300, 2.0, 0.1, 0.2, 0.9, 0), (0.1, 0.2, -0.2, 1e-17, 1e-5, 1.0, 0.1, 0.2, 0.9, 1)]
    kio.write_timeseries(tmp_path / "ts.csv", rows)
    assert np.array_equal(kio.read_timeseries(tmp_path / "ts.csv"), np.array(rows, dtype=float))


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="dtt"):
        load_config({"dtt": 0.1})
    with pytest.raises(ConfigError, match="bandlimit"):
        load_config({"bandlimit": 16.5})
    with pytest.raises(ConfigError, match="normalized"):
        load_config({"normalized": 1})
    with pytest.raises(ConfigError, match="experiment"):
        load_config({"experiment": "explode"})
    with pytest.raises(ConfigError, match="init_file"):
        load_config({"init_file": str(tmp_path / "missing.txt")})
    assert main(["run", write_config(tmp_path / "bad.json", dt=-1.0)]) == 1


def test_flat_run(tmp_path):
    out = str(tmp_path / "out")
    cfg = write_config(tmp_path / "c.json", bandlimit=12, dt=0.01, t_end=0.1, generator="random",
                       amplitude=0.0, output_dir=out)
    assert main(["run", cfg]) == 0
    rows = kio.read_timeseries(os.path.join(out, "timeseries.csv"))
    assert np.all(rows[:, 1:9] == np.array([0, 0, 0, 0, 0, 0, 0, 1.0])[None, :])
    doc = report_of(out)
    assert kio.validate_report(doc) == [] and doc["config"]["t_end"] == 0.1
    assert all(doc["verdicts"].values())


def test_replay_and_resume(tmp_path, capsys):
    base = dict(bandlimit=12, dt=2e-3, generator="random", amplitude=0.05, seed=7, output_every=25)
    full = str(tmp_path / "full")
    assert main(["run", write_config(tmp_path / "a.json", t_end=0.5, output_dir=full, **base)]) == 0
    assert main(["verify", full, "--replay"]) == 0
    assert "FAIL" not in capsys.readouterr().out

    first = str(tmp_path / "first")
    assert main(["run", write_config(tmp_path / "b.json", t_end=0.25, output_dir=first,
                                     checkpoint_every=125, **base)]) == 0
    second = str(tmp_path / "second")
    assert main(["resume", os.path.join(first, "checkpoint.txt"), "--t-end", "0.5",
                 "--output-dir", second]) == 0
    a, _, _, _ = kio.read_checkpoint(os.path.join(full, "checkpoint.txt"))
    b, _, _, _ = kio.read_checkpoint(os.path.join(second, "checkpoint.txt"))
    assert np.array_equal(a.phi.coeffs, b.phi.coeffs) and a.a_integral == b.a_integral
    full_rows = kio.read_timeseries(os.path.join(full, "timeseries.csv"))
    tail = kio.read_timeseries(os.path.join(second, "timeseries.csv"))
    assert np.array_equal(full_rows[-len(tail):], tail)
    # resuming at the checkpoint time reproduces nothing new but is still valid
    assert os.path.exists(os.path.join(first, "checkpoint_00000125.txt"))


def test_corrupt_checkpoint_exit(tmp_path):
    out = str(tmp_path / "o")
    main(["run", write_config(tmp_path / "a.json", bandlimit=12, dt=0.01, t_end=0.05, output_dir=out)])
    path = os.path.join(out, "checkpoint.txt")
    text = open(path).read().replace("checkpoint v1", "checkpoint v9")
    open(path, "w").write(text)
    assert main(["resume", path, "--t-end", "0.1"]) == 1


@pytest.mark.parametrize("experiment, extra", [
    ("soliton-solve", {"chebyshev_n": 24}),
    ("gauge-fix", {"generator": "gauge", "amplitude": 0.2, "bandlimit": 24, "eps1": 2.0}),
    ("spectrum", {"bandlimit": 16}),
    ("functional-eval", {"generator": "random", "amplitude": 0.1, "bandlimit": 16}),
    ("modified-flow", {"backend": "calabi", "generator": "cosine", "amplitude": 0.01,
                       "X": True, "dt": 1e-3, "t_end": 0.02, "chebyshev_n": 24}),
])
def test_experiments(tmp_path, experiment, extra):
    out = str(tmp_path / experiment)
    assert main(["run", write_config(tmp_path / "c.json", experiment=experiment, output_dir=out, **extra)]) == 0
    doc = report_of(out)
    assert kio.validate_report(doc) == [] and doc["status"] == "ok"


def test_probe_ladder(tmp_path):
    out = str(tmp_path / "probe")
    cfg = write_config(tmp_path / "c.json", experiment="probe-weak", bandlimit=12, seed=3,
                       probe_t0=0.05, output_dir=out)
    assert main(["run", cfg]) == 0
    rows = report_of(out)["result"]["ladder"]
    assert len(rows) == 3 and report_of(out)["result"]["monotone"]
    assert len(open(os.path.join(out, "probe.csv")).read().splitlines()) == 4


def test_gauge_fix_flagged(tmp_path):
    out = str(tmp_path / "g")
    cfg = write_config(tmp_path / "c.json", experiment="gauge-fix", generator="random", amplitude=0.5,
                       bandlimit=16, eps1=0.25, output_dir=out)
    assert main(["run", cfg]) == 2
    assert report_of(out)["status"] == "flagged"
