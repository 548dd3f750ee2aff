import math

import numpy as np
import pytest

from delaylt.sim import (CHUNK, CSV_COLUMNS, ROLE_CAL, ROLE_EVAL, PointSpec, SlotStream, SweepSpec,
                         batch_means_ci, compare_modes, db_to_linear, linear_to_db, read_csv,
                         run_point, run_sweep, strict_delay_trajectory, to_csv)
from delaylt.model import build_partition
from delaylt.waterfill import strict_delay_optimal


def test_db_conversion():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(-math.inf) == 0.0
    assert linear_to_db(0.0) == -math.inf
    assert linear_to_db(db_to_linear(7.5)) == pytest.approx(7.5)


def test_stream_chunks_are_seamless():
    s = SlotStream(3)
    a = s.raw(CHUNK - 5, CHUNK + 5)
    b = np.concatenate([s.raw(CHUNK - 5, CHUNK), s.raw(CHUNK, CHUNK + 5)], axis=1)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(SlotStream(3, ROLE_CAL).raw(0, 10), SlotStream(3, ROLE_EVAL).raw(0, 10))
    assert not np.array_equal(SlotStream(4).raw(0, 10), s.raw(0, 10))
    assert np.all(s.raw(0, 1000)[3] > 0)


def test_batch_means():
    m, half, ok = batch_means_ci(np.ones(1000))
    assert (m, half, ok) == (1.0, 0.0, True)
    m, half, ok = batch_means_ci(np.array([2.0]))
    assert m == 2.0 and half == math.inf and not ok
    assert not batch_means_ci(np.arange(10.0))[2]
    x = np.random.default_rng(0).standard_normal(100_000)
    m, half, ok = batch_means_ci(x)
    assert half == pytest.approx(1.96 / math.sqrt(x.size), rel=0.3)


def test_point_validation():
    with pytest.raises(ValueError):
        PointSpec("strict", 3, 10.0, 10)
    with pytest.raises(ValueError):
        PointSpec("LTSM", 3, 10.0, 0)
    with pytest.raises(ValueError):
        PointSpec("LTSM", 3, 10.0, 10, mode="exact")


def test_deterministic(src, ray):
    spec = PointSpec("LTSM", 5, 10.0, 2000, seed=11, cal_slots=20_000)
    a = run_point(spec, src, ray)
    b = run_point(spec, src, ray)
    assert a == b
    c = run_point(PointSpec("LTSM", 5, 10.0, 2000, seed=12, cal_slots=20_000), src, ray)
    assert c.mse != a.mse


def test_single_block(src, ray):
    p = run_point(PointSpec("LTHM", 3, 10.0, 1, cal_slots=20_000), src, ray)
    assert p.mse_ci95 == math.inf and not p.reliable


def test_zero_power_point(src, ray):
    p = run_point(PointSpec("LTSM", 3, -math.inf, 5000), src, ray)
    assert p.mu == 0.0 and p.avg_power == 0.0
    assert p.mse == pytest.approx(3.0, rel=0.05)


def test_strict_trajectory_oracle(src, disc):
    t = strict_delay_optimal(src, disc, 10.0)
    part = build_partition(src, disc)
    dr = SlotStream(0).draws(src, disc, part, 0, 200_000, 1)
    pw, err = strict_delay_trajectory(src, t.lam, dr)
    assert abs(pw.mean() - 10.0) < 4 * pw.std() / math.sqrt(pw.size)
    assert abs(err.mean() - t.avg_distortion) < 4 * err.std() / math.sqrt(err.size)


def test_strict_point_matches_optimum(src, ray):
    p = run_point(PointSpec("strict", 1, 10.0, 200_000), src, ray)
    exact = strict_delay_optimal(src, ray, 10.0).avg_distortion
    assert abs(p.mse - exact) < 3 * p.mse_ci95


def test_csv_roundtrip(src, ray):
    pts = run_sweep(SweepSpec(["LTHM", "LTSM"], [1, 3], [0.0, 10.0], 500, seed=1), src, ray)
    assert len(pts) == 8
    text = to_csv(pts)
    rows = read_csv(text)
    assert list(rows[0]) == list(CSV_COLUMNS)
    for p, r in zip(pts, rows):
        assert float(r["mse"]) == p.mse and r["strategy"] == p.strategy and int(r["d"]) == p.d


def test_sweep_reports_failures(src, ray, monkeypatch):
    from delaylt import sim
    from delaylt.strategies import CalibrationFailure

    def boom(*a, **k):
        raise CalibrationFailure("no transmissions")

    monkeypatch.setattr(sim, "_calibrate", boom)
    pts = run_sweep(SweepSpec(["LTHM"], [3], [10.0], 100), src, ray)
    assert pts[0].failed and math.isnan(pts[0].mse)


def test_compare_modes(src, ray):
    a, b, ok = compare_modes(PointSpec("LTHM", 3, 10.0, 50_000), src, ray)
    assert ok and a.mu == b.mu and a.mode == "analytic" and b.mode == "noise"
