"""Synthetic drive cycles: charge targeting, bounds, determinism, CSV."""

import numpy as np
import pytest

from ecmnet import profiles
from ecmnet.errors import DataError


def test_profile_length_and_limits():
    p = profiles.synth_dynamic_profile(duration_s=3600.0, dt=1.0, seed=11)
    assert len(p) == 3600
    imax = 2.0 * 2.0  # max_c_rate * capacity_ah
    assert float(np.max(np.abs(p.currents))) <= imax + 1e-12, (
        f"currents exceed clip limit {imax}"
    )


def test_profile_charge_target():
    # the post-clip bisection must land the midpoint integral on target
    for seed in range(6):
        p = profiles.synth_dynamic_profile(
            duration_s=3600.0, dt=1.0, seed=seed, soc_drop=0.6, capacity_ah=2.0
        )
        integral = profiles._midpoint_integral(p.currents, p.dt)
        target = -0.6 * 2.0 * 3600.0
        assert abs(integral - target) <= 1e-6 * abs(target), (
            f"seed {seed}: charge integral {integral:.3f} != target {target:.3f}"
        )


def test_profile_deterministic():
    a = profiles.synth_dynamic_profile(duration_s=600.0, dt=1.0, seed=99,
                                       soc_drop=0.1)
    b = profiles.synth_dynamic_profile(duration_s=600.0, dt=1.0, seed=99,
                                       soc_drop=0.1)
    assert np.array_equal(a.currents, b.currents), "same seed must reproduce bitwise"
    c = profiles.synth_dynamic_profile(duration_s=600.0, dt=1.0, seed=100,
                                       soc_drop=0.1)
    assert not np.array_equal(a.currents, c.currents), "seeds must differ"


def test_profile_is_dynamic():
    p = profiles.synth_dynamic_profile(duration_s=3600.0, dt=1.0, seed=5)
    changes = np.count_nonzero(np.diff(p.currents))
    # mean segment 10 s over 3600 s -> expect on the order of 360 switches
    assert changes > 100, f"profile barely switches ({changes} changes)"
    mean_seg = len(p) / (changes + 1)
    assert 5.0 <= mean_seg <= 20.0, f"mean segment {mean_seg:.1f} s far from 10 s"


def test_profile_unreachable_target():
    # demanding a 90% drop in one minute at 0.1 C cannot be met even
    # fully clipped
    with pytest.raises(ValueError):
        profiles.synth_dynamic_profile(
            duration_s=60.0, dt=1.0, seed=1, max_c_rate=0.1, soc_drop=0.9
        )


def test_profile_validation():
    with pytest.raises(ValueError):
        profiles.synth_dynamic_profile(duration_s=0.0, dt=1.0, seed=1)
    with pytest.raises(ValueError):
        profiles.synth_dynamic_profile(duration_s=60.0, dt=1.0, seed=1, soc_drop=1.0)
    with pytest.raises(ValueError):
        profiles.synth_dynamic_profile(
            duration_s=60.0, dt=1.0, seed=1, mean_segment_s=0.5
        )
    with pytest.raises(ValueError):
        profiles.CurrentProfile(dt=1.0, currents=np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        profiles.CurrentProfile(dt=0.0, currents=np.array([1.0]))


def test_current_at_zero_order_hold():
    p = profiles.CurrentProfile(dt=0.5, currents=np.array([1.0, 2.0, 3.0]))
    assert profiles.current_at(p, 0.0) == 1.0
    assert profiles.current_at(p, 0.49) == 1.0
    assert profiles.current_at(p, 0.5) == 2.0
    assert profiles.current_at(p, 1.0) == 3.0
    with pytest.raises(ValueError):
        profiles.current_at(p, -0.01)
    with pytest.raises(ValueError):
        profiles.current_at(p, 1.51)


def test_current_mid():
    p = profiles.CurrentProfile(dt=1.0, currents=np.array([1.0, 3.0, -2.0]))
    assert profiles.current_mid(p, 0) == 2.0
    assert profiles.current_mid(p, 1) == 0.5
    with pytest.raises(ValueError):
        profiles.current_mid(p, 2)


def test_profile_csv_round_trip(tmp_path):
    p = profiles.synth_dynamic_profile(duration_s=120.0, dt=1.0, seed=3,
                                       soc_drop=0.02)
    path = tmp_path / "prof.csv"
    profiles.export_profile_csv(p, path, comments={"config_hash": "deadbeef"})
    text = path.read_text()
    assert text.startswith("# config_hash=deadbeef\n"), "comment line missing"
    assert profiles.PROFILE_HEADER in text
    back = profiles.load_profile_csv(path)
    assert back.dt == p.dt
    assert np.max(np.abs(back.currents - p.currents)) <= 1e-9 * max(
        1.0, float(np.max(np.abs(p.currents)))
    ), "profile CSV round trip drifted"


def test_profile_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,current\n0,1\n")
    with pytest.raises(DataError):
        profiles.load_profile_csv(path)


def test_profile_csv_nonuniform_dt(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time_s,current_A\n0,1\n1,1\n3,1\n")
    with pytest.raises(DataError):
        profiles.load_profile_csv(path)
