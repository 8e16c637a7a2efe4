"""Truth simulator: closed-form oracles, abort behavior, noise, CSV."""

import math

import numpy as np
import pytest

from ecmnet import ecm, profiles
from ecmnet import simulate as sim
from ecmnet.errors import DataError


def test_vc_matches_rc_closed_form(true_params, coeffs, const_profile):
    # constant current: vc(t) = i r1 (1 - exp(-t / (r1 c)))
    prof = const_profile(-2.0, 601, 1.0)
    tr = sim.simulate(true_params, coeffs, prof, z0=0.8)
    tau = true_params.r1 * true_params.c
    worst = 0.0
    for t in range(601):
        exact = -2.0 * true_params.r1 * (1.0 - math.exp(-t / tau))
        worst = max(worst, abs(tr.vc[t] - exact))
    assert worst <= 1e-6, f"RK4 vc deviates {worst:.2e} from closed form (> 1e-6)"


def test_soc_is_exact_coulomb_count(true_params, coeffs, const_profile):
    # constant current: z(t) = z0 + i t / (3600 q), and RK4's z increment
    # collapses to the midpoint rule, which is exact here. Both drains
    # end at z = 0.3 (a -2 A hour would sweep a full SoC unit, which
    # the simulator refuses).
    for i_amps, n in ((-2.0, 1801), (-1.0, 3601)):
        prof = const_profile(i_amps, n, 1.0)
        tr = sim.simulate(true_params, coeffs, prof, z0=0.8)
        for t in (600, n - 1):
            exact = 0.8 + (i_amps * t) / (3600.0 * 2.0)
            assert abs(tr.soc[t] - exact) <= 1e-12, (
                f"z({t}) at {i_amps} A = {tr.soc[t]!r} != {exact!r}"
            )
        assert abs(tr.soc[n - 1] - 0.3) <= 1e-12, (
            f"final z at {i_amps} A = {tr.soc[n - 1]!r} != 0.3"
        )


def test_soc_midpoint_oracle(true_params, coeffs):
    # dynamic profile: z[k] = z0 + midpoint-rule charge / (3600 q)
    prof = profiles.synth_dynamic_profile(duration_s=200.0, dt=1.0, seed=21,
                                          soc_drop=0.02)
    tr = sim.simulate(true_params, coeffs, prof, z0=0.6)
    mids = (prof.currents[:-1] + prof.currents[1:]) / 2.0
    z = 0.6 + np.concatenate([[0.0], np.cumsum(mids)]) / (3600.0 * 2.0)
    assert float(np.max(np.abs(tr.soc - z))) <= 1e-12, "z must follow midpoint rule"


def test_voltage_is_output_map(true_params, coeffs, small_trace):
    lam = ecm.lambda_from_params(true_params)
    v = ecm.g_output(
        ecm.EcmState(z=small_trace.soc, vc=small_trace.vc),
        small_trace.currents, lam, coeffs,
    )
    assert np.array_equal(v, small_trace.voltages), "voltages must equal g(x, i)"


def test_soc_bounds_abort(true_params, coeffs, const_profile):
    prof = const_profile(-4.0, 3601, 1.0)  # 4 A from z0=0.2 empties in ~360 s
    with pytest.raises(DataError) as err:
        sim.simulate(true_params, coeffs, prof, z0=0.2)
    assert "sample" in str(err.value), "abort must name the offending sample"


def test_initial_soc_validation(true_params, coeffs, const_profile):
    with pytest.raises(DataError):
        sim.simulate(true_params, coeffs, const_profile(), z0=1.2)


def test_noise_determinism_and_scope(small_trace):
    noisy1 = sim.add_gaussian_noise(small_trace, 0.01, seed=5)
    noisy2 = sim.add_gaussian_noise(small_trace, 0.01, seed=5)
    assert np.array_equal(noisy1.voltages, noisy2.voltages), "noise must be seeded"
    assert not np.array_equal(noisy1.voltages, small_trace.voltages)
    assert np.array_equal(noisy1.currents, small_trace.currents), (
        "noise must only touch voltage"
    )
    assert np.array_equal(noisy1.soc, small_trace.soc), "truth must stay exact"
    resid = noisy1.voltages - small_trace.voltages
    assert 0.005 <= float(np.std(resid)) <= 0.015, (
        f"noise std {np.std(resid):.4f} far from 0.01"
    )


def test_trace_csv_round_trip_hidden(tmp_path, small_trace):
    path = tmp_path / "trace.csv"
    sim.export_trace_csv(small_trace, path, include_hidden=True,
                         comments={"config_hash": "cafe"})
    back = sim.load_trace_csv(path)
    assert back.has_truth, "5-column file must load with truth"
    for name in ("currents", "voltages", "soc", "vc"):
        a = getattr(small_trace, name)
        b = getattr(back, name)
        scale = max(1.0, float(np.max(np.abs(a))))
        assert float(np.max(np.abs(a - b))) <= 1e-9 * scale, (
            f"{name} drifted more than 1e-9 through CSV"
        )
    assert "# config_hash=cafe" in path.read_text()


def test_trace_csv_round_trip_blind(tmp_path, small_trace):
    path = tmp_path / "trace.csv"
    sim.export_trace_csv(small_trace, path, include_hidden=False)
    back = sim.load_trace_csv(path)
    assert not back.has_truth, "measurement-only file must not carry truth"
    header = [
        ln for ln in path.read_text().splitlines() if not ln.startswith("#")
    ][0]
    assert header == "time_s,current_A,voltage_V", f"blind header: {header}"


def test_trace_csv_hidden_requires_truth(tmp_path, small_trace):
    blind = sim.SimTrace(
        dt=small_trace.dt,
        currents=small_trace.currents,
        voltages=small_trace.voltages,
    )
    with pytest.raises(DataError):
        sim.export_trace_csv(blind, tmp_path / "x.csv", include_hidden=True)


def test_trace_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time_s,amps,volts\n0,1,3\n")
    with pytest.raises(DataError):
        sim.load_trace_csv(path)


def test_trace_csv_nonuniform_dt(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time_s,current_A,voltage_V\n0,1,3\n1,1,3\n2.5,1,3\n")
    with pytest.raises(DataError):
        sim.load_trace_csv(path)


def test_trace_validation():
    with pytest.raises(ValueError):
        sim.SimTrace(dt=1.0, currents=np.zeros(3), voltages=np.zeros(4))
    with pytest.raises(ValueError):
        sim.SimTrace(dt=1.0, currents=np.zeros(3), voltages=np.zeros(3),
                     soc=np.zeros(2), vc=np.zeros(3))
