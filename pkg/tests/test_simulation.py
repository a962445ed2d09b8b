import logging

import numpy as np
import pytest

from kirchhoff_nf.shell_dynamics import ShellSpectrum
from kirchhoff_nf.spectral_core import ConjugatePairState, Lattice, SpectralField, hamiltonian
from kirchhoff_nf.simulation import (
    CONJUGACY_FLOOR,
    FlowSpec,
    IntegrationError,
    conjugacy_experiment,
    csv_header,
    csv_row,
    diagnostics,
    energy_drift,
    energy_of,
    flow_spec,
    initial_pair,
    integrate,
    shell_invariant_drift,
    state_for_system,
    to_normalized,
)
from kirchhoff_nf.transforms import BallError
from kirchhoff_nf.vector_fields import d1

D1 = Lattice.ball(1, 3)


def linear_flow(lat):
    base = flow_spec("fg", lat)
    return FlowSpec("linear", d1, base.to_vector, base.from_vector, base.defect, base.repair)


def final_state(flow, state, dt, steps):
    *_, (_, _, last) = integrate(flow, state, dt, steps, record_every=steps)
    return last


def linear_error(pair, dt, total_time):
    steps = int(round(total_time / dt))
    got = final_state(linear_flow(pair.lattice), pair, dt, steps).first
    lat = pair.lattice
    exact = pair.first.coeffs * np.exp(-1j * lat.radius * total_time)
    return float(np.max(np.abs(got.coeffs - exact)))


# --- integrator ---------------------------------------------------------------------------

def test_linear_flow_is_exact_rotation():
    pair = initial_pair(D1, amplitude=1.0, seed=1)
    assert linear_error(pair, 1e-3, 1.0) <= 1e-12


def test_linear_flow_fourth_order():
    pair = initial_pair(D1, amplitude=1.0, seed=1)
    coarse, fine = linear_error(pair, 0.1, 2.0), linear_error(pair, 0.05, 2.0)
    assert 14.0 <= coarse / fine <= 17.0


def test_physical_flow_order_against_fine_reference():
    lat = Lattice.ball(1, 2)
    state = state_for_system("physical", initial_pair(lat, amplitude=0.05, seed=2))
    flow = flow_spec("physical", lat)
    total, dt = 2.0, 0.05
    reference = final_state(flow, state, dt / 8, int(round(8 * total / dt)))

    def err(step):
        got = final_state(flow, state, step, int(round(total / step)))
        return float(np.max(np.abs(got.position.coeffs - reference.position.coeffs)))

    ratio = err(dt) / err(dt / 2)
    assert 12.0 <= ratio <= 20.0


def test_records_and_validation():
    pair = initial_pair(D1, amplitude=0.01, seed=0)
    flow = flow_spec("fg", D1)
    steps = [n for n, _, _ in integrate(flow, pair, 1e-3, 10, record_every=4)]
    assert steps == [0, 4, 8, 10]
    with pytest.raises(ValueError):
        list(integrate(flow, pair, 0.0, 10))
    with pytest.raises(ValueError):
        flow_spec("heat", D1)


def test_symmetry_drift_is_repaired_and_logged(caplog):
    pair = initial_pair(D1, amplitude=0.5, seed=3)
    base = flow_spec("fg", D1)
    skewed = FlowSpec("skewed", lambda p: ConjugatePairState(p.first * 1j, p.second * 0.0),
                      base.to_vector, base.from_vector, base.defect, base.repair)
    with caplog.at_level(logging.INFO, logger="kirchhoff_nf.simulation"):
        last = final_state(skewed, pair, 1e-2, 3)
    assert last.cc_defect() == 0.0
    assert any("re-symmetrizing" in rec.message for rec in caplog.records)


def test_leaving_the_ball_reports_step():
    pair = initial_pair(D1, amplitude=0.06, seed=4)
    with pytest.raises(IntegrationError) as info:
        list(integrate(flow_spec("normalized", D1), pair, 1e-3, 5))
    assert info.value.step == 1
    assert isinstance(info.value.cause, BallError)


def test_support_is_preserved_along_flows():
    lat = Lattice.ball(2, 2.3)
    w = SpectralField.from_dict(lat, {(1, 0): 0.01, (0, 2): 0.004j, (-1, 1): 0.003})
    pair = ConjugatePairState.from_first(w)
    holes = w.coeffs == 0
    holes = holes & holes[lat.neg]
    for system in ("fg", "etapsi", "normalized"):
        last = final_state(flow_spec(system, lat), pair, 1e-2, 20)
        assert not np.any(last.first.coeffs[holes]), system


# --- conservation -------------------------------------------------------------------------

@pytest.mark.parametrize("system", ["physical", "etapsi", "fg"])
def test_energy_drift_small_data(system):
    pair = initial_pair(D1, amplitude=0.01, seed=5)
    assert energy_drift(system, pair, 1e-3, 1000) <= 1e-10


def test_shell_invariant_drift():
    spec = ShellSpectrum((1, 4, 9), [0.05, 0.04, 0.03], [0.04, 0.02j, -0.02])
    assert shell_invariant_drift(spec, 1e-2, 200) <= 1e-12


# --- conjugacy ------------------------------------------------------------------------------

def test_conjugacy_zero_amplitude_is_exact():
    lat = Lattice.spheres(1, [1, 4])
    rep = conjugacy_experiment(ConjugatePairState.zeros(lat), 1e-2, 50, record_every=10)
    assert rep.max_discrepancy == 0.0
    assert rep.passed
    assert rep.threshold == pytest.approx(rep.constant * (1e-8 + CONJUGACY_FLOOR))


def test_conjugacy_short_run():
    lat = Lattice.spheres(1, [1, 4])
    rep = conjugacy_experiment(initial_pair(lat, amplitude=1e-2, seed=4), 1e-2, 100, record_every=25)
    assert rep.times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert rep.passed


def test_conjugacy_requires_half_ball():
    with pytest.raises(BallError):
        conjugacy_experiment(initial_pair(D1, amplitude=0.04, seed=0), 1e-2, 10)


# --- states and diagnostics ---------------------------------------------------------------

def test_state_conversions_round_trip():
    pair = initial_pair(D1, amplitude=0.01, seed=6)
    physical = state_for_system("physical", pair)
    assert physical.reality_defect() <= 1e-16
    assert state_for_system("fg", pair) is pair
    back = to_normalized("physical", physical)
    assert energy_of("normalized", back) == pytest.approx(hamiltonian("physical", physical), rel=1e-12)
    with pytest.raises(ValueError):
        to_normalized("shell", pair)


def test_initial_pair_from_coefficients():
    pair = initial_pair(D1, {(2,): 0.1 + 0.2j})
    assert pair.first[(2,)] == 0.1 + 0.2j
    assert pair.second[(-2,)] == 0.1 - 0.2j
    assert initial_pair(D1, amplitude=0.0).norm_both() == 0.0
    a, b = initial_pair(D1, seed=9), initial_pair(D1, seed=9)
    assert np.array_equal(a.to_vector(), b.to_vector())
    assert a.norm(D1.m1) == pytest.approx(1e-2)


def test_diagnostics_on_zero_state():
    rec = diagnostics("normalized", 0.0, ConjugatePairState.zeros(D1), [0.5, 1.0])
    assert rec.norms == [0.0, 0.0] and rec.energy == 0.0
    assert rec.z6 == [0.0, 0.0] and rec.z_ge8 == 0.0
    assert csv_header([0.5, 1.0]) == ["t", "norm_s0.5", "norm_s1", "H", "z6_s0.5", "z6_s1", "z_ge8"]
    assert csv_row(rec) == ["0"] * 7


def test_diagnostics_z6_vanishes_at_half_along_flow():
    pair = initial_pair(D1, amplitude=0.01, seed=7)
    for _, t, state in integrate(flow_spec("normalized", D1), pair, 1e-2, 20, record_every=5):
        rec = diagnostics("normalized", t, state, [0.5, 1.0])
        assert abs(rec.z6[0]) <= 1e-13
