import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kirchhoff_nf.spectral_core import (
    ConjugatePairState,
    Lattice,
    SpectralField,
    lambda_pow,
    pairing,
    random_cc_pair,
    random_field,
    random_real_field,
    sobolev_norm,
)
from kirchhoff_nf.transforms import (
    BallError,
    ConvergenceError,
    bilinear_apply,
    bilinear_kernel_matrices,
    compose_full,
    compose_full_inverse,
    k_apply,
    m_apply,
    neumann_inverse_apply,
    neumann_series,
    neumann_tail,
    phi1_forward,
    phi1_inverse,
    phi2_forward,
    phi2_inverse,
    phi3_forward,
    phi3_inverse,
    phi4_differential_apply,
    phi4_forward,
    phi4_inverse,
    phi5_differential_apply,
    phi5_forward,
    phi5_inverse,
    phi_next,
    phi_next_inverse,
    quartic_k_apply,
    quartic_m_apply,
)
from kirchhoff_nf.vector_fields import d1

from strategies import cc_pairs, lattices, seeds

D1 = Lattice.ball(1, 4)


def rel(a: ConjugatePairState, b: ConjugatePairState) -> float:
    return (a - b).norm_both() / max(b.norm_both(), 1e-300)


def pair_in(lat, seed, norm, s=None):
    return random_cc_pair(lat, np.random.default_rng(seed), norm, s=s)


# --- linear maps ----------------------------------------------------------------

def test_phi1_single_mode():
    q = SpectralField.from_dict(D1, {(4,): 1.0})
    u, v = phi1_forward(q, SpectralField.zeros(D1))
    assert u[(4,)] == pytest.approx(0.5, abs=1e-16)
    assert v.max_abs() == 0.0


@given(lat=lattices, seed=seeds)
def test_phi1_and_phi2_round_trips(lat, seed):
    rng = np.random.default_rng(seed)
    q, p = random_real_field(lat, rng, 1.0), random_real_field(lat, rng, 1.0)
    u, v = phi1_forward(q, p)
    back = phi1_inverse(u, v)
    assert (back.position - q).max_abs() <= 1e-14
    assert (back.velocity - p).max_abs() <= 1e-14
    assert phi1_forward(q, p).reality_defect() <= 1e-15
    f, g = phi2_inverse(q, p)
    assert ConjugatePairState(f, g).cc_defect() <= 1e-15
    again = phi2_forward(f, g)
    assert (again.position - q).max_abs() <= 1e-15
    assert (again.velocity - p).max_abs() <= 1e-15


def test_phi2_equal_components_give_zero_momentum():
    f = random_field(D1, np.random.default_rng(0), 1.0)
    assert phi2_forward(f, f).velocity.max_abs() == 0.0


# --- phi3 --------------------------------------------------------------------------

def test_phi3_zero_is_fixed():
    zero = ConjugatePairState.zeros(D1)
    assert phi3_forward(zero).norm_both() == 0.0


@given(pair=cc_pairs(max_norm=1.0, s=0.5))
def test_phi3_round_trip(pair):
    assert rel(phi3_inverse(phi3_forward(pair)), pair) <= 1e-12
    assert rel(phi3_forward(phi3_inverse(pair)), pair) <= 1e-12
    assert phi3_forward(pair).cc_defect() <= 1e-14


@given(pair=cc_pairs(max_norm=0.1, s=0.5), s=st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_phi3_small_ball_growth(pair, s):
    assert phi3_forward(pair).norm(s) <= 2 * pair.norm(s)


# --- bilinear sphere operators --------------------------------------------------

def _unit_setup():
    lat = Lattice.ball(1, 2)
    u = SpectralField.from_dict(lat, {(1,): 1.0})
    v = SpectralField.from_dict(lat, {(-1,): 1.0})
    h = SpectralField.from_dict(lat, {(2,): 1.0})
    return u, v, h


def test_a12_single_term_kernel():
    u, v, h = _unit_setup()
    out = bilinear_apply("A12", u, v, h)
    assert out[(2,)] == pytest.approx(-1 / 8, abs=1e-16)


def test_c12_single_term_kernel():
    u, v, h = _unit_setup()
    out = bilinear_apply("C12", u, v, h)
    assert out[(2,)] == pytest.approx(1 / 24, abs=1e-16)


def test_a12_skips_equal_radius():
    lat = Lattice.ball(1, 2)
    u = SpectralField.from_dict(lat, {(2,): 1.0})
    v = SpectralField.from_dict(lat, {(-2,): 1.0})
    h = SpectralField.from_dict(lat, {(2,): 1.0, (-2,): 3.0})
    assert bilinear_apply("A12", u, v, h).max_abs() == 0.0


def test_kernel_matrices_reference():
    ka, kc = bilinear_kernel_matrices([1, 4])
    np.testing.assert_allclose(ka, [[0.0, -1 / 8], [4 / 8, 0.0]], atol=1e-16)
    np.testing.assert_allclose(kc, [[1 / 16, 1 / 24], [4 / 24, 4 / 32]], atol=1e-16)


@pytest.mark.parametrize("kind", ["A12", "C12"])
@given(lat=lattices, seed=seeds, s=st.sampled_from([0.5, 1.0, 2.5]))
def test_bilinear_symmetries(kind, lat, seed, s):
    rng = np.random.default_rng(seed)
    u, v, y, h = (random_field(lat, rng, 1.0) for _ in range(4))
    left = pairing(bilinear_apply(kind, u, v, y), h)
    right = pairing(y, bilinear_apply(kind, u, v, h))
    assert abs(left - right) <= 1e-13 * (1 + abs(left))
    conj = bilinear_apply(kind, u, v, h).bar()
    assert (conj - bilinear_apply(kind, u.bar(), v.bar(), h.bar())).max_abs() <= 1e-14
    commuted = bilinear_apply(kind, u, v, lambda_pow(h, s))
    assert (commuted - lambda_pow(bilinear_apply(kind, u, v, h), s)).max_abs() <= 1e-12


@given(lat=lattices, seed=seeds, s=st.sampled_from([0.0, 1.0, 2.0]))
def test_bilinear_norm_constants(lat, seed, s):
    rng = np.random.default_rng(seed)
    u, v, h = (random_field(lat, rng, 1.0) for _ in range(3))
    m0 = lat.m0
    a12 = sobolev_norm(bilinear_apply("A12", u, v, h), s)
    assert a12 <= 3 / 8 * sobolev_norm(u, m0) * sobolev_norm(v, m0) * sobolev_norm(h, s) * (1 + 1e-12)
    c12 = sobolev_norm(bilinear_apply("C12", u, v, h), s)
    assert c12 <= sobolev_norm(u, 1) * sobolev_norm(v, 1) * sobolev_norm(h, s) / 16 * (1 + 1e-12)


# --- phi4 -----------------------------------------------------------------------------

@given(lat=lattices, seed=seeds, s=st.sampled_from([0.0, 1.0, 3.0]))
def test_m_bound_and_real_structure(lat, seed, s):
    state = pair_in(lat, seed, 0.2, s=lat.m0)
    tangent = pair_in(lat, seed + 1, 1.0)
    out = m_apply(state, tangent)
    assert out.cc_defect() <= 1e-15
    assert out.norm(s) <= 7 / 16 * state.norm(lat.m0) ** 2 * tangent.norm(s) * (1 + 1e-12)


@given(lat=lattices, seed=seeds, s=st.sampled_from([0.0, 1.0, 3.0]))
def test_k_bound(lat, seed, s):
    m0 = lat.m0
    state = pair_in(lat, seed, 0.2, s=m0)
    tangent = pair_in(lat, seed + 1, 1.0)
    bound = (7 / 16 * state.norm(m0) ** 2 * tangent.norm(s)
             + 7 / 8 * state.norm(m0) * state.norm(s) * tangent.norm(m0))
    assert k_apply(state, tangent).norm(s) <= bound * (1 + 1e-12)


def test_m_vanishes_at_zero():
    zero = ConjugatePairState.zeros(D1)
    tangent = pair_in(D1, 3, 1.0)
    assert m_apply(zero, tangent).norm_both() == 0.0
    assert (phi4_differential_apply(zero, tangent) - tangent).norm_both() == 0.0


@given(lat=lattices, seed=seeds)
def test_m_anticommutes_with_linear_part(lat, seed):
    state = pair_in(lat, seed, 0.3)
    tangent = pair_in(lat, seed + 1, 1.0)
    total = m_apply(state, d1(tangent)) + d1(m_apply(state, tangent))
    assert total.norm_both() <= 1e-14 * max(1.0, d1(tangent).norm_both())


def _fd_error(forward, differential, lat, seed, norm):
    state = pair_in(lat, seed, norm)
    tangent = pair_in(lat, seed + 1, 1.0)
    eps = 1e-6
    fd = (forward(state + tangent * eps) - forward(state - tangent * eps)) * (0.5 / eps)
    return rel(fd, differential(state, tangent))


@given(lat=lattices, seed=seeds)
def test_phi4_differential_matches_finite_difference(lat, seed):
    assert _fd_error(phi4_forward, phi4_differential_apply, lat, seed, 0.3) <= 1e-8


@given(lat=lattices, seed=seeds)
def test_phi5_differential_matches_finite_difference(lat, seed):
    assert _fd_error(phi5_forward, phi5_differential_apply, lat, seed, 0.05) <= 1e-8


@given(lat=lattices, seed=seeds, norm=st.floats(1e-3, 0.1))
def test_phi4_round_trip(lat, seed, norm):
    pair = pair_in(lat, seed, norm, s=lat.m0)
    assert rel(phi4_inverse(phi4_forward(pair)), pair) <= 1e-12
    assert rel(phi4_forward(phi4_inverse(pair)), pair) <= 1e-12


@given(lat=lattices, seed=seeds, norm=st.floats(1e-3, 0.1), s=st.sampled_from(["m0", 2.0, 3.0]))
def test_phi4_inverse_growth(lat, seed, norm, s):
    s = lat.m0 if s == "m0" else s
    pair = pair_in(lat, seed, norm, s=lat.m0)
    assert phi4_inverse(pair).norm(s) <= 2 * pair.norm(s)


def test_phi4_inverse_outside_ball():
    with pytest.raises(BallError):
        phi4_inverse(pair_in(D1, 0, 0.3, s=D1.m0))


# --- Neumann series -----------------------------------------------------------------

def test_neumann_zero_operator():
    rhs = pair_in(D1, 1, 1.0)
    assert rel(neumann_inverse_apply(lambda x: x * 0.0, rhs), rhs) == 0.0


@given(lat=lattices, seed=seeds)
def test_neumann_residual_and_tail(lat, seed):
    state = pair_in(lat, seed, 0.3, s=lat.m0)
    rhs = pair_in(lat, seed + 1, 1.0)
    apply_k = lambda x: k_apply(state, x)
    sol = neumann_inverse_apply(apply_k, rhs, state.norm(lat.m0))
    assert rel(sol + apply_k(sol), rhs) <= 1e-12
    tail = neumann_tail(apply_k, rhs)
    assert rel(rhs - apply_k(rhs) + tail, sol) <= 1e-14
    second = apply_k(apply_k(rhs))
    assert rel(tail, second) <= 2 * state.norm(lat.m0) ** 2 + 1e-12


def test_neumann_guards():
    rhs = pair_in(D1, 1, 1.0)
    with pytest.raises(BallError):
        neumann_inverse_apply(lambda x: x * 0.0, rhs, m_norm_bound=0.5)
    with pytest.raises(ConvergenceError):
        neumann_series(lambda x: x * 1.0, rhs)


# --- second step and compositions ---------------------------------------------------

def test_second_step_maps_vanish_at_zero():
    zero = ConjugatePairState.zeros(D1)
    assert phi5_forward(zero).norm_both() == 0.0
    assert phi5_inverse(zero).norm_both() == 0.0
    assert phi_next(zero).norm_both() == 0.0
    assert quartic_k_apply(zero, pair_in(D1, 2, 1.0)).norm_both() == 0.0


def _quartic_constant(lat, seed, s):
    state = pair_in(lat, seed, 0.05)
    tangent = pair_in(lat, seed + 1, 1.0)
    return quartic_m_apply(state, tangent).norm(s) / (state.norm(lat.m1) ** 4 * tangent.norm(s))


def test_quartic_constant_is_stable_across_seeds():
    for lat in (D1, Lattice.ball(2, 2.3)):
        values = [_quartic_constant(lat, seed, 1.0) for seed in range(30)]
        assert all(math.isfinite(c) for c in values)
        assert max(values) <= 1.0


@given(lat=lattices, seed=seeds, norm=st.floats(1e-3, 0.04))
def test_phi5_round_trip_and_structure(lat, seed, norm):
    pair = pair_in(lat, seed, norm)
    assert rel(phi5_inverse(phi5_forward(pair)), pair) <= 1e-12
    assert phi5_forward(pair).cc_defect() <= 1e-16
    assert phi_next(pair).cc_defect() <= 1e-15


def test_phi5_inverse_outside_ball():
    with pytest.raises(BallError):
        phi5_inverse(pair_in(D1, 0, 0.2), delta=0.05)


@given(lat=lattices, seed=seeds, norm=st.floats(1e-3, 0.02))
def test_close_to_identity(lat, seed, norm):
    pair = pair_in(lat, seed, norm)
    for s in (0.0, 1.0, 2.0):
        gap = (phi_next(pair) - pair).norm(s)
        assert gap <= 2.0 * pair.norm(lat.m1) ** 2 * pair.norm(s)


@given(lat=lattices, seed=seeds, norm=st.floats(1e-3, 0.02))
def test_full_round_trip(lat, seed, norm):
    pair = pair_in(lat, seed, norm)
    physical = compose_full(pair)
    assert physical.reality_defect() <= 1e-15
    assert rel(compose_full_inverse(physical), pair) <= 1e-10
    assert rel(phi_next_inverse(phi_next(pair)), pair) <= 1e-10


def test_composition_outside_ball():
    with pytest.raises(BallError):
        compose_full(pair_in(D1, 0, 0.2))
