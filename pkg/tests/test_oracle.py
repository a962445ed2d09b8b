import itertools
from fractions import Fraction

import numpy as np
import pytest

from kirchhoff_nf.nf_coefficients import ACTIVE_KINDS, DEFAULT_TABLE
from kirchhoff_nf.oracle import (
    Monomial,
    PolynomialVectorField,
    SymbolicUniverse,
    classify_monomial,
    compare_fields,
    evaluate_on,
    expand_pushforward,
    expand_w5_direct,
    expand_x3_plus_direct,
    expand_x5_plus,
    verify_homological_equation,
)
from kirchhoff_nf.spectral_core import Lattice, random_cc_pair
from kirchhoff_nf.vector_fields import w5, x3_plus, x5_plus

ZERO = (Fraction(0), Fraction(0))


@pytest.fixture(scope="module")
def x5_two_spheres():
    return expand_x5_plus((1, 2))


def numeric_vs_symbolic(field, numeric_pair, symbolic):
    first, second = evaluate_on(symbolic, numeric_pair)
    worst, scale = 0.0, numeric_pair.norm_both() ** 5
    for comp, values in ((field.first, first), (field.second, second)):
        for k, c in comp.items():
            worst = max(worst, abs(c - values.get(k[0], 0j)))
    return worst / max(field.norm_both(), scale, 1e-300)


# --- expansions -----------------------------------------------------------------------

@pytest.mark.parametrize("modes", [(1,), (1, 2)])
def test_cubic_part_is_x3_plus(modes):
    assert compare_fields(expand_pushforward(modes, 3), expand_x3_plus_direct(modes)).empty


def test_zero_state_gives_zero_field(x5_two_spheres):
    zeros = {m: 0j for m in (1, -1, 2, -2)}
    first, second = x5_two_spheres.evaluate(zeros, zeros)
    assert all(v == 0 for v in first.values()) and all(v == 0 for v in second.values())


def test_second_stage_degree_five_is_w5():
    second = expand_pushforward((1, 2), 5, stage="second")
    assert compare_fields(second, expand_w5_direct((1, 2))).empty


@pytest.mark.parametrize("seed", range(3))
def test_evaluation_homomorphism(seed, x5_two_spheres):
    lat = Lattice.ball(1, 2)
    pair = random_cc_pair(lat, np.random.default_rng(seed), 0.3)
    assert numeric_vs_symbolic(x5_plus(pair), pair, x5_two_spheres) <= 1e-12
    assert numeric_vs_symbolic(w5(pair), pair, expand_w5_direct((1, 2))) <= 1e-12
    assert numeric_vs_symbolic(x3_plus(pair), pair, expand_x3_plus_direct((1, 2))) <= 1e-12


def test_w5_direct_single_sphere():
    field = expand_w5_direct((1,))
    assert len(field) > 0
    for comp in field.components:
        for mono, (re, im) in comp.items():
            assert {abs(m) for m in mono.modes()} == {1}
            assert mono.degree() == 5
            assert re == 0 and im != 0


def test_w5_direct_real_structure():
    lat = Lattice.ball(1, 2)
    pair = random_cc_pair(lat, np.random.default_rng(11), 0.5)
    first, second = evaluate_on(expand_w5_direct((1, 2)), pair)
    for k, value in first.items():
        assert second[-k] == pytest.approx(value.conjugate(), abs=1e-15)


def test_degrees_are_homogeneous(x5_two_spheres):
    assert x5_two_spheres.degrees() == {5}
    assert expand_x3_plus_direct((1, 2)).degrees() == {3}


# --- homological equation ---------------------------------------------------------------

@pytest.mark.parametrize("modes", [(1,), (1, 2)])
def test_homological_equation_holds_exactly(modes):
    rep = verify_homological_equation(modes)
    assert rep.passed
    assert rep.surviving > 0
    assert rep.nonresonant == []


def homological_divisor(kind: str, r_j: int, r_l: int, r_k: int) -> int:
    """Frequency mismatch of the monomials multiplied by ``kind(j, l, k)``.

    A u-sphere sum at radius r contributes +2r, a v-sphere sum -2r and a mixed
    sum 0; row-12 entries carry v_k in place of u_k, shifting by -2|k|.
    """
    pair_weight = {"A": (2, 2), "B": (2, 0), "C": (2, -2), "D": (0, -2), "F": (-2, -2)}[kind[0]]
    value = pair_weight[0] * r_j + pair_weight[1] * r_l
    return value - 2 * r_k if kind.endswith("12") else value


@pytest.mark.parametrize("kind", ACTIVE_KINDS)
def test_table_perturbation_detected_off_resonance(kind, x5_two_spheres):
    for r_j, r_l, r_k in itertools.product((1, 2), repeat=3):
        table = DEFAULT_TABLE.perturbed(kind, r_j**2, r_l**2, r_k**2, Fraction(1, 1000))
        rep = verify_homological_equation((1, 2), table, x5=x5_two_spheres)
        resonant = homological_divisor(kind, r_j, r_l, r_k) == 0
        assert rep.passed == resonant, (kind, r_j, r_l, r_k)


def test_classification_of_resonant_patterns():
    # u_1 u_{-1} v_1 v_{-1} u_2 into mode 2: sphere pattern only
    sphere = Monomial((("u", -1, 1), ("u", 1, 1), ("u", 2, 1), ("v", -1, 1), ("v", 1, 1)), 2)
    assert classify_monomial(sphere, 1) == ["sphere"]
    # on a single sphere the sphere and diagonal patterns coincide
    shared = Monomial((("u", -1, 1), ("u", 1, 2), ("v", -1, 1), ("v", 1, 1)), 1)
    assert classify_monomial(shared, 1) == ["sphere", "diagonal"]
    # u_1 u_{-1} u_1 u_{-1} v_2 into mode 2: sum pattern 1 + 1 = 2
    summed = Monomial((("u", -1, 2), ("u", 1, 2), ("v", 2, 1)), 2)
    assert classify_monomial(summed, 1) == ["sum"]
    off = Monomial((("u", 1, 5),), 1)
    assert classify_monomial(off, 1) == []


# --- field containers ---------------------------------------------------------------

def test_compare_identical_fields_is_empty(x5_two_spheres):
    assert compare_fields(x5_two_spheres, x5_two_spheres).empty
    assert len(x5_two_spheres - x5_two_spheres) == 0


def test_compare_against_single_monomial():
    mono = Monomial((("u", 1, 3),), 1)
    single = PolynomialVectorField(({mono: (Fraction(1), Fraction(2))}, {}))
    diff = compare_fields(PolynomialVectorField(), single)
    assert len(diff) == 1
    assert diff.differences[0] == (1, mono, ZERO, (Fraction(1), Fraction(2)))


def test_serialization_round_trip(x5_two_spheres):
    rng = np.random.default_rng(5)
    comps = ({}, {})
    for mono in itertools.islice(x5_two_spheres.components[0], 40):
        comps[int(rng.integers(2))][mono] = (Fraction(int(rng.integers(-50, 50)), int(rng.integers(1, 40))),
                                             Fraction(int(rng.integers(-50, 50)), int(rng.integers(1, 40))))
    field = PolynomialVectorField(comps)
    assert compare_fields(PolynomialVectorField.loads(field.dumps()), field).empty
    assert compare_fields(PolynomialVectorField.loads(x5_two_spheres.dumps()), x5_two_spheres).empty


# --- guards -------------------------------------------------------------------------------

def test_guards():
    with pytest.raises(ValueError):
        SymbolicUniverse((1, 2, 3, 4, 5))
    with pytest.raises(ValueError):
        SymbolicUniverse((0, 1))
    with pytest.raises(ValueError):
        expand_pushforward((1,), 7)
    with pytest.raises(ValueError):
        expand_pushforward((1,), 5, stage="third")
