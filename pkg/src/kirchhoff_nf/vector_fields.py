"""Right-hand sides of every system in the chain and their graded pieces.

All nonlinear terms are sphere-sum multipliers: the value at mode ``k`` is a
scalar depending on ``|k|`` and on sums ``agg(a, b)_r = sum_{|j|=r} a_j b_{-j}``
times a coefficient at ``+-k``.  Triple sums over ``(j, l, k)`` therefore
reduce to contractions of class tensors ``G[r, s, t]`` with two sphere sums.

Second components are produced from first components by the real structure:
every field here has purely imaginary coefficients, so
``F_2(u, v) = -F_1(v, u)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .nf_coefficients import (
    DEFAULT_TABLE,
    NormalFormCoefficientTable,
    RadiusArithmetic,
    sum_resonant,
)
from .spectral_core import (
    ConjugatePairState,
    Lattice,
    RealPairState,
    SpectralField,
    lambda_pow,
    pairing,
    p_functional,
    phi_inverse_eval,
    q_functional,
)
from .transforms import (
    DEFAULT_DELTA,
    BallError,
    k_apply,
    m_apply,
    neumann_series,
    phi4_forward,
    phi5_forward,
    quartic_k_apply,
    quartic_m_apply,
)

I = 1j


# ---------------------------------------------------------------------------
# decomposition container


@dataclass
class FieldDecomposition:
    """Labelled pieces of a right-hand side together with the exact total."""

    total: ConjugatePairState
    parts: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)

    def __getitem__(self, label: str) -> ConjugatePairState:
        return self.parts[label]

    def sum_of_parts(self) -> ConjugatePairState:
        acc = ConjugatePairState.zeros(self.total.lattice)
        for part in self.parts.values():
            acc = acc + part
        return acc

    def residual(self) -> float:
        """``||total - sum(parts)|| / ||total||`` (zero when the total is zero)."""
        scale = self.total.norm_both()
        err = (self.total - self.sum_of_parts()).norm_both()
        return err / scale if scale else err


def _mirror(first: Callable[[SpectralField, SpectralField], SpectralField],
            pair: ConjugatePairState) -> ConjugatePairState:
    u, v = pair
    return ConjugatePairState(first(u, v), -first(v, u))


def _lam_sq_pair(a: SpectralField, b: SpectralField) -> complex:
    """``<Lambda a, Lambda b>``."""
    lat = a.lattice
    return complex(np.dot(a.coeffs * lat.radius**2, b.coeffs[lat.neg]))


# ---------------------------------------------------------------------------
# physical, (f, g) and (eta, psi) systems


def rhs_physical(state: RealPairState) -> RealPairState:
    u, v = state
    grad = _lam_sq_pair(u, u)
    return RealPairState(v, -lambda_pow(u, 2) * (1.0 + grad))


def rhs_fg(pair: ConjugatePairState) -> ConjugatePairState:
    f, g = pair
    s = f + g
    ls = lambda_pow(s, 1)
    c = 0.25 * pairing(ls, s)
    return ConjugatePairState(lambda_pow(f, 1) * (-I) - ls * (I * c),
                              lambda_pow(g, 1) * I + ls * (I * c))


def d1(pair: ConjugatePairState) -> ConjugatePairState:
    """Linear part ``(-i Lambda w, i Lambda z)``."""
    w, z = pair
    return ConjugatePairState(lambda_pow(w, 1) * (-I), lambda_pow(z, 1) * I)


def _b3_scalar(pair: ConjugatePairState) -> complex:
    w, z = pair
    return _lam_sq_pair(z, z) - _lam_sq_pair(w, w)


def b3(pair: ConjugatePairState) -> ConjugatePairState:
    w, z = pair
    return ConjugatePairState(z, w) * (0.25 * I * _b3_scalar(pair))


def b3_prime(pair: ConjugatePairState, tangent: ConjugatePairState) -> ConjugatePairState:
    """Differential of :func:`b3` at ``pair`` in direction ``tangent``."""
    w, z = pair
    a, b = tangent
    dscal = _lam_sq_pair(z, b) - _lam_sq_pair(w, a)
    return (ConjugatePairState(z, w) * (0.5 * I * dscal)
            + ConjugatePairState(b, a) * (0.25 * I * _b3_scalar(pair)))


def decompose_eta_psi(pair: ConjugatePairState) -> FieldDecomposition:
    """Split into the linear part, its scalar correction, the cubic and the higher off-diagonal term."""
    p = p_functional(pair)
    root = math.sqrt(1.0 + 2.0 * p)
    lin = d1(pair)
    cubic = b3(pair)
    parts = {
        "D1": lin,
        "Dge3": lin * (root - 1.0),
        "B3": cubic,
        "Rge5": cubic * (-2.0 * p / (1.0 + 2.0 * p)),
    }
    total = lin * root + cubic * (1.0 / (1.0 + 2.0 * p))
    return FieldDecomposition(total, parts, {"P": p})


def rhs_eta_psi(pair: ConjugatePairState) -> ConjugatePairState:
    p = p_functional(pair)
    return d1(pair) * math.sqrt(1.0 + 2.0 * p) + b3(pair) * (1.0 / (1.0 + 2.0 * p))


# ---------------------------------------------------------------------------
# first normal form step


def x3_plus(pair: ConjugatePairState) -> ConjugatePairState:
    lat = pair.lattice
    r2 = lat.class_radius**2

    def first(w, z):
        return z.scale_classes(-0.25 * I * r2 * w.agg(w))

    return _mirror(first, pair)


def calP(pair: ConjugatePairState) -> float:
    """Scalar ``sqrt(1 + 2 P(phi4(w, z))) - 1``."""
    return math.sqrt(1.0 + 2.0 * p_functional(phi4_forward(pair))) - 1.0


def x_plus(pair: ConjugatePairState) -> ConjugatePairState:
    """Exact ``(I + K)^{-1} X(phi4(w, z))``."""
    m0 = pair.lattice.m0
    if pair.norm(m0) >= 0.5:
        raise BallError(f"first-step field needs ||w||_m0 < 1/2, got {pair.norm(m0):.4g}")
    rhs = rhs_eta_psi(phi4_forward(pair))
    return neumann_series(lambda t: k_apply(pair, t), rhs)[0]


# class tensors -------------------------------------------------------------


def class_tensor(lat: Lattice, name: str, fn) -> np.ndarray:
    """Cached ``G[r, s, t] = fn(n_r, n_s, n_t, arithmetic)`` over the radius classes."""
    key = ("class_tensor", name)
    g = lat.cache.get(key)
    if g is None:
        R = RadiusArithmetic(False)
        sq = [int(n) for n in lat.class_sq]
        n = len(sq)
        g = np.zeros((n, n, n), dtype=complex)
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    g[a, b, c] = fn(sq[a], sq[b], sq[c], R)
        g.setflags(write=False)
        lat.cache[key] = g
    return g


def _r(n):
    return math.sqrt(n)


def _y4_11(nj, nl, nk, R):
    rj, rl, rk = _r(nj), _r(nl), _r(nk)
    return -I / 32 * rj**2 * rl**2 / (rj + rk)


def _y4_11_sym(nj, nl, nk, R):
    rj, rl, rk = _r(nj), _r(nl), _r(nk)
    return -I / 64 * (rj**2 * rl**2 / (rj + rk) + rj**2 * rl**2 / (rl + rk))


def _y2_11(nj, nl, nk, R):
    rj, rl, rk = _r(nj), _r(nl), _r(nk)
    bracket = (-(R.inv_diff(nj, nk) if nl == nk else 0.0)
               + 1 / (rj + rk) - R.inv_diff(nl, nk))
    return I / 32 * rj**2 * rl**2 * bracket


def _y0_11(nj, nl, nk, R):
    rj, rl, rk = _r(nj), _r(nl), _r(nk)
    bracket = -(1 / (rj + rk) if nl == nk else 0.0) + R.inv_diff(nj, nk)
    return I / 32 * rj**2 * rl**2 * bracket


def _y0_11_sym(nj, nl, nk, R):
    rj, rl = _r(nj), _r(nl)
    bracket = (-(int(nl == nk) + int(nj == nk)) / (rj + rl)
               + R.inv_diff(nj, nk) + R.inv_diff(nl, nk))
    return I / 64 * rj**2 * rl**2 * bracket


def _y4_12(nj, nl, nk, R):
    return 3 * I / 16 * nj * _r(nl)


def _y4_12_sym(nj, nl, nk, R):
    rj, rl = _r(nj), _r(nl)
    return 3 * I / 32 * rj * rl * (rj + rl)


def _y3_12(nj, nl, nk, R):
    rj, rl = _r(nj), _r(nl)
    bracket = ((rl * R.inv_diff(nl, nk) if nl == nj else 0.0) + 6
               + rl / (rl + rj) + rl * R.inv_diff(nl, nj))
    return I / 16 * rj**2 * rl * bracket


def _y2_12(nj, nl, nk, R):
    rj, rl = _r(nj), _r(nl)
    return 3 * I / 16 * rj * rl * (rj - rl)


def _y1_12(nj, nl, nk, R):
    rj, rl, rk = _r(nj), _r(nl), _r(nk)
    bracket = (-(rj / (rj + rk) if nj == nl else 0.0) - 6
               + rj * R.inv_diff(nl, nj) - rj / (rl + rj))
    return I / 16 * rj * rl**2 * bracket


def _y0_12(nj, nl, nk, R):
    return -3 * I / 16 * nj * _r(nl)


def _y0_12_sym(nj, nl, nk, R):
    rj, rl = _r(nj), _r(nl)
    return -3 * I / 32 * rj * rl * (rj + rl)


# label -> (kernel, first sphere sum, second sphere sum, output slot, symmetrized kernel)
Y_TERMS = {
    "Y4_11": (_y4_11, "ww", "ww", "w", _y4_11_sym),
    "Y2_11": (_y2_11, "ww", "zz", "w", None),
    "Y0_11": (_y0_11, "zz", "zz", "w", _y0_11_sym),
    "Y4_12": (_y4_12, "ww", "ww", "z", _y4_12_sym),
    "Y3_12": (_y3_12, "ww", "wz", "z", None),
    "Y2_12": (_y2_12, "ww", "zz", "z", None),
    "Y1_12": (_y1_12, "wz", "zz", "z", None),
    "Y0_12": (_y0_12, "zz", "zz", "z", _y0_12_sym),
}


def _sphere_sums(a: SpectralField, b: SpectralField) -> dict:
    return {"ww": a.agg(a), "wz": a.agg(b), "zz": b.agg(b)}


def _apply_kernel(lat: Lattice, g: np.ndarray, x: np.ndarray, y: np.ndarray,
                  out: SpectralField) -> SpectralField:
    return out.scale_classes(np.einsum("r,s,rst->t", x, y, g))


def y_term(kind: str, pair: ConjugatePairState, symmetrized: bool = False) -> SpectralField:
    """First component of one of the eight quintic Y-terms."""
    try:
        fn, p1, p2, slot, sym = Y_TERMS[kind]
    except KeyError:
        raise ValueError(f"unknown Y-term {kind!r}") from None
    if symmetrized:
        if sym is None:
            raise ValueError(f"{kind} has no symmetrized form")
        fn, name = sym, kind + "_sym"
    else:
        name = kind
    w, z = pair
    lat = pair.lattice
    s = _sphere_sums(w, z)
    g = class_tensor(lat, name, fn)
    return _apply_kernel(lat, g, s[p1], s[p2], w if slot == "w" else z)


def _x5_first(w: SpectralField, z: SpectralField) -> SpectralField:
    pair = ConjugatePairState(w, z)
    acc = SpectralField.zeros(w.lattice)
    for kind in Y_TERMS:
        acc = acc + y_term(kind, pair)
    return acc


def x5_plus(pair: ConjugatePairState, method: str = "y_terms") -> ConjugatePairState:
    """Quintic part of the once-normalized field.

    ``y_terms`` sums the eight Y-terms; ``assembly`` uses
    ``-K X3+ - 3 Q B3 + B3'[M(w,z)(w,z)]``.
    """
    if method == "y_terms":
        return _mirror(_x5_first, pair)
    if method == "assembly":
        q = q_functional(pair)
        return (-k_apply(pair, x3_plus(pair)) - b3(pair) * (3.0 * q)
                + b3_prime(pair, m_apply(pair, pair)))
    raise ValueError(f"unknown method {method!r}")


def x_plus_full(pair: ConjugatePairState) -> FieldDecomposition:
    total = x_plus(pair)
    return _graded(total, pair, calP(pair), x5_plus(pair), "X5p", "Xge7p")


def _graded(total, pair, scalar_p, quintic, q_label, rest_label) -> FieldDecomposition:
    lin, cub = d1(pair), x3_plus(pair)
    parts = {"D1": lin, "X3p": cub, "PD1": lin * scalar_p, "PX3p": cub * scalar_p,
             q_label: quintic}
    low = (lin + cub) * (1.0 + scalar_p) + quintic
    parts[rest_label] = total - low
    return FieldDecomposition(total, parts, {"scalarP": scalar_p})


def x_geq7_plus(pair: ConjugatePairState) -> ConjugatePairState:
    return x_plus_full(pair)["Xge7p"]


# ---------------------------------------------------------------------------
# second normal form step


def _t1(nj, nl, nk, R):
    if nj != nl:
        return 0.0
    rj, rk = _r(nj), _r(nk)
    return I / 32 * nj * nl * (1 / (rj + rk) - R.inv_diff(nl, nk))


def _t2(nj, nl, nk, R):
    if not sum_resonant(nk, nj, nl):
        return 0.0
    return 3 * I / 32 * _r(nj) * _r(nl) * _r(nk)


def _t3(nj, nl, nk, R):
    if nj != nk:
        return 0.0
    rj, rl = _r(nj), _r(nl)
    return I / 16 * nj * rl * (6 + rl / (rl + rj) + rl * R.inv_diff(nl, nj))


def _t4(nj, nl, nk, R):
    if not sum_resonant(nj, nk, nl):
        return 0.0
    return 3 * I / 16 * _r(nj) * _r(nl) * _r(nk)


# label -> (kernel, first sphere sum, second sphere sum, output slot)
W5_TERMS = {
    "sphere": (_t1, "ww", "zz", "w"),
    "sum": (_t2, "ww", "ww", "z"),
    "diagonal": (_t3, "ww", "wz", "z"),
    "difference": (_t4, "ww", "zz", "z"),
}


def w5_term(label: str, pair: ConjugatePairState) -> SpectralField:
    fn, p1, p2, slot = W5_TERMS[label]
    w, z = pair
    s = _sphere_sums(w, z)
    g = class_tensor(pair.lattice, "W5_" + label, fn)
    return _apply_kernel(pair.lattice, g, s[p1], s[p2], w if slot == "w" else z)


def _w5_first(u: SpectralField, v: SpectralField) -> SpectralField:
    pair = ConjugatePairState(u, v)
    acc = SpectralField.zeros(u.lattice)
    for label in W5_TERMS:
        acc = acc + w5_term(label, pair)
    return acc


def w5(pair: ConjugatePairState, method: str = "resonant",
       table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    """Quintic part of the twice-normalized field.

    ``resonant`` evaluates the four surviving resonant sums; ``homological``
    evaluates ``X5+ + D1(M(u,v)(u,v)) - K(u,v) D1(u,v)`` with the given table.
    """
    if method == "resonant":
        return _mirror(_w5_first, pair)
    if method == "homological":
        return (x5_plus(pair) + d1(quartic_m_apply(pair, pair, table))
                - quartic_k_apply(pair, d1(pair), table))
    raise ValueError(f"unknown method {method!r}")


def _check_ball(pair: ConjugatePairState, delta: float) -> None:
    m1 = pair.lattice.m1
    if pair.norm(m1) > delta:
        raise BallError(f"normalized field needs ||u||_m1 <= {delta}, got {pair.norm(m1):.4g}")


def w_total(pair: ConjugatePairState, delta: float = DEFAULT_DELTA,
            table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    """Exact ``(I + K(u,v))^{-1} X+(phi5(u, v))``."""
    _check_ball(pair, delta)
    rhs = x_plus(phi5_forward(pair, table))
    return neumann_series(lambda t: quartic_k_apply(pair, t, table), rhs)[0]


def w_full(pair: ConjugatePairState, delta: float = DEFAULT_DELTA,
           table: NormalFormCoefficientTable = DEFAULT_TABLE) -> FieldDecomposition:
    total = w_total(pair, delta, table)
    return _graded(total, pair, calP(phi5_forward(pair, table)), w5(pair), "W5", "Wge7")


def w_truncated(pair: ConjugatePairState, delta: float = DEFAULT_DELTA,
                table: NormalFormCoefficientTable = DEFAULT_TABLE,
                scalar_p: float | None = None) -> ConjugatePairState:
    """``(1 + P)(D1 + X3+) + W5``: the normalized field without its degree >= 7 tail."""
    if scalar_p is None:
        _check_ball(pair, delta)
        scalar_p = calP(phi5_forward(pair, table))
    return (d1(pair) + x3_plus(pair)) * (1.0 + scalar_p) + w5(pair)


def w_geq7(pair: ConjugatePairState, method: str = "difference", delta: float = DEFAULT_DELTA,
           table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    """Degree >= 7 tail of the normalized field.

    ``difference`` subtracts the graded lower parts from the exact field;
    ``formula`` evaluates the rearranged expression in which the only
    unbounded operator has been absorbed through the homological equation.
    """
    if method == "difference":
        return w_full(pair, delta, table)["Wge7"]
    if method != "formula":
        raise ValueError(f"unknown method {method!r}")
    _check_ball(pair, delta)

    def inv(t):
        return neumann_series(lambda h: quartic_k_apply(pair, h, table), t)[0]

    def tail(t):  # (-K + K~) t = (I + K)^{-1} t - t
        return inv(t) - t

    y = phi5_forward(pair, table)
    ydec = x_plus_full(y)
    p5 = ydec.scalars["scalarP"]
    x3u, x5u, w5u = x3_plus(pair), x5_plus(pair), w5(pair)
    gap = w5u - x5u
    return (tail(gap) * (1.0 + p5) + gap * p5 + tail(x3u) * (1.0 + p5) + tail(x5u)
            + inv((ydec["X3p"] - x3u) * (1.0 + p5))
            + inv(ydec["X5p"] - x5u)
            + inv(ydec["Xge7p"]))


# ---------------------------------------------------------------------------
# energy rates


def _rate(part: ConjugatePairState, pair: ConjugatePairState, s: float) -> float:
    u, v = pair
    a, b = part
    val = (pairing(lambda_pow(a, s), lambda_pow(v, s))
           + pairing(lambda_pow(u, s), lambda_pow(b, s)))
    scale = (np.abs(lambda_pow(a, s).coeffs) @ np.abs(lambda_pow(v, s).coeffs)
             + np.abs(lambda_pow(u, s).coeffs) @ np.abs(lambda_pow(b, s).coeffs))
    if abs(val.imag) > 1e-12 * scale + 1e-300:
        raise ArithmeticError(f"energy rate has imaginary part {val.imag:.3e}")
    return float(val.real)


def resonant_class_triples(lat: Lattice) -> list[tuple[int, int, int]]:
    """Class index triples ``(r, s, t)`` with ``radius_t = radius_r + radius_s``."""
    key = "resonant_triples"
    got = lat.cache.get(key)
    if got is None:
        sq = [int(n) for n in lat.class_sq]
        n = len(sq)
        got = [(a, b, c) for a in range(n) for b in range(n) for c in range(n)
               if sum_resonant(sq[c], sq[a], sq[b])]
        lat.cache[key] = got
    return got


def energy_rate_z6(pair: ConjugatePairState, s: float, method: str = "pairing") -> float:
    """Sextic energy rate of ``||u||_s^2`` along the normalized flow."""
    if method == "pairing":
        return _rate(w5(pair), pair, s)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    u, v = pair
    lat = pair.lattice
    bu, bv = u.agg(u), v.agg(v)
    rad = lat.class_radius
    val = 0j
    for a, b, c in resonant_class_triples(lat):
        weight = rad[a] * rad[b] * rad[c] * (rad[c] ** (2 * s) - rad[a] ** (2 * s) - rad[b] ** (2 * s))
        val += (bu[a] * bu[b] * bv[c] - bv[a] * bv[b] * bu[c]) * weight
    val *= 3j / 32
    return float(val.real)


def energy_rate_total(pair: ConjugatePairState, s: float, delta: float = DEFAULT_DELTA,
                      table: NormalFormCoefficientTable = DEFAULT_TABLE) -> tuple[float, float]:
    dec = w_full(pair, delta, table)
    return _rate(dec["W5"], pair, s), _rate(dec["Wge7"], pair, s)


def resonant_kernel(s: float, r_j: float, r_l: float) -> float:
    """``|k|^{2s} - |j|^{2s} - |l|^{2s}`` on ``|k| = |j| + |l|``."""
    return (r_j + r_l) ** (2 * s) - r_j ** (2 * s) - r_l ** (2 * s)
