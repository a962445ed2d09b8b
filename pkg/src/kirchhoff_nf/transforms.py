"""Changes of variables, their differentials and their inverses.

Chain of maps, from normalized to physical coordinates::

    (u, v) --phi5--> (w, z) --phi4--> (eta, psi) --phi3--> (f, g)
           --phi2--> (q, p) --phi1--> physical (u, v)

The nonlinear maps phi3, phi4 and phi5 multiply each Fourier mode by
scalars built from sphere sums, so they preserve supports exactly.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .nf_coefficients import DEFAULT_TABLE, NormalFormCoefficientTable
from .spectral_core import (
    ConjugatePairState,
    Lattice,
    RealPairState,
    SpectralField,
    lambda_pow,
    phi_inverse_eval,
    q_functional,
    rho_eval,
    sobolev_norm,
)

SQRT2 = math.sqrt(2.0)
FIXED_POINT_TOL = 1e-13
FIXED_POINT_CAP = 200
NEUMANN_TOL = 1e-15
NEUMANN_STALL_RATIO = 0.99
DEFAULT_DELTA = 0.05


class ConvergenceError(ArithmeticError):
    pass


class BallError(ValueError):
    """Input lies outside the ball where a map or inverse is guaranteed."""


# ---------------------------------------------------------------------------
# linear maps


def phi1_forward(q: SpectralField, p: SpectralField) -> RealPairState:
    return RealPairState(lambda_pow(q, -0.5), lambda_pow(p, 0.5))


def phi1_inverse(u: SpectralField, v: SpectralField) -> RealPairState:
    return RealPairState(lambda_pow(u, 0.5), lambda_pow(v, -0.5))


def phi2_forward(f: SpectralField, g: SpectralField) -> RealPairState:
    return RealPairState((f + g) / SQRT2, (f - g) / (1j * SQRT2))


def phi2_inverse(q: SpectralField, p: SpectralField) -> ConjugatePairState:
    return ConjugatePairState((q + p * 1j) / SQRT2, (q - p * 1j) / SQRT2)


# ---------------------------------------------------------------------------
# phi3


def _phi3_matrix(pair: ConjugatePairState, rho: float) -> ConjugatePairState:
    scale = 1.0 / math.sqrt(1.0 - rho * rho)
    a, b = pair
    return ConjugatePairState((a + b * rho) * scale, (a * rho + b) * scale)


def phi3_forward(pair: ConjugatePairState) -> ConjugatePairState:
    return _phi3_matrix(pair, rho_eval(phi_inverse_eval(q_functional(pair))))


def phi3_inverse(pair: ConjugatePairState) -> ConjugatePairState:
    # Q(f, g) equals P(eta, psi), so the forward scalar is recovered directly.
    return _phi3_matrix(pair, -rho_eval(q_functional(pair)))


# ---------------------------------------------------------------------------
# bilinear sphere operators of the first normal form step


def bilinear_kernel_matrices(class_sq) -> tuple[np.ndarray, np.ndarray]:
    """``(A, C)`` with ``A[r, t] = r^2 / (8 (r - t))`` (zero when ``r = t``) and ``C[r, t] = r^2 / (8 (r + t))``."""
    sq = np.asarray(class_sq)
    r = np.sqrt(sq.astype(float))
    diff = np.subtract.outer(sq, sq) / np.add.outer(r, r)  # r - t without cancellation
    same = np.equal.outer(sq, sq)
    ka = np.where(same, 0.0, (r**2)[:, None] / (8.0 * np.where(same, 1.0, diff)))
    kc = (r**2)[:, None] / (8.0 * np.add.outer(r, r))
    return ka, kc


def _kernels(lat: Lattice) -> tuple[np.ndarray, np.ndarray]:
    got = lat.cache.get("bilinear_kernels")
    if got is None:
        got = lat.cache["bilinear_kernels"] = bilinear_kernel_matrices(lat.class_sq)
    return got


def bilinear_multiplier(kind: str, lat: Lattice, sums: np.ndarray) -> np.ndarray:
    """Per-class multiplier of ``kind[u, v]`` given ``sums = agg(u, v)``."""
    ka, kc = _kernels(lat)
    if kind == "A12":
        return sums @ ka
    if kind == "C12":
        return sums @ kc
    raise ValueError(f"unknown bilinear kind {kind!r}")


def bilinear_apply(kind: str, u: SpectralField, v: SpectralField, h: SpectralField) -> SpectralField:
    """``h_k * sum_j u_j v_{-j} kernel(|j|, |k|)`` for kind A12 or C12."""
    return h.scale_classes(bilinear_multiplier(kind, u.lattice, u.agg(v)))


def _m4_mults(state: ConjugatePairState) -> tuple[np.ndarray, np.ndarray]:
    w, z = state
    lat = state.lattice
    ka, kc = _kernels(lat)
    bw, bz = w.agg(w), z.agg(z)
    return bw @ ka + bz @ kc, bz @ ka + bw @ kc


def m_apply(state: ConjugatePairState, tangent: ConjugatePairState) -> ConjugatePairState:
    """``M(w, z)(a, b) = ((A12[w,w] + C12[z,z]) b, (A12[z,z] + C12[w,w]) a)``."""
    m1, m2 = _m4_mults(state)
    a, b = tangent
    return ConjugatePairState(b.scale_classes(m1), a.scale_classes(m2))


def e_apply(state: ConjugatePairState, tangent: ConjugatePairState) -> ConjugatePairState:
    """Part of the differential of ``M(w,z)(w,z)`` coming from the sphere sums."""
    w, z = state
    a, b = tangent
    lat = state.lattice
    ka, kc = _kernels(lat)
    wa, zb = w.agg(a), z.agg(b)
    first = z.scale_classes(2.0 * (wa @ ka + zb @ kc))
    second = w.scale_classes(2.0 * (wa @ kc + zb @ ka))
    return ConjugatePairState(first, second)


def k_apply(state: ConjugatePairState, tangent: ConjugatePairState) -> ConjugatePairState:
    return m_apply(state, tangent) + e_apply(state, tangent)


def phi4_forward(state: ConjugatePairState) -> ConjugatePairState:
    return state + m_apply(state, state)


def phi4_differential_apply(state: ConjugatePairState, tangent: ConjugatePairState) -> ConjugatePairState:
    return tangent + k_apply(state, tangent)


def _picard(target: ConjugatePairState, correction: Callable, s: float,
            tol: float, cap: int, name: str) -> ConjugatePairState:
    scale = max(target.norm_both(s), 1e-300)
    x = target
    for _ in range(cap):
        nxt = target - correction(x)
        step = (nxt - x).norm_both(s)
        x = nxt
        if step <= tol * scale:
            return x
    raise ConvergenceError(f"{name} fixed point did not converge in {cap} iterations")


def phi4_inverse(state: ConjugatePairState, tol: float = FIXED_POINT_TOL,
                 cap: int = FIXED_POINT_CAP) -> ConjugatePairState:
    """Solve ``phi4(w) = state`` by fixed-point iteration in ``||eta||_{m0} <= 1/4``."""
    m0 = state.lattice.m0
    if state.norm(m0) > 0.25:
        raise BallError(f"phi4 inverse needs ||eta||_m0 <= 1/4, got {state.norm(m0):.4g}")
    return _picard(state, lambda x: m_apply(x, x), m0, tol, cap, "phi4 inverse")


# ---------------------------------------------------------------------------
# Neumann series for (I + K)^{-1}


def neumann_series(k_applier: Callable[[ConjugatePairState], ConjugatePairState],
                   rhs: ConjugatePairState, tol: float = NEUMANN_TOL):
    """Return ``((I+K)^{-1} rhs, -K rhs)`` summing ``(-K)^n rhs`` until negligible."""
    total = rhs
    base = rhs.norm_both()
    if base == 0.0:
        return rhs, rhs * 0.0
    term = rhs
    first = None
    prev = base
    for n in range(1, 10_000):
        term = -k_applier(term)
        if first is None:
            first = term
        total = total + term
        size = term.norm_both()
        if size < tol * base:
            return total, first
        if n >= 3 and size >= NEUMANN_STALL_RATIO * prev:
            raise ConvergenceError(f"Neumann series not decaying (ratio {size / prev:.3f})")
        prev = size
    raise ConvergenceError("Neumann series did not converge")


def neumann_inverse_apply(k_applier, rhs: ConjugatePairState,
                          m_norm_bound: float | None = None) -> ConjugatePairState:
    """``(I + K)^{-1} rhs``; ``m_norm_bound`` is the caller's contraction surrogate.

    For the first step the surrogate is ``||w||_{m0}`` and must be below 1/2.
    """
    if m_norm_bound is not None and m_norm_bound >= 0.5:
        raise BallError(f"contraction surrogate {m_norm_bound:.4g} is not below 1/2")
    return neumann_series(k_applier, rhs)[0]


def neumann_tail(k_applier, rhs: ConjugatePairState) -> ConjugatePairState:
    """``K~ rhs = sum_{n>=2} (-K)^n rhs``."""
    full, first = neumann_series(k_applier, rhs)
    return full - rhs - first


# ---------------------------------------------------------------------------
# second normal form step

# (kind, first sphere sum, second sphere sum); "uu" = agg(u,u), "uv" = agg(u,v)
ROW_DIAGONAL = (("A11", "uu", "uu"), ("C11", "uu", "vv"), ("F11", "vv", "vv"))
ROW_OFFDIAGONAL = (("A12", "uu", "uu"), ("B12", "uu", "uv"), ("C12", "uu", "vv"),
                   ("D12", "uv", "vv"), ("F12", "vv", "vv"))


def _contract(g: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.einsum("r,s,rst->t", x, y, g)


def _row_mults(lat: Lattice, table: NormalFormCoefficientTable, sums: dict,
               dsums: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    out = []
    for terms in (ROW_DIAGONAL, ROW_OFFDIAGONAL):
        acc = np.zeros(lat.n_classes, dtype=complex)
        for kind, p1, p2 in terms:
            g = table.tensor(lat, kind)
            if dsums is None:
                acc = acc + _contract(g, sums[p1], sums[p2])
            else:
                acc = acc + _contract(g, dsums[p1], sums[p2]) + _contract(g, sums[p1], dsums[p2])
        out.append(acc)
    return out[0], out[1]


def _sums(u: SpectralField, v: SpectralField) -> dict:
    return {"uu": u.agg(u), "uv": u.agg(v), "vv": v.agg(v)}


def _mirror(s: dict) -> dict:
    return {"uu": s["vv"], "uv": s["uv"], "vv": s["uu"]}


def quartic_multipliers(state: ConjugatePairState,
                        table: NormalFormCoefficientTable = DEFAULT_TABLE):
    """``(m11, m12, m21, m22)`` class multipliers of the quartic matrix operator."""
    lat = state.lattice
    s = _sums(*state)
    m11, m12 = _row_mults(lat, table, s)
    m22, m21 = _row_mults(lat, table, _mirror(s))
    return m11, m12, m21, m22


def quartic_m_apply(state: ConjugatePairState, tangent: ConjugatePairState,
                    table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    m11, m12, m21, m22 = quartic_multipliers(state, table)
    a, b = tangent
    return ConjugatePairState(a.scale_classes(m11) + b.scale_classes(m12),
                              a.scale_classes(m21) + b.scale_classes(m22))


def quartic_e_apply(state: ConjugatePairState, tangent: ConjugatePairState,
                    table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    """Differentiate the sphere sums of ``M(u,v)(u,v)`` in direction ``tangent``."""
    lat = state.lattice
    u, v = state
    a, b = tangent
    s = _sums(u, v)
    ds = {"uu": 2.0 * u.agg(a), "uv": a.agg(v) + u.agg(b), "vv": 2.0 * v.agg(b)}
    d11, d12 = _row_mults(lat, table, s, ds)
    d22, d21 = _row_mults(lat, table, _mirror(s), _mirror(ds))
    return ConjugatePairState(u.scale_classes(d11) + v.scale_classes(d12),
                              u.scale_classes(d21) + v.scale_classes(d22))


def quartic_k_apply(state, tangent, table: NormalFormCoefficientTable = DEFAULT_TABLE):
    return quartic_m_apply(state, tangent, table) + quartic_e_apply(state, tangent, table)


def phi5_forward(state: ConjugatePairState,
                 table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    return state + quartic_m_apply(state, state, table)


def phi5_differential_apply(state, tangent, table: NormalFormCoefficientTable = DEFAULT_TABLE):
    return tangent + quartic_k_apply(state, tangent, table)


def phi5_inverse(state: ConjugatePairState, delta: float = DEFAULT_DELTA,
                 table: NormalFormCoefficientTable = DEFAULT_TABLE,
                 tol: float = FIXED_POINT_TOL, cap: int = FIXED_POINT_CAP) -> ConjugatePairState:
    m1 = state.lattice.m1
    if state.norm(m1) > delta:
        raise BallError(f"phi5 inverse needs ||w||_m1 <= {delta}, got {state.norm(m1):.4g}")
    return _picard(state, lambda x: quartic_m_apply(x, x, table), m1, tol, cap, "phi5 inverse")


# ---------------------------------------------------------------------------
# compositions


def phi_next(state: ConjugatePairState,
             table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    """Normalized ``(u, v)`` to the complex variables ``(f, g)``."""
    return phi3_forward(phi4_forward(phi5_forward(state, table)))


def phi_next_inverse(pair: ConjugatePairState, delta: float = DEFAULT_DELTA,
                     table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    return phi5_inverse(phi4_inverse(phi3_inverse(pair)), delta, table)


def compose_full(state: ConjugatePairState, delta: float = DEFAULT_DELTA,
                 table: NormalFormCoefficientTable = DEFAULT_TABLE) -> RealPairState:
    """Normalized ``(u, v)`` to the physical position and velocity."""
    m1 = state.lattice.m1
    if state.norm(m1) > delta:
        raise BallError(f"composition needs ||u||_m1 <= {delta}, got {state.norm(m1):.4g}")
    f, g = phi_next(state, table)
    q, p = phi2_forward(f, g)
    return phi1_forward(q, p)


def compose_full_inverse(state: RealPairState, delta: float = DEFAULT_DELTA,
                         table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    q, p = phi1_inverse(*state)
    return phi_next_inverse(phi2_inverse(q, p), delta, table)


def first_step_ball_norm(state: ConjugatePairState) -> float:
    return sobolev_norm(state.first, state.lattice.m0)
