"""Closed dynamics of the sphere aggregates ``S_lambda`` and ``B_lambda``.

For a state ``(u, v)``::

    S_lambda = sum_{|k| = lambda} u_k v_{-k},   B_lambda = sum_{|k| = lambda} u_k u_{-k}

Neglecting the degree >= 7 tail, the normalized field moves these
aggregates through a system that involves nothing else.  Radius relations
``alpha +- beta = lambda`` are decided on squared radii.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .nf_coefficients import squared_radii, sum_resonant
from .spectral_core import ConjugatePairState, phi_inverse_eval
from .transforms import bilinear_kernel_matrices
from .vector_fields import w_truncated

CLOSURES = ("normalized", "first_step")


def gamma_radii(dim: int, max_radius: float) -> list[int]:
    """Distinct squared lengths of nonzero lattice points with ``|k| <= max_radius``."""
    if max_radius < 1:
        raise ValueError("max_radius must be at least 1")
    return squared_radii(dim, max_radius)


@dataclass(frozen=True, eq=False)
class ShellSpectrum:
    sq_radii: tuple
    S: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        sq = tuple(int(n) for n in self.sq_radii)
        if list(sq) != sorted(set(sq)):
            raise ValueError("radii must be distinct and increasing")
        s = np.asarray(self.S, dtype=float).copy()
        b = np.asarray(self.B, dtype=complex).copy()
        if s.shape != (len(sq),) or b.shape != (len(sq),):
            raise ValueError("S and B need one entry per radius")
        s.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "sq_radii", sq)
        object.__setattr__(self, "S", s)
        object.__setattr__(self, "B", b)

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt(np.array(self.sq_radii, dtype=float))

    def validity_defect(self) -> float:
        """Largest violation of ``S >= 0`` and ``|B| <= S`` (zero when valid)."""
        neg = float(np.max(-self.S, initial=0.0))
        over = float(np.max(np.abs(self.B) - self.S, initial=0.0))
        return max(neg, over, 0.0)

    def sobolev_sq(self, s: float) -> float:
        return float(np.sum(self.radii ** (2 * s) * self.S))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.S.astype(complex), self.B])

    @classmethod
    def from_vector(cls, sq_radii, vec: np.ndarray) -> "ShellSpectrum":
        n = len(sq_radii)
        return cls(sq_radii, vec[:n].real, vec[n:])


def project_to_shells(pair: ConjugatePairState) -> ShellSpectrum:
    u, v = pair
    lat = pair.lattice
    s = u.agg(v)
    if np.max(np.abs(s.imag), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(s), initial=0.0))):
        raise ValueError("S is not real: the pair is not complex conjugate")
    return ShellSpectrum(tuple(int(n) for n in lat.class_sq), s.real, u.agg(u))


class _ShellGeometry:
    """Index tables of ``alpha + beta = lambda`` over a radius list."""

    def __init__(self, sq: Sequence[int]):
        n = len(sq)
        self.sum_triples = [(a, b, c) for a in range(n) for b in range(n) for c in range(n)
                            if sum_resonant(sq[c], sq[a], sq[b])]
        self.r = np.sqrt(np.array(sq, dtype=float))
        r = self.r
        diff = np.subtract.outer(np.array(sq, float), np.array(sq, float)) / np.add.outer(r, r)
        same = np.equal.outer(np.array(sq), np.array(sq))
        # inv[a, l] = 1/(alpha - lambda), zero on the diagonal
        self.inv = np.where(same, 0.0, 1.0 / np.where(same, 1.0, diff))


_GEOMETRY: dict = {}


def _geometry(sq: tuple) -> _ShellGeometry:
    g = _GEOMETRY.get(sq)
    if g is None:
        g = _GEOMETRY[sq] = _ShellGeometry(sq)
    return g


def closure_scalar(spec: ShellSpectrum, closure: str = "normalized") -> float:
    """Shell value of the scalar phase factor P.

    ``normalized`` evaluates Q on the aggregates themselves;
    ``first_step`` first applies the first normal-form map, which acts on
    sphere sums only, and therefore keeps every term below degree seven.
    """
    r = spec.radii
    S, B, Bc = spec.S, spec.B, np.conj(spec.B)
    if closure == "normalized":
        q = 0.25 * np.sum(r * (B + 2 * S + Bc))
    elif closure == "first_step":
        ka, kc = bilinear_kernel_matrices(spec.sq_radii)
        m1 = B @ ka + Bc @ kc  # multiplies z in the first component
        m2 = Bc @ ka + B @ kc
        a, c = 1 + m2, 1 + m1  # eta + psi = a*u + c*v per class
        q = 0.25 * np.sum(r * (a * a * B + 2 * a * c * S + c * c * Bc))
    else:
        raise ValueError(f"unknown closure {closure!r}")
    q = float(np.real(q))
    return math.sqrt(1.0 + 2.0 * phi_inverse_eval(max(q, 0.0))) - 1.0


def shell_rhs(spec: ShellSpectrum, closure: str = "normalized",
              scalar_p: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(dS/dt, dB/dt)`` of the closed shell system."""
    g = _geometry(spec.sq_radii)
    r = g.r
    S, B = spec.S, spec.B
    Bc = np.conj(B)
    P = closure_scalar(spec, closure) if scalar_p is None else scalar_p

    dS = np.zeros(len(r), dtype=complex)
    sum_term = np.zeros(len(r), dtype=complex)
    diff_term = np.zeros(len(r), dtype=complex)
    for a, b, c in g.sum_triples:
        w = r[a] * r[b] * r[c]
        # alpha + beta = lambda
        dS[c] += 3j / 32 * (B[a] * B[b] * Bc[c] - Bc[a] * Bc[b] * B[c]) * w
        sum_term[c] += 3j / 16 * B[a] * B[b] * S[c] * w
        # alpha - beta = lambda, i.e. (alpha, beta, lambda) = (c, b, a)
        dS[a] += 3j / 16 * (B[c] * Bc[b] * Bc[a] - Bc[c] * B[b] * B[a]) * w
        diff_term[a] += 3j / 8 * B[c] * Bc[b] * S[a] * w

    linear = -2j * (1 + P) * (r + 0.25 * r**2 * S) * B
    sphere = 1j / 16 * B * ((np.abs(B) ** 2 * r**4) @ (1.0 / np.add.outer(r, r) - g.inv))
    bracket = 6 + r[:, None] / np.add.outer(r, r) + r[:, None] * g.inv
    diagonal = 1j / 8 * S * B * r**2 * ((S * r) @ bracket)
    dB = linear + sphere + sum_term + diagonal + diff_term
    return dS.real, dB


def shell_z6(spec: ShellSpectrum, s: float) -> float:
    """Sextic rate of ``||u||_s^2 = sum lambda^{2s} S_lambda``."""
    dS, _ = shell_rhs(spec, scalar_p=0.0)
    return float(np.sum(spec.radii ** (2 * s) * dS))


@dataclass
class ShellConsistencyReport:
    dS_projected: np.ndarray
    dS_shell: np.ndarray
    relative_error: float
    energy_space_rate: float  # sum lambda * dS_lambda from the projected flow

    def passed(self, tol: float = 1e-11) -> bool:
        return self.relative_error <= tol


def projected_rates(pair: ConjugatePairState, scalar_p: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``(dS, dB)`` of the Fourier-level truncated normalized field, projected to shells."""
    u, v = pair
    du, dv = w_truncated(pair, scalar_p=scalar_p)
    dS = du.agg(v) + u.agg(dv)
    dB = 2.0 * du.agg(u)
    return dS.real, dB


def shell_consistency(pair: ConjugatePairState, s: float = 0.5) -> ShellConsistencyReport:
    """Compare shell rates from the Fourier flow with the closed shell system."""
    a, _ = projected_rates(pair)
    b, _ = shell_rhs(project_to_shells(pair), scalar_p=0.0)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    err = float(np.max(np.abs(a - b), initial=0.0))
    rel = err / scale if scale else err
    r = np.sqrt(pair.lattice.class_sq.astype(float))
    return ShellConsistencyReport(a, b, rel, float(np.sum(r ** (2 * s) * a)))


def shell_flow(spec: ShellSpectrum, dt: float, steps: int, closure: str = "normalized",
               record_every: int = 1):
    """Classic RK4 on ``(S, B)``; yields ``(t, spectrum)`` every ``record_every`` steps."""
    sq = spec.sq_radii

    def f(vec):
        dS, dB = shell_rhs(ShellSpectrum.from_vector(sq, vec), closure)
        return np.concatenate([dS.astype(complex), dB])

    y = spec.to_vector()
    yield 0.0, spec
    for n in range(1, steps + 1):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if n % record_every == 0 or n == steps:
            yield n * dt, ShellSpectrum.from_vector(sq, y)


def shell_csv_header(sq_radii: Sequence[int], s_list: Iterable[float]) -> list[str]:
    cols = ["t"]
    for n in sq_radii:
        lab = f"sqrt{n}"
        cols += [f"S_{lab}", f"ReB_{lab}", f"ImB_{lab}"]
    cols += [f"norm2_s{s:g}" for s in s_list]
    return cols


def shell_csv_row(t: float, spec: ShellSpectrum, s_list: Iterable[float]) -> list[str]:
    row = [f"{t:.17g}"]
    for S, B in zip(spec.S, spec.B):
        row += [f"{S:.17g}", f"{B.real:.17g}", f"{B.imag:.17g}"]
    row += [f"{spec.sobolev_sq(s):.17g}" for s in s_list]
    return row


def realize_single_sphere_d1(radius: int, S: float, B: complex) -> tuple[complex, complex]:
    """Coefficients ``(u_r, u_{-r})`` in dimension one with the given aggregates.

    Requires ``|B| <= S``; solves ``|a|^2 + |b|^2 = S`` and ``2ab = B``.
    """
    if abs(B) > S + 1e-15:
        raise ValueError("|B| must not exceed S")
    prod = abs(B) / 2
    disc = math.sqrt(max(S * S / 4 - prod * prod, 0.0))
    ma2 = S / 2 + disc
    mb2 = prod * prod / ma2 if ma2 else 0.0  # ma2 * mb2 = prod^2, free of cancellation
    ma, mb = math.sqrt(ma2), math.sqrt(mb2)
    phase = B / abs(B) if B != 0 else 1.0
    return complex(ma), complex(mb * phase)
