"""Quintic normal-form coefficients and small-divisor bookkeeping.

Every coefficient depends on the three radii ``|j|, |l|, |k|`` only, and is
evaluated from exact squared radii.  Kronecker-gated terms follow the
``0/0 = 0`` rule: a gated term whose denominator vanishes contributes zero.
Equality of radii, and the resonances ``|k| = |j| +- |l|``, are decided on
integers, never on floats.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .spectral_core import Lattice, ModeIndex

KINDS = ("A11", "B11", "C11", "D11", "F11", "A12", "B12", "C12", "D12", "F12")
ACTIVE_KINDS = ("A11", "C11", "F11", "A12", "B12", "C12", "D12", "F12")
DIVISOR_CONSTANT = 27


def _sq(mode) -> int:
    if isinstance(mode, (int, np.integer)):
        return int(mode)
    return ModeIndex(mode).sq


def _is_square(n: int) -> bool:
    r = math.isqrt(n)
    return r * r == n


def sum_resonant(nk: int, nj: int, nl: int) -> bool:
    """Exact test of ``|k| = |j| + |l|`` on squared radii."""
    d = nk - nj - nl
    return d >= 0 and d * d == 4 * nj * nl


def difference_resonant(nk: int, nj: int, nl: int) -> bool:
    """Exact test of ``|k| = |j| - |l|``, i.e. ``|j| = |k| + |l|``."""
    return sum_resonant(nj, nk, nl)


def heron_product(na: int, nb: int, nc: int) -> int:
    """``prod (a +- b +- c)`` over the four sign patterns with ``a`` positive."""
    return (na + nb - nc) ** 2 - 4 * na * nb


class RadiusArithmetic:
    """Radius arithmetic in float or exact rational mode."""

    def __init__(self, exact: bool):
        self.exact = exact

    def r(self, n: int):
        if self.exact:
            if not _is_square(n):
                raise ValueError(f"radius sqrt({n}) is irrational; exact mode needs d = 1 radii")
            return Fraction(math.isqrt(n))
        return math.sqrt(n)

    def zero(self):
        return Fraction(0) if self.exact else 0.0

    def inv_diff(self, na: int, nb: int):
        """``1/(|a| - |b|)`` gated to zero when the radii coincide."""
        if na == nb:
            return self.zero()
        if self.exact:
            return 1 / (self.r(na) - self.r(nb))
        return (math.sqrt(na) + math.sqrt(nb)) / (na - nb)

    def inv_three(self, na: int, nb: int, nc: int, sb: int, sc: int):
        """``1/(|a| + sb|b| + sc|c|)`` gated to zero when it vanishes."""
        if self.exact:
            d = self.r(na) + sb * self.r(nb) + sc * self.r(nc)
            return self.zero() if d == 0 else 1 / d
        return 1.0 / three_term_divisor(na, nb, nc, sb, sc) if not _three_zero(na, nb, nc, sb, sc) else 0.0


def _three_zero(na: int, nb: int, nc: int, sb: int, sc: int) -> bool:
    if sb > 0 and sc > 0:
        return False
    if sb < 0 and sc < 0:
        return sum_resonant(na, nb, nc)
    if sb < 0:
        return sum_resonant(nb, na, nc)
    return sum_resonant(nc, na, nb)


def three_term_divisor(na: int, nb: int, nc: int, sb: int, sc: int) -> float:
    """``|a| + sb|b| + sc|c|`` without cancellation error.

    Near zero the value is recovered from the integer ``heron_product``
    divided by the three companion factors, which are all bounded away from 0.
    """
    a, b, c = math.sqrt(na), math.sqrt(nb), math.sqrt(nc)
    d = a + sb * b + sc * c
    if abs(d) >= 0.5:
        return d
    p = heron_product(na, nb, nc)
    if p == 0 and _three_zero(na, nb, nc, sb, sc):
        return 0.0
    others = 1.0
    for tb, tc in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        if (tb, tc) != (sb, sc):
            others *= a + tb * b + tc * c
    return p / others


def _coefficient(kind: str, nj: int, nl: int, nk: int, R: RadiusArithmetic):
    rj, rl, rk = R.r(nj), R.r(nl), R.r(nk)
    djl, djk, dlk = nj == nl, nj == nk, nl == nk
    if kind in ("B11", "D11"):
        return R.zero()
    if kind == "A11":
        return rj**2 * rl**2 / (128 * (rj + rl)) * (1 / (rj + rk) + 1 / (rl + rk))
    if kind == "C11":
        bracket = (-(R.inv_diff(nj, nk) if dlk else 0)
                   + 1 / (rj + rk) - R.inv_diff(nl, nk))
        return rj**2 * rl**2 * bracket * R.inv_diff(nl, nj) / 64
    if kind == "F11":
        bracket = (-(int(dlk) + int(djk)) / (rj + rl)
                   + R.inv_diff(nj, nk) + R.inv_diff(nl, nk))
        return bracket * rj**2 * rl**2 / (rj + rl) / 128
    if kind == "A12":
        return 3 * rj * rl * (rj + rl) * R.inv_three(nk, nj, nl, -1, -1) / 64
    if kind == "B12":
        bracket = ((rl * R.inv_diff(nl, nk) if djl else 0) + 6
                   + rl / (rl + rj) + rl * R.inv_diff(nl, nj))
        return rj**2 * rl * bracket * R.inv_diff(nk, nj) / 32
    if kind == "C12":
        return 3 * rj * rl * (rj - rl) * R.inv_three(nk, nj, nl, -1, 1) / 32
    if kind == "D12":
        bracket = (-(rj / (rj + rk) if djl else 0) - 6
                   + rj * R.inv_diff(nl, nj) - rj / (rl + rj))
        return rj * rl**2 / (32 * (rk + rl)) * bracket
    if kind == "F12":
        return -3 * rj * rl * (rj + rl) / (64 * (rk + rj + rl))
    raise ValueError(f"unknown coefficient kind {kind!r}")


def nf5_coefficient(kind: str, j, l, k, exact: bool = False):
    """Closed-form quintic coefficient ``kind(j, l, k)``.

    Modes may be given as lattice points or directly as squared radii.
    With ``exact=True`` the value is a :class:`~fractions.Fraction` (all
    radii must then be integers).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown coefficient kind {kind!r}")
    return _coefficient(kind, _sq(j), _sq(l), _sq(k), RadiusArithmetic(exact))


@dataclass
class NormalFormCoefficientTable:
    """Coefficient evaluator with optional per-entry offsets.

    ``overrides[(kind, nj, nl, nk)]`` is added to the closed form; the hook
    exists so verification suites can check that a corrupted table is caught.
    """

    overrides: dict = field(default_factory=dict)

    def value(self, kind: str, nj: int, nl: int, nk: int, exact: bool = False):
        base = _coefficient(kind, nj, nl, nk, RadiusArithmetic(exact))
        delta = self.overrides.get((kind, nj, nl, nk))
        if delta is None:
            return base
        return base + (Fraction(delta) if exact else float(delta))

    def perturbed(self, kind: str, nj: int, nl: int, nk: int,
                  delta=Fraction(1, 1000)) -> "NormalFormCoefficientTable":
        over = dict(self.overrides)
        over[(kind, nj, nl, nk)] = over.get((kind, nj, nl, nk), 0) + delta
        return NormalFormCoefficientTable(over)

    def key(self) -> tuple:
        return tuple(sorted((k, str(v)) for k, v in self.overrides.items()))

    def tensor(self, lattice: Lattice, kind: str) -> np.ndarray:
        """``G[r, s, t] = kind(class r, class s, class t)`` for ``lattice``."""
        cache_key = ("nf_tensor", kind, self.key())
        g = lattice.cache.get(cache_key)
        if g is None:
            sq = [int(n) for n in lattice.class_sq]
            n = len(sq)
            g = np.empty((n, n, n))
            for a, b, c in itertools.product(range(n), repeat=3):
                g[a, b, c] = float(self.value(kind, sq[a], sq[b], sq[c]))
            g.setflags(write=False)
            lattice.cache[cache_key] = g
        return g


DEFAULT_TABLE = NormalFormCoefficientTable()


# ---------------------------------------------------------------------------
# small divisors


@dataclass(frozen=True)
class DivisorReport:
    j: tuple
    l: tuple
    k: tuple
    divisors: dict  # sign pattern label -> |k| + a|j| + b|l|
    p: int
    bound_ok: dict  # inequality label -> bool (True when vacuous)
    ratios: dict  # inequality label -> (1/|divisor|) / bound, 0.0 when vacuous

    @property
    def resonant(self) -> bool:
        return any(v == 0.0 for v in self.divisors.values())

    @property
    def all_nonzero(self) -> bool:
        return not self.resonant


_PATTERNS = {"k+j+l": (1, 1), "k+j-l": (1, -1), "k-j+l": (-1, 1), "k-j-l": (-1, -1)}


def divisor_report_sq(nj: int, nl: int, nk: int, j=None, l=None, k=None,
                      constant: float = DIVISOR_CONSTANT) -> DivisorReport:
    """Divisor report from squared radii (modes are carried along for output)."""
    divs = {lab: three_term_divisor(nk, nj, nl, sj, sl) for lab, (sj, sl) in _PATTERNS.items()}
    rj, rl = math.sqrt(nj), math.sqrt(nl)
    bounds = {"k-j+l": constant * nj * rl, "k-j-l": constant * rj * rl * (rj + rl)}
    ok, ratios = {}, {}
    for lab, bound in bounds.items():
        d = divs[lab]
        if d == 0.0:
            ok[lab], ratios[lab] = True, 0.0
        else:
            ratios[lab] = (1.0 / abs(d)) / (bound / constant)
            ok[lab] = 1.0 / abs(d) <= bound
    return DivisorReport(j, l, k, divs, heron_product(nk, nj, nl), ok, ratios)


def divisor_report(j, l, k, constant: float = DIVISOR_CONSTANT) -> DivisorReport:
    """Divisors ``|k| +- |j| +- |l|``, the integer ``p`` and the two lower bounds.

    ``ratios`` hold ``(1/|divisor|) / (|j|^2|l|)`` and
    ``(1/|divisor|) / (|j||l|(|j|+|l|))``; a bound holds iff its ratio is at
    most ``constant``.
    """
    mj, ml, mk = ModeIndex(j), ModeIndex(l), ModeIndex(k)
    return divisor_report_sq(mj.sq, ml.sq, mk.sq, tuple(mj), tuple(ml), tuple(mk), constant)


def two_square_representation(n: int) -> tuple[int, int]:
    """``(x, y)`` with ``x >= y >= 0`` and ``x^2 + y^2 = n``, largest ``x`` first."""
    for x in range(math.isqrt(n), -1, -1):
        rest = n - x * x
        if rest > x * x:
            break
        y = math.isqrt(rest)
        if y * y == rest:
            return x, y
    raise ArithmeticError(f"{n} is not a sum of two squares")


@dataclass(frozen=True)
class SharpnessTriple:
    n: int
    squares: tuple[int, int, int]  # (n, n+1, 4n+2)
    witnesses: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]
    p: int


def sharpness_triples(count: int) -> list[SharpnessTriple]:
    """Squared-radius triples ``(n, n+1, 4n+2)`` with ``p = 1``.

    Starts at ``n = 4`` and iterates ``n -> 2n^2 + 2n``; the identity of
    Brahmagupta keeps all three numbers sums of two squares.
    """
    if count < 1:
        raise ValueError("count must be positive")
    out, n = [], 4
    for _ in range(count):
        sq = (n, n + 1, 4 * n + 2)
        wit = tuple(two_square_representation(m) for m in sq)
        p = heron_product(sq[2], sq[0], sq[1])
        out.append(SharpnessTriple(n, sq, wit, p))
        n = 2 * n * n + 2 * n
    return out


def coefficient_bound_check(kind: str, j, l, k, dim: int | None = None,
                            constant: float = DIVISOR_CONSTANT) -> tuple[bool, float]:
    """Compare ``|kind(j,l,k)|`` with the polynomial bound in ``|j|, |l|``.

    The bound is ``|j|^2|l|^2`` in dimension one and
    ``|j|^4|l|^2 + |j|^2|l|^4`` otherwise.  Returns ``(ratio <= constant, ratio)``.
    """
    nj, nl, nk = _sq(j), _sq(l), _sq(k)
    if dim is None:
        dim = len(ModeIndex(j)) if not isinstance(j, (int, np.integer)) else 1
    val = abs(float(nf5_coefficient(kind, nj, nl, nk)))
    bound = nj * nl if dim == 1 else nj * nj * nl + nj * nl * nl
    ratio = val / bound
    return ratio <= constant, ratio


def squared_radii(dim: int, max_radius: float) -> list[int]:
    n = int(math.floor(max_radius))
    lim = max_radius * max_radius + 1e-9
    vals = {sum(c * c for c in p) for p in itertools.product(range(n + 1), repeat=dim)}
    return sorted(v for v in vals if 0 < v <= lim)


def representative(dim: int, n: int) -> tuple[int, ...]:
    """A lattice point of squared length ``n`` (lexicographically largest)."""
    m = math.isqrt(n)
    for p in itertools.product(range(m, -1, -1), repeat=dim):
        if sum(c * c for c in p) == n:
            return p
    raise ValueError(f"no point of squared length {n} in dimension {dim}")


def scan_divisors(dim: int, max_radius: float,
                  constant: float = DIVISOR_CONSTANT) -> Iterator[DivisorReport]:
    """All radius-class triples within ``max_radius``.

    Divisors depend on radii only, so one representative mode per class
    covers every mode triple.
    """
    sq = squared_radii(dim, max_radius)
    reps = {n: representative(dim, n) for n in sq}
    for nj, nl, nk in itertools.product(sq, repeat=3):
        yield divisor_report_sq(nj, nl, nk, reps[nj], reps[nl], reps[nk], constant)


def near_integer_difference_check(dim: int, max_radius: float) -> tuple[bool, float]:
    """``1/||a|-|b|| <= |a|+|b|`` whenever ``0 < ||a|-|b|| < 1``; returns worst ratio."""
    sq = squared_radii(dim, max_radius)
    worst = 0.0
    for na, nb in itertools.combinations(sq, 2):
        ra, rb = math.sqrt(na), math.sqrt(nb)
        diff = abs(na - nb) / (ra + rb)
        if 0 < diff < 1:
            worst = max(worst, (1 / diff) / (ra + rb))
    return worst <= 1.0 + 1e-12, worst


def coefficient_scan(kinds: Sequence[str], sq_values: Iterable[int], dim: int,
                     constant: float = DIVISOR_CONSTANT) -> dict[str, float]:
    """Maximum bound ratio of each kind over all class triples."""
    sq = list(sq_values)
    best = {kd: 0.0 for kd in kinds}
    for nj, nl, nk in itertools.product(sq, repeat=3):
        for kd in kinds:
            best[kd] = max(best[kd], coefficient_bound_check(kd, nj, nl, nk, dim, constant)[1])
    return best


def random_coefficient_scan(kind: str, dim: int, max_radius: float, samples: int,
                            rng: np.random.Generator) -> float:
    sq = np.array(squared_radii(dim, max_radius))
    picks = rng.choice(sq, size=(samples, 3))
    return max(coefficient_bound_check(kind, int(a), int(b), int(c), dim)[1] for a, b, c in picks)


def coefficient_rows(kinds: Sequence[str], sq_values: Iterable[int],
                     exact: bool = False) -> Iterator[tuple]:
    sq = list(sq_values)
    for nj, nl, nk in itertools.product(sq, repeat=3):
        for kd in kinds:
            yield kd, nj, nl, nk, nf5_coefficient(kd, nj, nl, nk, exact=exact)
