"""Truncated Fourier fields on Z^d minus the origin.

A :class:`Lattice` is a finite, negation-closed set of nonzero modes, grouped
into radius classes by exact squared length.  Every operator in this package
multiplies the coefficient at ``k`` by a scalar that depends on ``|k|`` and on
sphere sums of the form ``sum_{|j| = r} a_j b_{-j}``, so all of them act
within the support of their input and Galerkin truncation is exact.

The pairing convention is ``<w, h> = sum_j w_j h_{-j}`` (normalized measure).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np


class ModeIndex(tuple):
    """Integer lattice point ``j`` with ``j != 0``."""

    def __new__(cls, components: Iterable[int]):
        comps = tuple(int(c) for c in components)
        if not 1 <= len(comps) <= 3:
            raise ValueError(f"dimension must be 1, 2 or 3, got {len(comps)}")
        if not any(comps):
            raise ValueError("the zero mode is excluded from the zero-mean space")
        return super().__new__(cls, comps)

    @property
    def sq(self) -> int:
        return sum(c * c for c in self)

    def radius(self) -> float:
        return math.sqrt(self.sq)

    def __neg__(self) -> "ModeIndex":
        return ModeIndex(-c for c in self)


class Lattice:
    """Negation-closed finite mode set with radius classes.

    Attributes
    ----------
    modes : (M, d) int array, sorted by squared radius then lexicographically
    sq : (M,) squared radii
    cls : (M,) index of the radius class of each mode
    class_sq : (R,) distinct squared radii, increasing
    class_radius : (R,) float radii
    neg : (M,) index of ``-k`` for each ``k``
    """

    def __init__(self, dim: int, modes: Iterable[Sequence[int]]):
        if dim not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        pts = set()
        for m in modes:
            k = ModeIndex(m)
            if len(k) != dim:
                raise ValueError(f"mode {tuple(k)} does not have dimension {dim}")
            pts.add(tuple(k))
            pts.add(tuple(-k))
        if not pts:
            raise ValueError("empty support")
        ordered = sorted(pts, key=lambda k: (sum(c * c for c in k), k))
        self.dim = dim
        self.modes = np.array(ordered, dtype=np.int64).reshape(len(ordered), dim)
        self.sq = (self.modes**2).sum(axis=1)
        self.class_sq, self.cls = np.unique(self.sq, return_inverse=True)
        self.class_radius = np.sqrt(self.class_sq.astype(float))
        self.radius = self.class_radius[self.cls]
        self.index = {k: i for i, k in enumerate(ordered)}
        self.neg = np.array([self.index[tuple(-c for c in k)] for k in ordered])
        self.size = len(ordered)
        self.n_classes = len(self.class_sq)
        self.cache: dict = {}

    @classmethod
    def ball(cls, dim: int, max_radius: float) -> "Lattice":
        """All nonzero modes with ``|k| <= max_radius`` (sphere-complete)."""
        n = int(math.floor(max_radius))
        lim = max_radius * max_radius + 1e-9
        pts = [k for k in itertools.product(range(-n, n + 1), repeat=dim)
               if any(k) and sum(c * c for c in k) <= lim]
        return cls(dim, pts)

    @classmethod
    def spheres(cls, dim: int, sq_radii: Iterable[int]) -> "Lattice":
        """All modes lying on the given spheres ``|k|^2 = n``."""
        want = set(int(n) for n in sq_radii)
        if not want:
            raise ValueError("no spheres requested")
        n = math.isqrt(max(want))
        pts = [k for k in itertools.product(range(-n, n + 1), repeat=dim)
               if any(k) and sum(c * c for c in k) in want]
        if not pts:
            raise ValueError(f"no lattice points on spheres {sorted(want)} in d={dim}")
        return cls(dim, pts)

    def __repr__(self) -> str:
        return f"Lattice(dim={self.dim}, modes={self.size}, classes={self.n_classes})"

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        return (isinstance(other, Lattice) and self.dim == other.dim
                and self.modes.shape == other.modes.shape
                and bool(np.all(self.modes == other.modes)))

    __hash__ = object.__hash__

    @property
    def m0(self) -> float:
        return 1.0 if self.dim == 1 else 1.5

    @property
    def m1(self) -> float:
        return 1.0 if self.dim == 1 else 2.0

    def agg(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Per-class sums ``sum_{|j| = r} a_j b_{-j}``."""
        prod = a * b[self.neg]
        return (np.bincount(self.cls, prod.real, self.n_classes)
                + 1j * np.bincount(self.cls, prod.imag, self.n_classes))

    def class_of(self, sq: int) -> int:
        i = int(np.searchsorted(self.class_sq, sq))
        if i >= self.n_classes or self.class_sq[i] != sq:
            raise KeyError(sq)
        return i


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex Fourier coefficients on a lattice (coefficients off-lattice are 0)."""

    lattice: Lattice
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (self.lattice.size,):
            raise ValueError(f"expected {self.lattice.size} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, lattice: Lattice) -> "SpectralField":
        return cls(lattice, np.zeros(lattice.size, dtype=complex))

    @classmethod
    def from_dict(cls, lattice: Lattice, values: dict) -> "SpectralField":
        c = np.zeros(lattice.size, dtype=complex)
        for k, val in values.items():
            try:
                c[lattice.index[tuple(k)]] = val
            except KeyError:
                raise KeyError(f"mode {tuple(k)} is not in the support") from None
        return cls(lattice, c)

    @property
    def dimension(self) -> int:
        return self.lattice.dim

    @property
    def support(self) -> list[ModeIndex]:
        return [ModeIndex(k) for k in self.lattice.modes]

    def __getitem__(self, mode) -> complex:
        i = self.lattice.index.get(tuple(mode))
        return 0j if i is None else complex(self.coeffs[i])

    def items(self) -> Iterator[tuple[tuple[int, ...], complex]]:
        for k, c in zip(self.lattice.modes, self.coeffs):
            yield tuple(int(x) for x in k), complex(c)

    def _check(self, other: "SpectralField") -> None:
        if other.lattice is not self.lattice and other.lattice != self.lattice:
            if other.lattice.dim != self.lattice.dim:
                raise ValueError("dimension mismatch")
            raise ValueError("fields live on different supports")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.lattice, -self.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs / scalar)

    def bar(self) -> "SpectralField":
        """Complex conjugate function: coefficient at k becomes conj(c_{-k})."""
        return SpectralField(self.lattice, np.conj(self.coeffs[self.lattice.neg]))

    def scale_classes(self, mult: np.ndarray) -> "SpectralField":
        """Multiply the coefficient at k by ``mult[class(k)]``."""
        return SpectralField(self.lattice, self.coeffs * np.asarray(mult)[self.lattice.cls])

    def agg(self, other: "SpectralField") -> np.ndarray:
        self._check(other)
        return self.lattice.agg(self.coeffs, other.coeffs)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))


@dataclass(frozen=True, eq=False)
class ConjugatePairState:
    """Pair ``(w, z)``; on the c.c. space ``z = conj(w)``.

    Also used for tangent vectors and vector-field values, which live in the
    same space.  The invariant is checked by :meth:`cc_defect`, not enforced,
    because intermediate arithmetic is carried out on general pairs.
    """

    first: SpectralField
    second: SpectralField

    def __post_init__(self):
        self.first._check(self.second)

    @classmethod
    def from_first(cls, w: SpectralField) -> "ConjugatePairState":
        return cls(w, w.bar())

    @classmethod
    def zeros(cls, lattice: Lattice) -> "ConjugatePairState":
        z = SpectralField.zeros(lattice)
        return cls(z, z)

    @property
    def lattice(self) -> Lattice:
        return self.first.lattice

    def __iter__(self):
        return iter((self.first, self.second))

    def __add__(self, other):
        return ConjugatePairState(self.first + other.first, self.second + other.second)

    def __sub__(self, other):
        return ConjugatePairState(self.first - other.first, self.second - other.second)

    def __neg__(self):
        return ConjugatePairState(-self.first, -self.second)

    def __mul__(self, scalar):
        return ConjugatePairState(self.first * scalar, self.second * scalar)

    __rmul__ = __mul__

    def swap(self) -> "ConjugatePairState":
        return ConjugatePairState(self.second, self.first)

    def cc_defect(self) -> float:
        return (self.second - self.first.bar()).max_abs()

    def symmetrized(self) -> "ConjugatePairState":
        """Nearest exact c.c. pair (average of the two representations of w)."""
        w = (self.first + self.second.bar()) * 0.5
        return ConjugatePairState.from_first(w)

    def norm(self, s: float) -> float:
        """``||(w, z)||_s := ||w||_s``."""
        return sobolev_norm(self.first, s)

    def norm_both(self, s: float = 0.0) -> float:
        return math.hypot(sobolev_norm(self.first, s), sobolev_norm(self.second, s))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.first.coeffs, self.second.coeffs])

    @classmethod
    def from_vector(cls, lattice: Lattice, vec: np.ndarray) -> "ConjugatePairState":
        m = lattice.size
        return cls(SpectralField(lattice, vec[:m]), SpectralField(lattice, vec[m:]))


@dataclass(frozen=True, eq=False)
class RealPairState:
    """``(position, velocity)`` of real-valued functions: ``c_{-k} = conj(c_k)``."""

    position: SpectralField
    velocity: SpectralField

    @property
    def lattice(self) -> Lattice:
        return self.position.lattice

    def __iter__(self):
        return iter((self.position, self.velocity))

    def __add__(self, other):
        return RealPairState(self.position + other.position, self.velocity + other.velocity)

    def __sub__(self, other):
        return RealPairState(self.position - other.position, self.velocity - other.velocity)

    def __mul__(self, scalar):
        return RealPairState(self.position * scalar, self.velocity * scalar)

    __rmul__ = __mul__

    def reality_defect(self) -> float:
        return max((self.position - self.position.bar()).max_abs(),
                   (self.velocity - self.velocity.bar()).max_abs())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.position.coeffs, self.velocity.coeffs])

    @classmethod
    def from_vector(cls, lattice: Lattice, vec: np.ndarray) -> "RealPairState":
        m = lattice.size
        return cls(SpectralField(lattice, vec[:m]), SpectralField(lattice, vec[m:]))


@dataclass(frozen=True)
class RegularityParams:
    s: float
    dim: int
    delta: float = 0.05

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("s must be nonnegative")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.dim not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")

    @property
    def m0(self) -> float:
        return 1.0 if self.dim == 1 else 1.5

    @property
    def m1(self) -> float:
        return 1.0 if self.dim == 1 else 2.0


def lambda_pow(field: SpectralField, sigma: float) -> SpectralField:
    """Fourier multiplier ``|D|^sigma``."""
    if sigma == 0:
        return field
    return field.scale_classes(field.lattice.class_radius ** sigma)


def pairing(w: SpectralField, h: SpectralField) -> complex:
    if w.dimension != h.dimension:
        raise ValueError("dimension mismatch")
    w._check(h)
    return complex(np.dot(w.coeffs, h.coeffs[w.lattice.neg]))


def sobolev_norm(field: SpectralField, s: float) -> float:
    lat = field.lattice
    weights = lat.radius ** (2 * s) if s else 1.0
    return float(np.sqrt(np.sum(np.abs(field.coeffs) ** 2 * weights)))


def rho_eval(x: float) -> float:
    if x < 0:
        raise ValueError("rho is defined for x >= 0")
    return -x / (1.0 + x + math.sqrt(1.0 + 2.0 * x))


def phi_inverse_eval(y: float, tol: float = 1e-14, max_iter: int = 100) -> float:
    """Solve ``x * sqrt(1 + 2x) = y`` for ``x >= 0``.

    Newton's method from ``y / (1 + y)``, falling back to bisection whenever
    a step leaves the bracket ``[0, y]``.
    """
    if y < 0:
        raise ValueError("phi is defined for y >= 0")
    if y == 0:
        return 0.0
    lo, hi = 0.0, float(y)
    x = y / (1.0 + y)
    for _ in range(max_iter):
        s = math.sqrt(1.0 + 2.0 * x)
        f = x * s - y
        if abs(f) <= tol * y:
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        x_new = x - f * s / (1.0 + 3.0 * x)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if x_new == x:
            return x
        x = x_new
    raise ArithmeticError(f"phi inverse did not converge for y={y!r}")


def _real(value: complex, scale: float, what: str) -> float:
    if abs(value.imag) > 1e-12 * max(1.0, scale):
        raise ValueError(f"{what} is not real on this pair (imag={value.imag:.3e})")
    return value.real


def q_value(eta: SpectralField, psi: SpectralField) -> complex:
    """``Q = (1/4) <Lambda(eta + psi), eta + psi>`` on general pairs."""
    s = eta + psi
    return 0.25 * pairing(lambda_pow(s, 1), s)


def q_functional(pair: ConjugatePairState) -> float:
    val = q_value(pair.first, pair.second)
    return max(_real(val, abs(val), "Q"), 0.0)


def p_functional(pair: ConjugatePairState) -> float:
    return phi_inverse_eval(q_functional(pair))


def _lam_pair(a: SpectralField, b: SpectralField) -> complex:
    return pairing(lambda_pow(a, 1), b)


def hamiltonian(kind: str, state) -> float:
    """Energy of ``state`` for ``kind`` in {physical, H1, H2, H3}."""
    if kind in ("physical", "H1"):
        if not isinstance(state, RealPairState):
            raise TypeError(f"{kind} Hamiltonian needs a RealPairState")
        u, v = state
        if kind == "physical":
            grad = pairing(lambda_pow(u, 1), lambda_pow(u, 1))
            val = 0.5 * pairing(v, v) + 0.5 * grad + 0.25 * grad**2
        else:
            quad = _lam_pair(u, u)
            val = 0.5 * _lam_pair(v, v) + 0.5 * quad + 0.25 * quad**2
        return _real(val, abs(val), kind)
    if kind in ("H2", "H3"):
        if not isinstance(state, ConjugatePairState):
            raise TypeError(f"{kind} Hamiltonian needs a ConjugatePairState")
        f, g = state
        if kind == "H2":
            q = q_value(f, g)
            val = _lam_pair(f, g) + q**2
        else:
            p = p_functional(state)
            root = math.sqrt(1.0 + 2.0 * p)
            val = (-p / (2.0 * root) * (_lam_pair(f, f) + _lam_pair(g, g))
                   + (1.0 + p) / root * _lam_pair(f, g) + p * p)
        return _real(val, abs(val), kind)
    raise ValueError(f"unknown Hamiltonian kind {kind!r}")


def random_field(lattice: Lattice, rng: np.random.Generator, norm: float | None = None,
                 s: float = 0.0, decay: float = 0.0) -> SpectralField:
    """Gaussian coefficients, optionally damped by ``|k|^-decay`` and rescaled."""
    c = rng.standard_normal(lattice.size) + 1j * rng.standard_normal(lattice.size)
    if decay:
        c = c * lattice.radius ** (-decay)
    f = SpectralField(lattice, c)
    if norm is not None:
        n = sobolev_norm(f, s)
        f = f * (norm / n) if n else f
    return f


def random_cc_pair(lattice: Lattice, rng: np.random.Generator, norm: float,
                   s: float | None = None, decay: float = 0.0) -> ConjugatePairState:
    """Random c.c. pair with ``||w||_s = norm`` (``s`` defaults to m1)."""
    s = lattice.m1 if s is None else s
    return ConjugatePairState.from_first(random_field(lattice, rng, norm, s, decay))


def random_real_field(lattice: Lattice, rng: np.random.Generator, norm: float | None = None,
                      s: float = 0.0) -> SpectralField:
    f = random_field(lattice, rng)
    f = (f + f.bar()) * 0.5
    if norm is not None:
        n = sobolev_norm(f, s)
        f = f * (norm / n) if n else f
    return f


# ---------------------------------------------------------------------------
# Text serialization


def format_float(x: float) -> str:
    return f"{x:.17g}"


def dump_field(field: SpectralField, label: str | None = None) -> str:
    lat = field.lattice
    max_r = float(lat.class_radius[-1])
    head = f"# dim={lat.dim} radius={format_float(max_r)} modes={lat.size}"
    if label:
        head += f" label={label}"
    lines = [head]
    for k, c in field.items():
        lines.append(" ".join([*map(str, k), format_float(c.real), format_float(c.imag)]))
    return "\n".join(lines) + "\n"


def load_field(text: str, lattice: Lattice | None = None) -> SpectralField:
    header = None
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            header = dict(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            continue
        rows.append(line.split())
    if header is None:
        raise ValueError("missing header line")
    dim = int(header["dim"])
    modes = [tuple(int(x) for x in r[:dim]) for r in rows]
    if lattice is None:
        lattice = Lattice(dim, modes)
    vals = {m: complex(float(r[dim]), float(r[dim + 1])) for m, r in zip(modes, rows)}
    return SpectralField.from_dict(lattice, vals)
