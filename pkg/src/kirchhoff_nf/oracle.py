"""Exact brute-force expansion of the normal-form construction in dimension one.

Fields are represented symbolically: each Fourier coefficient is a polynomial
over the Gaussian rationals in the variables ``u_j, v_j`` (the coefficients
of the state).  Every operator is written as an explicit loop over modes,
independently of the sphere-sum machinery of :mod:`vector_fields`, and every
composition is truncated by total degree.  Differentials are taken by
symbolic differentiation rather than from hand-derived formulas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from sympy.polys.domains import QQ, QQ_I
from sympy.polys.rings import ring

from .nf_coefficients import DEFAULT_TABLE, NormalFormCoefficientTable, sum_resonant

MAX_MODES = 8

ExactComplex = tuple  # (Fraction real, Fraction imag)


def _q(x) -> "QQ_I":
    if isinstance(x, tuple):
        return QQ_I(QQ(x[0]), QQ(x[1]))
    return QQ_I(QQ(Fraction(x)), QQ(0))


def _frac(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


# ---------------------------------------------------------------------------
# symbolic universe


class SymbolicUniverse:
    """Polynomial ring in ``u_j, v_j`` for a symmetric one-dimensional mode set."""

    def __init__(self, mode_set: Iterable[int]):
        modes = set()
        for m in mode_set:
            m = int(m[0]) if isinstance(m, tuple) else int(m)
            if m == 0:
                raise ValueError("the zero mode is excluded")
            modes.update((m, -m))
        if len(modes) > MAX_MODES:
            raise ValueError(f"mode set too large for exact expansion ({len(modes)} > {MAX_MODES})")
        self.modes = sorted(modes, key=lambda m: (abs(m), m))
        names = [f"u{m}" for m in self.modes] + [f"v{m}" for m in self.modes]
        self.ring, *gens = ring(",".join(n.replace("-", "m") for n in names), QQ_I)
        n = len(self.modes)
        self.u = dict(zip(self.modes, gens[:n]))
        self.v = dict(zip(self.modes, gens[n:]))
        self.pos = {m: i for i, m in enumerate(self.modes)}
        self.size = n
        self.zero = self.ring.zero

    # fields are pairs of dicts mode -> polynomial
    def state(self):
        return dict(self.u), dict(self.v)

    def zeros(self):
        return ({m: self.zero for m in self.modes}, {m: self.zero for m in self.modes})

    def trunc(self, p, max_degree: int):
        return self.ring.from_dict({e: c for e, c in p.items() if sum(e) <= max_degree})

    def homogeneous(self, p, degree: int):
        return self.ring.from_dict({e: c for e, c in p.items() if sum(e) == degree})


def _map(fn, fieldpair):
    return tuple({m: fn(p) for m, p in comp.items()} for comp in fieldpair)


def _add(a, b):
    return tuple({m: x[m] + y[m] for m in x} for x, y in zip(a, b))


def _sub(a, b):
    return tuple({m: x[m] - y[m] for m in x} for x, y in zip(a, b))


def _scale(a, c):
    return _map(lambda p: p * c, a)


def _pair(U: SymbolicUniverse, a: Mapping, b: Mapping):
    """``sum_j a_j b_{-j}``."""
    acc = U.zero
    for j in U.modes:
        acc += a[j] * b[-j]
    return acc


def _lam(U: SymbolicUniverse, a: Mapping, power: int = 1):
    return {m: a[m] * abs(m) ** power for m in U.modes}


def _d1(U, pair):
    w, z = pair
    return ({m: w[m] * _q((0, -abs(m))) for m in U.modes},
            {m: z[m] * _q((0, abs(m))) for m in U.modes})


def _q_value(U, pair):
    s = {m: pair[0][m] + pair[1][m] for m in U.modes}
    return _pair(U, _lam(U, s), s) * _q(Fraction(1, 4))


def _b3(U, pair):
    w, z = pair
    scal = (_pair(U, _lam(U, z), _lam(U, z)) - _pair(U, _lam(U, w), _lam(U, w))) * _q((0, Fraction(1, 4)))
    return ({m: z[m] * scal for m in U.modes}, {m: w[m] * scal for m in U.modes})


def _x3_plus(U, pair):
    w, z = pair
    first = {}
    for k in U.modes:
        acc = U.zero
        for j in U.modes:
            if abs(j) == abs(k):
                acc += w[j] * w[-j] * (j * j)
        first[k] = acc * _q((0, Fraction(-1, 4))) * z[k]
    return first, mirror_component(U, first)


def mirror_component(U: SymbolicUniverse, first: Mapping) -> dict:
    """Second component dictated by the real structure.

    ``F_2(u, v)_k = conj(F_1(conj v, conj u)_{-k})``: conjugate coefficients,
    send ``u_j -> v_{-j}`` and ``v_j -> u_{-j}``, and reflect the output mode.
    """
    n = U.size
    perm = [0] * (2 * n)
    for m, i in U.pos.items():
        perm[i] = n + U.pos[-m]       # u_m becomes v_{-m}
        perm[n + i] = U.pos[-m]       # v_m becomes u_{-m}
    out = {}
    for k in U.modes:
        terms = {}
        for e, c in first[-k].items():
            ne = [0] * (2 * n)
            for i, power in enumerate(e):
                if power:
                    ne[perm[i]] += power
            terms[tuple(ne)] = QQ_I(c.x, -c.y)
        out[k] = U.ring.from_dict(terms)
    return out


def _jvp(U, F, T, max_degree: int):
    """Directional derivative ``F'(state)[T]`` by symbolic differentiation."""
    out = []
    for comp in F:
        res = {}
        for k, p in comp.items():
            acc = U.zero
            for j in U.modes:
                if T[0][j]:
                    acc += p.diff(U.u[j]) * T[0][j]
                if T[1][j]:
                    acc += p.diff(U.v[j]) * T[1][j]
            res[k] = U.trunc(acc, max_degree)
        out.append(res)
    return tuple(out)


def _compose(U, F, G, max_degree: int):
    """``F(G)`` with ``G`` a pair of polynomial dicts substituted for ``(u, v)``."""
    subs = [(U.u[m], G[0][m]) for m in U.modes] + [(U.v[m], G[1][m]) for m in U.modes]
    out = []
    for comp in F:
        res = {}
        for k, p in comp.items():
            res[k] = U.trunc(p.compose(subs), max_degree)
        out.append(res)
    return tuple(out)


def _neumann(U, F_jac_source, rhs, max_degree: int, step_degree: int):
    """``(I + K)^{-1} rhs`` where ``K t = F'(state)[t] - t`` raises degree by ``step_degree``."""
    total = rhs
    term = rhs
    for _ in range(max_degree // step_degree + 1):
        kt = _sub(_jvp(U, F_jac_source, term, max_degree), term)
        term = _map(lambda p: -p, kt)
        if all(not p for comp in term for p in comp.values()):
            break
        total = _add(total, term)
    return _map(lambda p: U.trunc(p, max_degree), total)


# ---------------------------------------------------------------------------
# the two changes of variables


def _phi4(U, pair):
    """``(I + M(w, z))(w, z)`` with the bilinear sphere kernels written mode by mode."""
    w, z = pair
    first, second = {}, {}
    for k in U.modes:
        a_ww = c_zz = a_zz = c_ww = U.zero
        rk = abs(k)
        for j in U.modes:
            rj = abs(j)
            kc = _q(Fraction(rj * rj, 8 * (rj + rk)))
            c_zz += z[j] * z[-j] * kc
            c_ww += w[j] * w[-j] * kc
            if rj != rk:
                ka = _q(Fraction(rj * rj, 8 * (rj - rk)))
                a_ww += w[j] * w[-j] * ka
                a_zz += z[j] * z[-j] * ka
        first[k] = w[k] + (a_ww + c_zz) * z[k]
        second[k] = z[k] + (a_zz + c_ww) * w[k]
    return first, second


_ROW1 = (("A11", "uu", "uu", 0), ("C11", "uu", "vv", 0), ("F11", "vv", "vv", 0),
         ("A12", "uu", "uu", 1), ("B12", "uu", "uv", 1), ("C12", "uu", "vv", 1),
         ("D12", "uv", "vv", 1), ("F12", "vv", "vv", 1))


def _quartic_first(U, pair, table: NormalFormCoefficientTable):
    u, v = pair
    src = {"uu": (u, u), "uv": (u, v), "vv": (v, v)}
    coeff_cache = {}

    def coeff(kind, rj, rl, rk):
        key = (kind, rj, rl, rk)
        if key not in coeff_cache:
            coeff_cache[key] = _q(table.value(kind, rj * rj, rl * rl, rk * rk, exact=True))
        return coeff_cache[key]

    first = {}
    for k in U.modes:
        acc = U.zero
        for kind, p1, p2, slot in _ROW1:
            (a, b), (c, d) = src[p1], src[p2]
            inner = U.zero
            for j in U.modes:
                for l in U.modes:
                    cf = coeff(kind, abs(j), abs(l), abs(k))
                    if cf:
                        inner += a[j] * b[-j] * c[l] * d[-l] * cf
            acc += inner * (u[k] if slot == 0 else v[k])
        first[k] = acc
    return first


def quartic_field(U: SymbolicUniverse, table: NormalFormCoefficientTable = DEFAULT_TABLE):
    """``M(u, v)(u, v)``; the second row follows from the real structure."""
    first = _quartic_first(U, U.state(), table)
    return first, mirror_component(U, first)


def _eta_psi_series(U, pair, max_degree: int):
    """Taylor expansion of the diagonalized field up to ``max_degree``."""
    q = _q_value(U, pair)
    lin = _d1(U, pair)
    cub = _b3(U, pair)
    # sqrt(1 + 2P) = 1 + Q - 3/2 Q^2 + ...,  1/(1 + 2P) = 1 - 2Q + 6Q^2 + ...
    root = U.ring.one + q - q * q * _q(Fraction(3, 2))
    inv = U.ring.one - q * _q(2) + q * q * _q(6)
    out = _add(_map(lambda p: p * root, lin), _map(lambda p: p * inv, cub))
    return _map(lambda p: U.trunc(p, max_degree), out)


def _calp_series(U, pair, max_degree: int):
    """``sqrt(1 + 2 P(phi4(w, z))) - 1`` to ``max_degree - 1``."""
    q = U.trunc(_q_value(U, _phi4(U, pair)), max_degree - 1)
    return U.trunc(q - q * q * _q(Fraction(3, 2)), max_degree - 1)


# ---------------------------------------------------------------------------
# exported vector fields


@dataclass(frozen=True)
class Monomial:
    """Canonical monomial: sorted ``(variable, mode, power)`` factors and an output mode."""

    factors: tuple
    output_mode: int

    def degree(self) -> int:
        return sum(p for _, _, p in self.factors)

    def modes(self) -> list:
        return [m for _, m, p in self.factors for _ in range(p)]

    def text(self) -> str:
        fac = " ".join(f"{var}[{m}]^{p}" for var, m, p in self.factors)
        return f"{fac} -> {self.output_mode}"


@dataclass
class PolynomialVectorField:
    """Two components, each a map ``Monomial -> (Fraction, Fraction)`` with no zero entries."""

    components: tuple = field(default_factory=lambda: ({}, {}))

    @classmethod
    def from_symbolic(cls, U: SymbolicUniverse, pair) -> "PolynomialVectorField":
        comps = []
        names = [("u", m) for m in U.modes] + [("v", m) for m in U.modes]
        for comp in pair:
            out = {}
            for k, p in comp.items():
                for e, c in p.items():
                    if not c:
                        continue
                    fac = tuple(sorted((names[i][0], names[i][1], pw) for i, pw in enumerate(e) if pw))
                    out[Monomial(fac, k)] = (_frac(c.x), _frac(c.y))
            comps.append(out)
        return cls(tuple(comps))

    def __add__(self, other):
        return PolynomialVectorField(tuple(_combine(a, b, 1) for a, b in zip(self.components, other.components)))

    def __sub__(self, other):
        return PolynomialVectorField(tuple(_combine(a, b, -1) for a, b in zip(self.components, other.components)))

    def __len__(self):
        return sum(len(c) for c in self.components)

    def degrees(self) -> set:
        return {m.degree() for c in self.components for m in c}

    def evaluate(self, u: Mapping, v: Mapping) -> tuple[dict, dict]:
        """Numeric value at coefficients ``u[m], v[m]``; returns two dicts ``mode -> complex``."""
        vals = {"u": u, "v": v}
        out = []
        for comp in self.components:
            res = {}
            for mono, (re, im) in comp.items():
                term = complex(float(re), float(im))
                for var, m, pw in mono.factors:
                    term *= vals[var][m] ** pw
                res[mono.output_mode] = res.get(mono.output_mode, 0j) + term
            out.append(res)
        return out[0], out[1]

    def dumps(self) -> str:
        lines = []
        for c, comp in enumerate(self.components):
            for mono in sorted(comp, key=lambda m: (m.output_mode, m.factors)):
                re, im = comp[mono]
                fac = ",".join(f"{var}:{m}:{p}" for var, m, p in mono.factors)
                lines.append(f"{c + 1} {mono.output_mode} {fac} "
                             f"{re.numerator}/{re.denominator} {im.numerator}/{im.denominator}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def loads(cls, text: str) -> "PolynomialVectorField":
        comps = ({}, {})
        for line in text.splitlines():
            if not line.strip():
                continue
            c, k, fac, re, im = line.split()
            factors = []
            for item in fac.split(","):
                var, m, p = item.split(":")
                factors.append((var, int(m), int(p)))
            comps[int(c) - 1][Monomial(tuple(factors), int(k))] = (Fraction(re), Fraction(im))
        return cls(comps)


def _combine(a: dict, b: dict, sign: int) -> dict:
    out = dict(a)
    for mono, (re, im) in b.items():
        r0, i0 = out.get(mono, (Fraction(0), Fraction(0)))
        val = (r0 + sign * re, i0 + sign * im)
        if val[0] or val[1]:
            out[mono] = val
        else:
            out.pop(mono, None)
    return out


@dataclass
class FieldComparison:
    differences: list  # (component, Monomial, left, right)

    @property
    def empty(self) -> bool:
        return not self.differences

    def __len__(self):
        return len(self.differences)


def compare_fields(a: PolynomialVectorField, b: PolynomialVectorField) -> FieldComparison:
    zero = (Fraction(0), Fraction(0))
    diffs = []
    for c, (ca, cb) in enumerate(zip(a.components, b.components)):
        for mono in sorted(set(ca) | set(cb), key=lambda m: (m.output_mode, m.factors)):
            left, right = ca.get(mono, zero), cb.get(mono, zero)
            if left != right:
                diffs.append((c + 1, mono, left, right))
    return FieldComparison(diffs)


# ---------------------------------------------------------------------------
# expansions


def _first_step_symbolic(U, max_degree: int):
    state = U.state()
    phi4 = _phi4(U, state)
    x = _compose(U, _eta_psi_series(U, state, max_degree), phi4, max_degree)
    return _neumann(U, phi4, x, max_degree, 2)


def _graded_remainder(U, total, calp, degree: int):
    """Remove ``P (D1 + X3+)`` from the homogeneous part of ``total`` of the given degree."""
    state = U.state()
    lin, cub = _d1(U, state), _x3_plus(U, state)
    out = _map(lambda p: U.homogeneous(p, degree), total)
    if degree == 3:
        return _sub(out, _map(lambda p: U.homogeneous(p * calp, 3), lin))
    lower = _add(_map(lambda p: p * calp, lin), _map(lambda p: p * calp, cub))
    return _sub(out, _map(lambda p: U.homogeneous(p, degree), lower))


def expand_pushforward(mode_set, max_degree: int = 5, stage: str = "first",
                       table: NormalFormCoefficientTable = DEFAULT_TABLE,
                       graded: bool = True) -> PolynomialVectorField:
    """Exact transformed field, homogeneous part of degree ``max_degree``.

    ``stage="first"`` pushes the diagonalized field through the first normal
    form map; ``stage="second"`` pushes that result through the second one.
    With ``graded`` (default) the scalar part ``P (D1 + X3+)`` is removed, so
    the degree-3 result is X3+ and the degree-5 result is X5+ (resp. W5).
    """
    if max_degree not in (3, 5):
        raise ValueError("max_degree must be 3 or 5")
    U = SymbolicUniverse(mode_set)
    total = _first_step_symbolic(U, max_degree)
    if stage == "second":
        quart = quartic_field(U, table)
        phi5 = _add(U.state(), quart)
        # the shift is quintic, so below degree 9 only the first Taylor term survives
        total = _add(total, _jvp(U, total, quart, max_degree))
        total = _neumann(U, phi5, total, max_degree, 4)
    elif stage != "first":
        raise ValueError(f"unknown stage {stage!r}")
    if graded:
        # P(phi5(u)) and P(u) agree below degree 6
        total = _graded_remainder(U, total, _calp_series(U, U.state(), max_degree), max_degree)
    else:
        total = _map(lambda p: U.homogeneous(p, max_degree), total)
    return PolynomialVectorField.from_symbolic(U, total)


def expand_x3_plus_direct(mode_set) -> PolynomialVectorField:
    U = SymbolicUniverse(mode_set)
    return PolynomialVectorField.from_symbolic(U, _x3_plus(U, U.state()))


def _resonant_first(U: SymbolicUniverse) -> dict:
    u, v = U.state()
    first = {}
    for k in U.modes:
        rk = abs(k)
        acc = U.zero
        for j in U.modes:
            rj = abs(j)
            for l in U.modes:
                rl = abs(l)
                if rj == rl:
                    gate = Fraction(0) if rl == rk else Fraction(1, rl - rk)
                    c = Fraction(rj**2 * rl**2, 32) * (Fraction(1, rj + rk) - gate)
                    acc += u[j] * u[-j] * v[l] * v[-l] * u[k] * _q((0, c))
                if sum_resonant(rk * rk, rj * rj, rl * rl):
                    acc += u[j] * u[-j] * u[l] * u[-l] * v[k] * _q((0, Fraction(3 * rj * rl * rk, 32)))
                if rj == rk:
                    gate = Fraction(0) if rl == rj else Fraction(rl, rl - rj)
                    c = Fraction(rj * rj * rl, 16) * (6 + Fraction(rl, rl + rj) + gate)
                    acc += u[j] * u[-j] * u[l] * v[-l] * v[k] * _q((0, c))
                if rj - rl == rk:
                    acc += u[j] * u[-j] * v[l] * v[-l] * v[k] * _q((0, Fraction(3 * rj * rl * rk, 16)))
        first[k] = acc
    return first


def expand_w5_direct(mode_set) -> PolynomialVectorField:
    """The four surviving resonant sums, second component from the real structure."""
    U = SymbolicUniverse(mode_set)
    first = _resonant_first(U)
    return PolynomialVectorField.from_symbolic(U, (first, mirror_component(U, first)))


def expand_x5_plus(mode_set) -> PolynomialVectorField:
    return expand_pushforward(mode_set, 5, "first")


def homological_lhs(mode_set, table: NormalFormCoefficientTable = DEFAULT_TABLE,
                    x5: PolynomialVectorField | None = None) -> PolynomialVectorField:
    """``X5+ + D1(M(u,v)(u,v)) - K(u,v) D1(u,v)`` with K from symbolic differentiation."""
    U = SymbolicUniverse(mode_set)
    state = U.state()
    quart = quartic_field(U, table)
    lin = _d1(U, state)
    corr = _sub(_d1(U, quart), _jvp(U, quart, lin, 5))
    out = PolynomialVectorField.from_symbolic(U, corr)
    return (expand_x5_plus(mode_set) if x5 is None else x5) + out


RESONANT_PATTERNS = ("sphere", "sum", "diagonal", "difference")


def _split_pairs(modes: list) -> list | None:
    """Radii of a multiset of modes arranged as ``{a, -a}`` pairs, else None."""
    rest = sorted(modes)
    radii = []
    while rest:
        m = rest.pop(0)
        if -m not in rest:
            return None
        rest.remove(-m)
        radii.append(abs(m))
    return radii


def classify_monomial(mono: Monomial, component: int) -> list[str]:
    """Resonant index patterns matched by a quintic monomial of the given component."""
    own, other = ("u", "v") if component == 1 else ("v", "u")
    lists = {"u": [], "v": []}
    for var, m, p in mono.factors:
        lists[var].extend([m] * p)
    k = mono.output_mode
    rk = abs(k)
    found = []
    if k in lists[own]:
        a, b = list(lists[own]), list(lists[other])
        a.remove(k)
        pa, pb = _split_pairs(a), _split_pairs(b)
        if pa and pb and len(pa) == 1 and len(pb) == 1 and pa[0] == pb[0]:
            found.append("sphere")
    if k in lists[other]:
        a, b = list(lists[own]), list(lists[other])
        b.remove(k)
        pa = _split_pairs(a)
        if pa and len(pa) == 2 and not b and pa[0] + pa[1] == rk:
            found.append("sum")
        pb = _split_pairs(b)
        if pa and pb and len(pa) == 1 and len(pb) == 1 and pa[0] - pb[0] == rk:
            found.append("difference")
        if len(a) == 3 and len(b) == 1:
            for m in set(a):
                rest = list(a)
                rest.remove(m)
                if rest[0] == -rest[1] and abs(rest[0]) == rk and m == -b[0]:
                    found.append("diagonal")
                    break
    return found


@dataclass
class HomologicalReport:
    mode_set: tuple
    discrepancies: FieldComparison
    surviving: int
    nonresonant: list

    @property
    def passed(self) -> bool:
        return self.discrepancies.empty and not self.nonresonant


def verify_homological_equation(mode_set, table: NormalFormCoefficientTable = DEFAULT_TABLE,
                                x5: PolynomialVectorField | None = None) -> HomologicalReport:
    """Compare the homological left side with the resonant sums, monomial by monomial."""
    lhs = homological_lhs(mode_set, table, x5)
    rhs = expand_w5_direct(mode_set)
    comp = compare_fields(lhs, rhs)
    nonres = [(c + 1, m) for c, part in enumerate(lhs.components)
              for m in part if not classify_monomial(m, c + 1)]
    return HomologicalReport(tuple(sorted(set(abs(int(m)) for m in mode_set))), comp, len(lhs), nonres)


def evaluate_on(field_: PolynomialVectorField, pair) -> tuple[dict, dict]:
    """Evaluate at the coefficients of a numeric one-dimensional pair state."""
    u = {int(k[0]): c for k, c in pair.first.items()}
    v = {int(k[0]): c for k, c in pair.second.items()}
    return field_.evaluate(u, v)
