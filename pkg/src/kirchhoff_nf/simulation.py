"""Time integration of every implemented system and the conjugacy experiment.

All flows use the classic fourth-order Runge-Kutta scheme on the flattened
coefficient vector.  After each step the c.c. (or reality) constraint is
re-checked and, if the drift exceeds ``SYMMETRY_DRIFT_TOL``, the state is
projected back and the event is logged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .nf_coefficients import DEFAULT_TABLE, NormalFormCoefficientTable
from .shell_dynamics import ShellSpectrum, project_to_shells, shell_rhs
from .spectral_core import (
    ConjugatePairState,
    Lattice,
    RealPairState,
    SpectralField,
    hamiltonian,
    random_cc_pair,
    sobolev_norm,
)
from .transforms import (
    DEFAULT_DELTA,
    BallError,
    compose_full,
    compose_full_inverse,
    phi1_forward,
    phi2_forward,
    phi4_inverse,
    phi5_inverse,
    phi_next,
    phi_next_inverse,
)
from .vector_fields import energy_rate_total, energy_rate_z6, rhs_eta_psi, rhs_fg, rhs_physical, w_total

log = logging.getLogger(__name__)

SYSTEMS = ("physical", "fg", "etapsi", "normalized", "shell")
SYMMETRY_DRIFT_TOL = 1e-13
CONJUGACY_CONSTANT = 50.0
CONJUGACY_FLOOR = 1e-10


class IntegrationError(RuntimeError):
    """A right-hand side failed mid-flow; carries the step index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class FlowSpec:
    """How to evaluate, flatten and re-symmetrize the states of one system."""

    name: str
    rhs: Callable
    to_vector: Callable
    from_vector: Callable
    defect: Callable
    repair: Callable


def _real_repair(state: RealPairState) -> RealPairState:
    u, v = state
    return RealPairState((u + u.bar()) * 0.5, (v + v.bar()) * 0.5)


def flow_spec(system: str, lattice: Lattice | None = None, delta: float = DEFAULT_DELTA,
              table: NormalFormCoefficientTable = DEFAULT_TABLE,
              sq_radii: tuple | None = None) -> FlowSpec:
    if system == "physical":
        return FlowSpec(system, rhs_physical, RealPairState.to_vector,
                        lambda vec: RealPairState.from_vector(lattice, vec),
                        RealPairState.reality_defect, _real_repair)
    if system == "shell":
        def rhs(spec):
            dS, dB = shell_rhs(spec)
            return np.concatenate([dS.astype(complex), dB])
        return FlowSpec(system, rhs, ShellSpectrum.to_vector,
                        lambda vec: ShellSpectrum.from_vector(sq_radii, vec),
                        lambda spec: 0.0, lambda spec: spec)
    rhs = {
        "fg": rhs_fg,
        "etapsi": rhs_eta_psi,
        "normalized": lambda pair: w_total(pair, delta, table),
    }.get(system)
    if rhs is None:
        raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    return FlowSpec(system, rhs, ConjugatePairState.to_vector,
                    lambda vec: ConjugatePairState.from_vector(lattice, vec),
                    ConjugatePairState.cc_defect, ConjugatePairState.symmetrized)


def _support_mask(vec: np.ndarray, half: int) -> np.ndarray:
    nz = vec != 0
    return nz[:half] | nz[half:]


def integrate(flow: FlowSpec, state, dt: float, steps: int, record_every: int = 1,
              check_support: bool = True) -> Iterator[tuple[int, float, object]]:
    """Yield ``(step, t, state)`` at step 0, every ``record_every`` steps and at the end."""
    if dt <= 0 or steps < 0:
        raise ValueError("dt must be positive and steps nonnegative")

    def f(vec, n):
        try:
            out = flow.rhs(flow.from_vector(vec))
        except (BallError, ArithmeticError) as exc:
            raise IntegrationError(n, exc) from exc
        return out if isinstance(out, np.ndarray) else flow.to_vector(out)

    y = flow.to_vector(state)
    half = y.size // 2
    yield 0, 0.0, state
    for n in range(1, steps + 1):
        k1 = f(y, n)
        if check_support and flow.name != "shell":
            outside = _support_mask(k1, half) & ~_support_mask(y, half)
            if np.any(outside):
                raise IntegrationError(n, ValueError("right-hand side left the support of the state"))
        k2 = f(y + 0.5 * dt * k1, n)
        k3 = f(y + 0.5 * dt * k2, n)
        k4 = f(y + dt * k3, n)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        current = flow.from_vector(y)
        drift = flow.defect(current)
        if drift > SYMMETRY_DRIFT_TOL:
            log.info("step %d: symmetry drift %.3e, re-symmetrizing", n, drift)
            current = flow.repair(current)
            y = flow.to_vector(current)
        if n % record_every == 0 or n == steps:
            yield n, n * dt, current


# ---------------------------------------------------------------------------
# initial data and diagnostics


def initial_pair(lattice: Lattice, coefficients: dict | None = None, amplitude: float = 1e-2,
                 seed: int = 0) -> ConjugatePairState:
    """c.c. pair from explicit first-component coefficients, or seeded random with ``||w||_m1 = amplitude``."""
    if coefficients:
        return ConjugatePairState.from_first(SpectralField.from_dict(lattice, coefficients))
    if amplitude == 0:
        return ConjugatePairState.zeros(lattice)
    return random_cc_pair(lattice, np.random.default_rng(seed), amplitude)


def state_for_system(system: str, pair: ConjugatePairState):
    """Express the complex initial pair in the variables of ``system``."""
    if system == "physical":
        q, p = phi2_forward(*pair)
        return phi1_forward(q, p)
    if system == "shell":
        return project_to_shells(pair)
    return pair


def to_normalized(system: str, state, delta: float = DEFAULT_DELTA,
                  table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugatePairState:
    """Map a state of ``system`` back to the normalized coordinates."""
    if system == "physical":
        return compose_full_inverse(state, delta, table)
    if system == "fg":
        return phi_next_inverse(state, delta, table)
    if system == "etapsi":
        return phi5_inverse(phi4_inverse(state), delta, table)
    if system == "normalized":
        return state
    raise ValueError(f"no normalized coordinates for system {system!r}")


def energy_of(system: str, state, delta: float = DEFAULT_DELTA,
              table: NormalFormCoefficientTable = DEFAULT_TABLE) -> float:
    """Conserved energy in the natural variables of ``system``."""
    if system == "physical":
        return hamiltonian("physical", state)
    if system == "fg":
        return hamiltonian("H2", state)
    if system == "etapsi":
        return hamiltonian("H3", state)
    if system == "normalized":
        return hamiltonian("physical", compose_full(state, delta, table))
    raise ValueError(f"no Hamiltonian for system {system!r}")


def trajectory_norm(state, s: float) -> float:
    first = state.position if isinstance(state, RealPairState) else state.first
    return sobolev_norm(first, s)


@dataclass
class Record:
    t: float
    norms: list[float]
    energy: float
    z6: list[float]
    z_ge8: float


def diagnostics(system: str, t: float, state, s_list, delta: float = DEFAULT_DELTA,
                table: NormalFormCoefficientTable = DEFAULT_TABLE) -> Record:
    """Norms, energy and energy rates; rates use the normalized coordinates of ``state``."""
    normalized = to_normalized(system, state, delta, table)
    z6 = [energy_rate_z6(normalized, s) for s in s_list]
    _, z_ge8 = energy_rate_total(normalized, max(s_list), delta, table)
    return Record(t, [trajectory_norm(state, s) for s in s_list],
                  energy_of(system, state, delta, table), z6, z_ge8)


def csv_header(s_list) -> list[str]:
    return (["t"] + [f"norm_s{s:g}" for s in s_list] + ["H"]
            + [f"z6_s{s:g}" for s in s_list] + ["z_ge8"])


def csv_row(rec: Record) -> list[str]:
    vals = [rec.t, *rec.norms, rec.energy, *rec.z6, rec.z_ge8]
    return [f"{x:.17g}" for x in vals]


# ---------------------------------------------------------------------------
# conservation and conjugacy experiments


def energy_drift(system: str, pair: ConjugatePairState, dt: float, steps: int,
                 record_every: int = 100) -> float:
    """Largest relative change of the system's Hamiltonian along its flow."""
    state = state_for_system(system, pair)
    flow = flow_spec(system, pair.lattice)
    h0 = energy_of(system, state)
    worst = 0.0
    for _, _, st in integrate(flow, state, dt, steps, record_every):
        worst = max(worst, abs(energy_of(system, st) - h0))
    return worst / abs(h0) if h0 else worst


def shell_invariant_drift(spec: ShellSpectrum, dt: float, steps: int) -> float:
    """Relative change of ``sum lambda S_lambda`` per unit time along the shell flow."""
    flow = flow_spec("shell", sq_radii=spec.sq_radii)
    e0 = spec.sobolev_sq(0.5)
    worst = 0.0
    for _, t, st in integrate(flow, spec, dt, steps, record_every=max(1, steps // 50)):
        worst = max(worst, abs(st.sobolev_sq(0.5) - e0))
    total_time = dt * steps
    rel = worst / abs(e0) if e0 else worst
    return rel / total_time if total_time else rel


@dataclass
class ConjugacyReport:
    dt: float
    steps: int
    times: list[float] = field(default_factory=list)
    discrepancies: list[float] = field(default_factory=list)
    constant: float = CONJUGACY_CONSTANT

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancies, default=0.0)

    @property
    def threshold(self) -> float:
        return self.constant * (self.dt**4 + CONJUGACY_FLOOR)

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.threshold


def conjugacy_experiment(pair: ConjugatePairState, dt: float, steps: int, record_every: int = 100,
                         delta: float = DEFAULT_DELTA,
                         table: NormalFormCoefficientTable = DEFAULT_TABLE) -> ConjugacyReport:
    """Integrate the (f, g) flow and the normalized flow from related data and compare.

    The normalized state is pushed forward by the composition of the three
    nonlinear maps at every recorded time; the discrepancy is the largest
    coefficient difference against the (f, g) trajectory.
    """
    lat = pair.lattice
    if pair.norm(lat.m1) > delta / 2:
        raise BallError(f"conjugacy needs ||u||_m1 <= delta/2 = {delta / 2}")
    report = ConjugacyReport(dt, steps)
    fg_flow = integrate(flow_spec("fg", lat), phi_next(pair, table), dt, steps, record_every)
    nf_flow = integrate(flow_spec("normalized", lat, delta, table), pair, dt, steps, record_every)
    for (_, t, fg), (_, _, nf) in zip(fg_flow, nf_flow):
        diff = (phi_next(nf, table) - fg).to_vector()
        report.times.append(t)
        report.discrepancies.append(float(np.max(np.abs(diff), initial=0.0)))
    return report


def conjugacy_order(pair: ConjugatePairState, coarse_dt: float, total_time: float,
                    **kwargs) -> tuple[float, float, float]:
    """Discrepancies at ``coarse_dt`` and ``coarse_dt / 2`` and their ratio (about 16 for RK4)."""
    errs = []
    for dt in (coarse_dt, coarse_dt / 2):
        steps = int(round(total_time / dt))
        errs.append(conjugacy_experiment(pair, dt, steps, record_every=steps, **kwargs).max_discrepancy)
    ratio = errs[0] / errs[1] if errs[1] else float("inf")
    return errs[0], errs[1], ratio
