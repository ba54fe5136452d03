"""Empirical verification of the WKB error-bound scalings.

Every bound proved for this system is existential in its constant, so the
strongest falsifiable desk-scale test is an envelope fit: measure the
quantity at the smallest grid point, solve for the constant, and demand
that every larger instance stays under the fitted envelope (plus a small
documented slack absorbing quadrature noise).  The least-squares log-log
slope of the measured quantity is reported alongside.
"""

from __future__ import annotations

import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .evolution import wkb_deviation_grid
from .model import (
    DEFAULT_GAP_TOL,
    DEFAULT_ODE_TOL,
    DEFAULT_QUAD_TOL,
    Mode,
    bump,
    dust_scale,
    is_physical_eigenvalue,
    spectral_norm,
)
from .projector import (
    k_m_apply,
    k_wkb_apply,
    negative_projection,
    signature_operator,
    signature_operator_wkb,
    wkb_signature_leading_term,
)

DEFAULT_SLACK = 0.05
DEFAULT_TAU0 = float(np.pi / 2)
#: Sampling window for pointwise deviation suprema (away from the endpoints).
W_WINDOW_MARGIN = 0.1
W_WINDOW_POINTS = 41


class StudyKind(enum.Enum):
    S_WKB_BOUND = "s_wkb_bound"
    P_WKB_BOUND = "p_wkb_bound"
    LEADING_TERM_BOUND = "leading_term_bound"
    W_DEVIATION = "w_deviation"


@dataclass(frozen=True)
class LambdaSpec:
    """How the spatial eigenvalue is chosen at each grid point.

    fixed: always ``value``.  track_mrmax: nearest physical eigenvalue to
    k * (m r_max).  track_power: nearest physical eigenvalue to
    (m r_max) ** exponent.
    """

    kind: str = "fixed"
    value: float = 1.5
    k: float = 1.0
    exponent: float = 0.8

    def resolve(self, m_rmax: float) -> float:
        if self.kind == "fixed":
            return self.value
        if self.kind == "track_mrmax":
            return nearest_physical_eigenvalue(self.k * m_rmax)
        if self.kind == "track_power":
            return nearest_physical_eigenvalue(m_rmax ** self.exponent)
        raise InvalidParameter(f"unknown lambda spec kind {self.kind!r}")


def nearest_physical_eigenvalue(x: float) -> float:
    """Closest half-integer of magnitude >= 3/2 to x (sign preserved)."""
    sign = -1.0 if x < 0 else 1.0
    mag = max(abs(x), 1.5)
    half = round(mag - 0.5) + 0.5
    return sign * max(half, 1.5)


@dataclass(frozen=True)
class StudyRecord:
    m_rmax: float
    lam: float
    lambda_ratio: float
    observable: str
    measured: float
    envelope: float
    fitted_constant: float
    passed: bool


@dataclass(frozen=True)
class StudyResult:
    kind: StudyKind
    records: tuple
    fitted_constant: float
    slope: float
    slack: float
    passed: bool

    def first_failure(self):
        for rec in self.records:
            if not rec.passed:
                return rec
        return None


@dataclass(frozen=True)
class ProbeSpec:
    """Serializable bump description for the projector studies."""

    support: tuple = (1.0, 2.0)
    direction: tuple = (1.0 + 0.0j, 0.0 + 0.0j)
    amplitude: float = 1.0

    def build(self):
        return bump(self.support, np.array(self.direction, dtype=complex),
                    self.amplitude)


def _envelope_shape(kind: StudyKind, m_rmax: float, mass: float,
                    r_max: float, probe_l1: float) -> float:
    if kind is StudyKind.S_WKB_BOUND:
        return mass ** -0.2 * r_max ** 0.8
    if kind is StudyKind.P_WKB_BOUND:
        return m_rmax ** -0.2 * r_max * probe_l1
    if kind is StudyKind.LEADING_TERM_BOUND:
        return 1.0 / mass
    if kind is StudyKind.W_DEVIATION:
        return m_rmax ** -0.2
    raise InvalidParameter(f"unknown study kind {kind}")


def _measure(kind: StudyKind, m_rmax: float, lam: float, mass: float,
             r_max: float, tau0: float, probe: ProbeSpec | None,
             ode_tol: float, quad_tol: float, gap_tol: float) -> float:
    mode = Mode(lam=lam, mass=mass, tau0=tau0,
                physical=is_physical_eigenvalue(lam))
    scale = dust_scale(r_max)
    if kind is StudyKind.S_WKB_BOUND:
        s = signature_operator(mode, scale, tol=quad_tol, ode_tol=ode_tol)
        sw = signature_operator_wkb(mode, scale, tol=quad_tol, ode_tol=ode_tol)
        return spectral_norm(s.s.matrix - sw.s.matrix)
    if kind is StudyKind.P_WKB_BOUND:
        phi = probe.build()
        s = signature_operator(mode, scale, tol=quad_tol, ode_tol=ode_tol)
        sw = signature_operator_wkb(mode, scale, tol=quad_tol, ode_tol=ode_tol)
        p = -(negative_projection(s, gap_tol).matrix
              @ k_m_apply(mode, scale, phi, tol=ode_tol).value)
        pw = -(negative_projection(sw, gap_tol).matrix
               @ k_wkb_apply(mode, scale, phi, tol=ode_tol).value)
        return float(np.linalg.norm(p - pw))
    if kind is StudyKind.LEADING_TERM_BOUND:
        sw = signature_operator_wkb(mode, scale, tol=quad_tol, ode_tol=ode_tol)
        lead = wkb_signature_leading_term(mode, scale)
        return spectral_norm(sw.s.matrix - lead.matrix)
    if kind is StudyKind.W_DEVIATION:
        taus = np.linspace(W_WINDOW_MARGIN, scale.tau_end - W_WINDOW_MARGIN,
                           W_WINDOW_POINTS)
        return float(max(wkb_deviation_grid(mode, scale, taus, tol=ode_tol)))
    raise InvalidParameter(f"unknown study kind {kind}")


def _point_task(args):
    kind_value, m_rmax, lam, mass, r_max, tau0, probe, tols = args
    kind = StudyKind(kind_value)
    measured = _measure(kind, m_rmax, lam, mass, r_max, tau0, probe, *tols)
    return measured


def run_study(kind: StudyKind, grid, lam_spec: LambdaSpec = LambdaSpec(),
              probe: ProbeSpec | None = None,
              leading_r_max: float = 1.0,
              tau0: float = DEFAULT_TAU0,
              slack: float = DEFAULT_SLACK,
              ode_tol: float = DEFAULT_ODE_TOL,
              quad_tol: float = DEFAULT_QUAD_TOL,
              gap_tol: float = DEFAULT_GAP_TOL,
              jobs: int = 1) -> StudyResult:
    """Envelope study over an ascending grid of m * r_max products.

    The dust model is used throughout with unit mass, except for the
    leading-term study which holds ``leading_r_max`` fixed and reads the
    grid as masses.  The constant is fitted at the first grid point
    (serially); remaining points may be evaluated in parallel.
    """
    grid = [float(x) for x in grid]
    if len(grid) < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameter("grid must be a nonempty ascending sequence")
    if any(x <= 1.0 for x in grid):
        raise InvalidParameter("every grid value must exceed 1 (bound hypothesis)")
    if kind is StudyKind.P_WKB_BOUND and probe is None:
        probe = ProbeSpec()

    points = []
    for m_rmax in grid:
        lam = lam_spec.resolve(m_rmax)
        if kind is StudyKind.LEADING_TERM_BOUND:
            mass, r_max = m_rmax / leading_r_max, leading_r_max
        else:
            mass, r_max = 1.0, m_rmax
        points.append((m_rmax, lam, mass, r_max))

    probe_l1 = probe.build().l1_norm if probe is not None else 1.0
    tols = (ode_tol, quad_tol, gap_tol)
    tasks = [(kind.value, m_rmax, lam, mass, r_max, tau0, probe, tols)
             for (m_rmax, lam, mass, r_max) in points]

    measured = [_point_task(tasks[0])]
    rest = tasks[1:]
    if rest:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                measured.extend(pool.map(_point_task, rest))
        else:
            measured.extend(_point_task(t) for t in rest)

    shapes = [_envelope_shape(kind, m_rmax, mass, r_max, probe_l1)
              for (m_rmax, lam, mass, r_max) in points]
    if shapes[0] <= 0 or measured[0] <= 0:
        raise InvalidParameter("degenerate fit point; cannot calibrate envelope")
    c_fit = measured[0] / shapes[0]

    records = []
    for (m_rmax, lam, mass, r_max), meas, shape in zip(points, measured, shapes):
        envelope = (1.0 + slack) * c_fit * shape
        records.append(StudyRecord(
            m_rmax=m_rmax, lam=lam, lambda_ratio=lam / m_rmax,
            observable=kind.value, measured=meas, envelope=envelope,
            fitted_constant=c_fit, passed=bool(meas <= envelope)))

    logs = np.log(np.asarray(grid))
    logm = np.log(np.maximum(np.asarray(measured), 1e-300))
    slope = float(np.polyfit(logs, logm, 1)[0]) if len(grid) > 1 else 0.0
    return StudyResult(kind=kind, records=tuple(records),
                       fitted_constant=c_fit, slope=slope, slack=slack,
                       passed=all(r.passed for r in records))
