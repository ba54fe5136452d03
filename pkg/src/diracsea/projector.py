"""Signature operator, causal fundamental solution, and the mode projector.

Per mode, the indefinite space-time pairing is represented on the 2-dim
fiber at tau0 by the Hermitian signature matrix

    S = integral over the lifetime of  U(tau)^dagger sigma3 U(tau) R(tau),

the causal fundamental solution maps a probe phi to

    k(phi) = 1/(2 pi) * integral of U(tau)^dagger sigma3 phi(tau) R(tau),

and the projector onto the filled states is  P(phi) = -X_neg(S) k(phi)
with X_neg the spectral projection onto S's negative subspace.  WKB
counterparts replace U by the frame-and-phase propagator.

Quadratures over the open lifetime are accumulated as augmented state of
the same adaptive stepper that drives the evolution (one error budget for
propagator and integral); the endpoint limits are handled by shrinking a
cutoff delta until the rigorous tail bound (the integrand norm is at most
R) drops below the requested tolerance.  Piecewise-constant scales skip
all of this: every segment integral has a closed form.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import ConvergenceFailure, DegenerateSignature, InvalidParameter
from .evolution import (
    accumulated_phase,
    check_ode_tol,
    diagonalizer,
    evolve,
    frequency,
    _smooth_rhs,
    _step_ceiling,
    _UnitaryProjector,
)
from .model import (
    DEFAULT_GAP_TOL,
    DEFAULT_ODE_TOL,
    DEFAULT_QUAD_TOL,
    Hermitian2,
    IDENTITY2,
    Mode,
    PiecewiseConstantScale,
    ScaleFunction,
    SIGMA3,
    TestFunction,
    Unitary2,
    spectral_norm,
)
from .stepper import integrate

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SignatureResult:
    """Signature matrix with its spectral data and error bookkeeping.

    ``scale_bound`` is the a-priori operator-norm ceiling (the lifetime
    integral of R); it also serves as the absolute floor when deciding
    whether an eigenvalue sits dangerously close to zero.
    """

    s: Hermitian2
    eigenvalues: tuple
    eigvectors: Unitary2
    quad_error_estimate: float
    scale_bound: float

    @property
    def mu_minus(self) -> float:
        return self.eigenvalues[0]

    @property
    def mu_plus(self) -> float:
        return self.eigenvalues[1]

    def norm(self) -> float:
        return max(abs(self.mu_minus), abs(self.mu_plus))


def _finish_signature(matrix, quad_error: float, scale_bound: float) -> SignatureResult:
    herm = Hermitian2(0.5 * (matrix + matrix.conj().T))
    evals, evecs = np.linalg.eigh(herm.matrix)
    return SignatureResult(
        s=herm,
        eigenvalues=(float(evals[0]), float(evals[1])),
        eigvectors=Unitary2(evecs),
        quad_error_estimate=quad_error,
        scale_bound=scale_bound,
    )


def _choose_cutoffs(scale: ScaleFunction, tol: float):
    """Per-endpoint cutoffs: shrink each delta until its tail drops below tol/2.

    Independent sides matter: a scale vanishing at one endpoint only should
    not be forced to evaluate arbitrarily close to the other.
    """
    cutoffs = []
    for tail in (scale.tail_below, scale.tail_above):
        delta = min(0.05, scale.tau_end / 16.0)
        for _ in range(60):
            if tail(delta) <= tol / 2.0:
                break
            delta *= 0.25
        else:
            raise ConvergenceFailure(
                f"endpoint tail bound not reached (last delta {delta:.3e})")
        cutoffs.append(delta)
    return cutoffs[0], cutoffs[1]


def _two_leg_accumulate(rhs, tau0: float, lo: float, hi: float, y0,
                        ode_tol: float, max_step, post_accept,
                        slice_acc) -> np.ndarray:
    """Accumulated integral over [lo, hi] for a tau0-anchored augmented state.

    Integrates the augmented system from tau0 towards both interval ends
    and differences the accumulator slices, so the anchor may sit inside,
    below, or above the interval.
    """
    acc_hi = np.zeros_like(slice_acc(np.asarray(y0, dtype=complex)))
    acc_lo = acc_hi.copy()
    if hi != tau0:
        y = integrate(rhs, tau0, hi, y0, rtol=ode_tol, atol=ode_tol * 1e-2,
                      max_step=max_step, post_accept=post_accept)
        acc_hi = slice_acc(y)
    if lo != tau0:
        y = integrate(rhs, tau0, lo, y0, rtol=ode_tol, atol=ode_tol * 1e-2,
                      max_step=max_step, post_accept=post_accept)
        acc_lo = slice_acc(y)
    return acc_hi - acc_lo


def signature_operator(mode: Mode, scale: ScaleFunction,
                       tol: float = DEFAULT_QUAD_TOL,
                       ode_tol: float = DEFAULT_ODE_TOL) -> SignatureResult:
    """The signature matrix by lifetime quadrature of U^dagger sigma3 U R."""
    check_ode_tol(ode_tol)
    scale_bound = scale.lifetime_integral()

    if isinstance(scale, PiecewiseConstantScale):
        from .bloch import piecewise_signature_vector
        from .model import SIGMA1, SIGMA2

        svec = piecewise_signature_vector(mode, scale)
        matrix = svec[0] * SIGMA1 + svec[1] * SIGMA2 + svec[2] * SIGMA3
        return _finish_signature(matrix, 1e-13 * max(scale_bound, 1.0), scale_bound)

    d_lo, d_hi = _choose_cutoffs(scale, tol)
    base = _smooth_rhs(mode, scale)

    def rhs(t, y):
        du = base(t, y[:4])
        u = y[:4].reshape(2, 2)
        b = (u.conj().T @ SIGMA3 @ u) * scale.value(t)
        return np.concatenate([du, b.ravel()])

    projector = _UnitaryProjector()

    def post(t, y):
        y = y.copy()
        y[:4] = projector(t, y[:4])
        return y

    y0 = np.concatenate([IDENTITY2.ravel(), np.zeros(4, dtype=complex)])
    acc = _two_leg_accumulate(rhs, mode.tau0, d_lo, scale.tau_end - d_hi, y0,
                              ode_tol, _step_ceiling(mode, scale), post,
                              lambda y: y[4:])
    quad_error = (scale.tail_below(d_lo) + scale.tail_above(d_hi)
                  + ode_tol * scale_bound)
    return _finish_signature(acc.reshape(2, 2), quad_error, scale_bound)


def _wkb_conjugated_rhs(mode: Mode, scale: ScaleFunction, v0: np.ndarray):
    """State [phase, 4 accumulator entries]: WKB-conjugated sigma3 times R."""

    def rhs(t, y):
        psi = y[0].real
        r = scale.value(t)
        v = diagonalizer(mode, r)
        d = np.array([np.exp(-1j * psi), np.exp(1j * psi)])
        uw = v.conj().T @ (d[:, None] * v0)
        b = (uw.conj().T @ SIGMA3 @ uw) * r
        return np.concatenate([[frequency(mode, r)], b.ravel()])

    return rhs


def _wkb_piecewise_signature(mode: Mode, scale: PiecewiseConstantScale) -> np.ndarray:
    """Closed-form WKB signature for piecewise scales.

    Within a segment the frame is constant and the phase linear, so the
    conjugated matrix splits into a constant part and a uniformly rotating
    off-diagonal part whose time integral is elementary.
    """
    v0 = diagonalizer(mode, scale.value(mode.tau0))
    total = np.zeros((2, 2), dtype=complex)
    widths = np.diff(scale.breakpoints)
    for start, dt, r in zip(scale.breakpoints, widths, scale.values):
        f = frequency(mode, r)
        v = diagonalizer(mode, r)
        y = v @ SIGMA3 @ v.conj().T
        psi0 = accumulated_phase(mode, scale, mode.tau0, start)
        # integral of e^{2 i psi} over the segment, psi linear with slope f
        osc = np.exp(2j * psi0) * (np.exp(2j * f * dt) - 1.0) / (2j * f)
        block = np.array([[y[0, 0] * dt, y[0, 1] * osc],
                          [y[1, 0] * np.conj(osc), y[1, 1] * dt]])
        total += r * (v0.conj().T @ block @ v0)
    return total


def signature_operator_wkb(mode: Mode, scale: ScaleFunction,
                           tol: float = DEFAULT_QUAD_TOL,
                           ode_tol: float = DEFAULT_ODE_TOL) -> SignatureResult:
    """Signature quadrature with the WKB propagator in place of the exact one."""
    check_ode_tol(ode_tol)
    scale_bound = scale.lifetime_integral()

    if isinstance(scale, PiecewiseConstantScale):
        matrix = _wkb_piecewise_signature(mode, scale)
        return _finish_signature(matrix, 1e-13 * max(scale_bound, 1.0), scale_bound)

    d_lo, d_hi = _choose_cutoffs(scale, tol)
    v0 = diagonalizer(mode, scale.value(mode.tau0))
    rhs = _wkb_conjugated_rhs(mode, scale, v0)
    ceiling = lambda t: 0.05 / max(frequency(mode, scale.value(t)), 1e-3)
    y0 = np.zeros(5, dtype=complex)
    acc = _two_leg_accumulate(rhs, mode.tau0, d_lo, scale.tau_end - d_hi, y0,
                              ode_tol, ceiling, None, lambda y: y[1:])
    quad_error = (scale.tail_below(d_lo) + scale.tail_above(d_hi)
                  + ode_tol * scale_bound)
    return _finish_signature(acc.reshape(2, 2), quad_error, scale_bound)


def _mass_term_integral(mode: Mode, scale: ScaleFunction) -> float:
    """integral of m R^2 / f over the lifetime (smooth, non-oscillatory)."""
    if isinstance(scale, PiecewiseConstantScale):
        widths = np.diff(scale.breakpoints)
        return float(sum(mode.mass * r * r / frequency(mode, r) * dt
                         for r, dt in zip(scale.values, widths)))
    val, _ = quad(lambda t: mode.mass * scale.value(t) ** 2
                  / frequency(mode, scale.value(t)),
                  0.0, scale.tau_end, limit=400, epsabs=1e-12, epsrel=1e-12)
    return float(val)


def wkb_signature_leading_term(mode: Mode, scale: ScaleFunction) -> Hermitian2:
    """Non-oscillatory part of the WKB signature.

    The mass-term integral times the tau0 frame's conjugated sigma3; the
    remainder of the WKB signature is suppressed by one power of the mass.
    """
    v0 = diagonalizer(mode, scale.value(mode.tau0))
    coeff = _mass_term_integral(mode, scale)
    return Hermitian2(coeff * (v0.conj().T @ SIGMA3 @ v0))


@dataclass(frozen=True)
class WkbScalarIntegrals:
    """The three lifetime integrals determining the WKB signature spectrum.

    mass_term = integral m R^2 / f;  cos_term / sin_term = integrals of
    (R / f) cos(phase) and (R / f) sin(phase) with phase = -2 * (frequency
    integral from tau0).  The oscillatory pair carries a factor lam in the
    signature, so it vanishes identically for decoupled modes.
    """

    mass_term: float
    cos_term: float
    sin_term: float


def wkb_scalar_integrals(mode: Mode, scale: ScaleFunction,
                         tol: float = DEFAULT_QUAD_TOL,
                         ode_tol: float = DEFAULT_ODE_TOL) -> WkbScalarIntegrals:
    if isinstance(scale, PiecewiseConstantScale):
        widths = np.diff(scale.breakpoints)
        mass_term = cos_term = sin_term = 0.0
        for start, dt, r in zip(scale.breakpoints, widths, scale.values):
            f = frequency(mode, r)
            psi0 = accumulated_phase(mode, scale, mode.tau0, start)
            mass_term += mode.mass * r * r / f * dt
            # phase(tau) = -2 psi(tau); cos is even in psi, sin flips sign
            cos_term += r / f * (np.sin(2 * (psi0 + f * dt)) - np.sin(2 * psi0)) / (2 * f)
            sin_term += r / f * (np.cos(2 * (psi0 + f * dt)) - np.cos(2 * psi0)) / (2 * f)
        return WkbScalarIntegrals(float(mass_term), float(cos_term), float(sin_term))

    check_ode_tol(ode_tol)
    d_lo, d_hi = _choose_cutoffs(scale, tol)

    def rhs(t, y):
        psi = y[0].real
        r = scale.value(t)
        f = frequency(mode, r)
        ph = -2.0 * psi
        return np.array([f,
                         mode.mass * r * r / f,
                         r / f * np.cos(ph),
                         r / f * np.sin(ph)], dtype=complex)

    ceiling = lambda t: 0.05 / max(frequency(mode, scale.value(t)), 1e-3)
    acc = _two_leg_accumulate(rhs, mode.tau0, d_lo, scale.tau_end - d_hi,
                              np.zeros(4, dtype=complex), ode_tol, ceiling,
                              None, lambda y: y[1:])
    return WkbScalarIntegrals(float(acc[0].real), float(acc[1].real),
                              float(acc[2].real))


def wkb_eigenvalues_closed_form(mode: Mode, scale: ScaleFunction,
                                tol: float = DEFAULT_QUAD_TOL,
                                ode_tol: float = DEFAULT_ODE_TOL):
    """(mu_minus, mu_plus) of the WKB signature from the scalar integrals.

    Independent of the matrix quadrature: the WKB-conjugated integrand
    decomposes over an orthonormal traceless triple, so the spectrum is
    the +- Euclidean length of the three coefficients.
    """
    ints = wkb_scalar_integrals(mode, scale, tol=tol, ode_tol=ode_tol)
    mu = float(np.sqrt((mode.lam * ints.cos_term) ** 2
                       + (mode.lam * ints.sin_term) ** 2
                       + ints.mass_term ** 2))
    return -mu, mu


class Provenance(enum.Enum):
    EXACT = "exact"
    WKB = "wkb"
    WKB_LEADING_ORDER = "wkb_leading_order"


@dataclass(frozen=True)
class ProjectorOutput:
    """Image of a probe in the tau0 fiber, tagged with how it was computed."""

    value: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        v = np.asarray(self.value, dtype=complex).copy()
        if v.shape != (2,) or not np.all(np.isfinite(v)):
            raise InvalidParameter("projector output must be a finite 2-vector")
        v.setflags(write=False)
        object.__setattr__(self, "value", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.value))


def _support_max_step(mode: Mode, scale: ScaleFunction, phi: TestFunction):
    a, b = phi.support
    width_cap = (b - a) / 16.0

    def ceiling(t):
        return min(0.1 / max(frequency(mode, scale.value(t)), 1e-3), width_cap)

    return ceiling


def _support_legs(tau0: float, a: float, b: float):
    """(start, leg_start, leg_end, sign) sweeps covering [a, b] from tau0."""
    if tau0 <= a:
        return [(a, a, b, +1.0)]
    if tau0 >= b:
        return [(b, b, a, -1.0)]
    return [(tau0, tau0, b, +1.0), (tau0, tau0, a, -1.0)]


def k_m_apply(mode: Mode, scale: ScaleFunction, phi: TestFunction,
              tol: float = DEFAULT_ODE_TOL) -> ProjectorOutput:
    """Causal-solution image of a probe, in the tau0 fiber.

    1/(2 pi) times the support integral of U^dagger sigma3 phi R,
    co-integrated with the propagator itself.
    """
    check_ode_tol(tol)
    a, b = phi.support
    scale.check_domain(a)
    scale.check_domain(b)
    base = _smooth_rhs(mode, scale)
    ceiling = _support_max_step(mode, scale, phi)
    projector = _UnitaryProjector()

    def rhs(t, y):
        du = base(t, y[:4])
        u = y[:4].reshape(2, 2)
        dk = u.conj().T @ (SIGMA3 @ phi(t)) * scale.value(t) / TWO_PI
        return np.concatenate([du, dk])

    def post(t, y):
        y = y.copy()
        y[:4] = projector(t, y[:4])
        return y

    total = np.zeros(2, dtype=complex)
    for anchor, lo, hi, sign in _support_legs(mode.tau0, a, b):
        u0 = evolve(mode, scale, mode.tau0, anchor, tol=tol).u.matrix \
            if anchor != mode.tau0 else IDENTITY2
        y0 = np.concatenate([u0.ravel(), np.zeros(2, dtype=complex)])
        y = integrate(rhs, lo, hi, y0, rtol=tol, atol=tol * 1e-2,
                      max_step=ceiling, post_accept=post)
        total += sign * y[4:]
    return ProjectorOutput(value=total, provenance=Provenance.EXACT)


def k_wkb_apply(mode: Mode, scale: ScaleFunction, phi: TestFunction,
                tol: float = DEFAULT_ODE_TOL) -> ProjectorOutput:
    """WKB counterpart of ``k_m_apply``."""
    check_ode_tol(tol)
    a, b = phi.support
    scale.check_domain(a)
    scale.check_domain(b)
    v0 = diagonalizer(mode, scale.value(mode.tau0))
    ceiling = _support_max_step(mode, scale, phi)

    def rhs(t, y):
        psi = y[0].real
        r = scale.value(t)
        v = diagonalizer(mode, r)
        d = np.array([np.exp(-1j * psi), np.exp(1j * psi)])
        uw = v.conj().T @ (d[:, None] * v0)
        dk = uw.conj().T @ (SIGMA3 @ phi(t)) * r / TWO_PI
        return np.concatenate([[frequency(mode, r)], dk])

    total = np.zeros(2, dtype=complex)
    for anchor, lo, hi, sign in _support_legs(mode.tau0, a, b):
        psi0 = accumulated_phase(mode, scale, mode.tau0, anchor)
        y0 = np.concatenate([[psi0], np.zeros(2, dtype=complex)])
        y = integrate(rhs, lo, hi, y0, rtol=tol, atol=tol * 1e-2,
                      max_step=ceiling)
        total += sign * y[1:]
    return ProjectorOutput(value=total, provenance=Provenance.WKB)


def negative_projection(sig: SignatureResult,
                        gap_tol: float = DEFAULT_GAP_TOL) -> Hermitian2:
    """Orthogonal projection onto the negative spectral subspace.

    Refuses to choose a branch when an eigenvalue sits within
    ``gap_tol * max(norm, scale_bound)`` of zero: the split is genuinely
    unstable there and silently picking one would be wrong.
    """
    threshold = gap_tol * max(sig.norm(), sig.scale_bound)
    if min(abs(sig.mu_minus), abs(sig.mu_plus)) < threshold:
        raise DegenerateSignature(sig.mu_minus, sig.mu_plus, threshold)
    vecs = sig.eigvectors.matrix
    proj = np.zeros((2, 2), dtype=complex)
    for i, mu in enumerate(sig.eigenvalues):
        if mu < 0:
            proj += np.outer(vecs[:, i], vecs[:, i].conj())
    return Hermitian2(proj)


def positive_projection(sig: SignatureResult,
                        gap_tol: float = DEFAULT_GAP_TOL) -> Hermitian2:
    threshold = gap_tol * max(sig.norm(), sig.scale_bound)
    if min(abs(sig.mu_minus), abs(sig.mu_plus)) < threshold:
        raise DegenerateSignature(sig.mu_minus, sig.mu_plus, threshold)
    vecs = sig.eigvectors.matrix
    proj = np.zeros((2, 2), dtype=complex)
    for i, mu in enumerate(sig.eigenvalues):
        if mu > 0:
            proj += np.outer(vecs[:, i], vecs[:, i].conj())
    return Hermitian2(proj)


def fermionic_projector_apply(mode: Mode, scale: ScaleFunction,
                              phi: TestFunction,
                              tol: float = DEFAULT_ODE_TOL,
                              quad_tol: float = DEFAULT_QUAD_TOL,
                              gap_tol: float = DEFAULT_GAP_TOL) -> ProjectorOutput:
    """P(phi) = -X_neg(S) k(phi); raises DegenerateSignature when S is unstable."""
    sig = signature_operator(mode, scale, tol=quad_tol, ode_tol=tol)
    proj = negative_projection(sig, gap_tol=gap_tol)
    km = k_m_apply(mode, scale, phi, tol=tol)
    return ProjectorOutput(value=-(proj.matrix @ km.value),
                           provenance=Provenance.EXACT)


class PWkbVariant(enum.Enum):
    FULL = "full"
    LEADING_ORDER = "leading_order"


def p_wkb_leading_apply(mode: Mode, scale: ScaleFunction, phi: TestFunction,
                        tol: float = DEFAULT_ODE_TOL) -> ProjectorOutput:
    """Pure negative-frequency image: only the decaying phase branch survives."""
    check_ode_tol(tol)
    a, b = phi.support
    scale.check_domain(a)
    scale.check_domain(b)
    v0 = diagonalizer(mode, scale.value(mode.tau0))
    ceiling = _support_max_step(mode, scale, phi)

    def rhs(t, y):
        psi = y[0].real
        r = scale.value(t)
        v = diagonalizer(mode, r)
        mid = v0.conj().T @ (np.array([0.0, np.exp(-1j * psi)])[:, None] * v)
        dk = -mid @ (SIGMA3 @ phi(t)) * r / TWO_PI
        return np.concatenate([[frequency(mode, r)], dk])

    total = np.zeros(2, dtype=complex)
    for anchor, lo, hi, sign in _support_legs(mode.tau0, a, b):
        psi0 = accumulated_phase(mode, scale, mode.tau0, anchor)
        y0 = np.concatenate([[psi0], np.zeros(2, dtype=complex)])
        y = integrate(rhs, lo, hi, y0, rtol=tol, atol=tol * 1e-2,
                      max_step=ceiling)
        total += sign * y[1:]
    return ProjectorOutput(value=total, provenance=Provenance.WKB_LEADING_ORDER)


def p_wkb_apply(mode: Mode, scale: ScaleFunction, phi: TestFunction,
                variant: PWkbVariant = PWkbVariant.FULL,
                tol: float = DEFAULT_ODE_TOL,
                quad_tol: float = DEFAULT_QUAD_TOL,
                gap_tol: float = DEFAULT_GAP_TOL) -> ProjectorOutput:
    """WKB projector image, either the full spectral form or the leading order."""
    if variant is PWkbVariant.LEADING_ORDER:
        return p_wkb_leading_apply(mode, scale, phi, tol=tol)
    sig = signature_operator_wkb(mode, scale, tol=quad_tol, ode_tol=tol)
    proj = negative_projection(sig, gap_tol=gap_tol)
    kw = k_wkb_apply(mode, scale, phi, tol=tol)
    return ProjectorOutput(value=-(proj.matrix @ kw.value),
                           provenance=Provenance.WKB)
