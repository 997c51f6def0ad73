"""Lens transform between cubic NLS on R^n and the harmonic-oscillator NLS.

Lens time tau in (-pi/4, pi/4) and physical time t are related by
t = tan(2 tau)/2.  A solution u(t, x) maps to

    w(tau, y) = cos(2 tau)^(-n/2) u(t(tau), y / cos(2 tau)) exp(-i |y|^2 t(tau)).

On grids the map is a pointwise relabelling onto a dilated grid, which makes
both the inversion and the L^2 isometry exact at the discrete level.  On
spectral fields the expansion is evaluated at the rescaled nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hermite import (
    GridField,
    SpectralField,
    analyze,
    embed,
    evaluate,
    linear_propagate,
    state_basis,
)

QUARTER = math.pi / 4


def t_of_tau(tau):
    """Physical time of lens time tau; the endpoints +-pi/4 map to +-inf."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(np.abs(tau_arr) > QUARTER):
        raise ValueError("lens time must lie in [-pi/4, pi/4]")
    at_end = np.isclose(np.abs(tau_arr), QUARTER, rtol=0, atol=1e-15)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(at_end, np.sign(tau_arr) * np.inf, np.tan(2 * tau_arr) / 2)
    return float(out) if out.ndim == 0 else out


def tau_of_t(t):
    out = np.arctan(2 * np.asarray(t, dtype=float)) / 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TimePair:
    tau: float
    t: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "t", t_of_tau(self.tau))


@dataclass(frozen=True)
class LensFrame:
    """Dilation 1/cos(2 tau) and chirp coefficient t(tau) at lens time tau."""

    tau: float

    def __post_init__(self):
        if not abs(self.tau) < QUARTER:
            raise ValueError("lens frame is undefined at tau = +-pi/4 (scale blow-up)")

    @property
    def cos(self) -> float:
        return math.cos(2 * self.tau)

    @property
    def scale(self) -> float:
        return 1.0 / self.cos

    @property
    def chirp(self) -> float:
        return math.tan(2 * self.tau) / 2


def lens_forward(u, tau: float) -> GridField:
    """Map a physical field u(t(tau)) to its lens image w(tau).

    A :class:`SpectralField` is resampled exactly onto the standard grid; a
    :class:`GridField` is relabelled onto the grid dilated by cos(2 tau).
    """
    frame = LensFrame(tau)
    c = frame.cos
    if isinstance(u, SpectralField):
        basis = u.basis
        n = basis.n
        vals = evaluate(u, [basis.nodes / c] * n)
        out = GridField(basis, vals)
        r2 = out.radius_squared()
        return GridField(basis, c ** (-n / 2) * vals * np.exp(-1j * r2 * frame.chirp))
    n = u.basis.n
    # target node y = c x for source node x
    r2_target = u.radius_squared() * c**2
    vals = c ** (-n / 2) * u.values * np.exp(-1j * r2_target * frame.chirp)
    return GridField(u.basis, vals, u.scale * c)


def lens_inverse(w, tau: float) -> GridField:
    """Inverse of :func:`lens_forward`: u(t(tau), x) = cos^(n/2) w(tau, cos x) e^{i cos^2 |x|^2 t}."""
    frame = LensFrame(tau)
    c = frame.cos
    if isinstance(w, SpectralField):
        basis = w.basis
        n = basis.n
        vals = evaluate(w, [basis.nodes * c] * n)
        r2 = basis.radius_squared()
        return GridField(basis, c ** (n / 2) * vals * np.exp(1j * r2 * c**2 * frame.chirp))
    n = w.basis.n
    r2_source = w.radius_squared()
    vals = c ** (n / 2) * w.values * np.exp(1j * r2_source * frame.chirp)
    return GridField(w.basis, vals, w.scale / c)


def grid_l2(g: GridField) -> float:
    return float(np.sqrt(np.sum(g.cell_weights() * np.abs(g.values) ** 2)))


def coherent_state(x0, k0):
    """Normalized shifted Gaussian and its exact free evolution under e^{it Delta}.

    Returns ``(initial, free)``, callables of the coordinate arrays (and t).
    """
    x0 = np.asarray(x0, dtype=float)
    k0 = np.asarray(k0, dtype=float)
    n = len(x0)

    def free(coords, t: float):
        denom = 1.0 + 2j * t
        out = np.asarray(math.pi ** (-n / 4), dtype=complex)
        for axis, x in enumerate(coords):
            beta = x0[axis] + 1j * k0[axis]
            expo = (-0.5 * x**2 + beta * x + 1j * beta**2 * t) / denom - 0.5 * x0[axis] ** 2
            out = out * denom**-0.5 * np.exp(expo)
        return out

    def initial(coords):
        return free(coords, 0.0)

    return initial, free


@dataclass(frozen=True)
class ConjugationReport:
    taus: np.ndarray
    oracle_defect: np.ndarray  # lens-mapped harmonic flow vs closed-form free flow
    identity_defect: np.ndarray  # e^{i tau H} lens_forward(u(t)) vs u0

    @property
    def max_defect(self) -> float:
        parts = [self.identity_defect]
        if self.oracle_defect.size:
            parts.append(self.oracle_defect)
        return float(max(np.max(p) for p in parts)) if len(self.taus) else 0.0


def conjugation_check(u0: SpectralField, taus, free_flow=None) -> ConjugationReport:
    """Defect of e^{-it Delta} u(t(tau)) = e^{i tau H} w(tau) for linear evolution.

    For each tau the harmonic flow w = e^{-i tau H} u0 is pulled back to the
    physical solution u(t) by the inverse lens map.  If ``free_flow(coords, t)``
    is given (an independent closed form of e^{it Delta} u0) the L^2 distance
    to it is reported.  Independently the identity is read backwards: u(t) is
    pushed forward again, propagated by e^{i tau H} and compared with u0.
    """
    basis = u0.basis
    full = state_basis(basis)
    taus = np.asarray(taus, dtype=float)
    oracle, ident = [], []
    for tau in taus:
        if tau == 0.0:
            if free_flow is not None:
                oracle.append(0.0)
            ident.append(0.0)
            continue
        w = linear_propagate(u0, tau)
        u_t = lens_inverse(w, tau)
        if free_flow is not None:
            exact = free_flow(basis.grid_points(), t_of_tau(tau))
            oracle.append(grid_l2(GridField(basis, u_t.values - exact)))
        u_spec = analyze(GridField(full, u_t.values))
        back = analyze(lens_forward(u_spec, tau))
        back = linear_propagate(back, -tau)
        ident.append(float(np.linalg.norm(back.coeffs - embed(u0, full).coeffs)))
    return ConjugationReport(taus, np.asarray(oracle), np.asarray(ident))
