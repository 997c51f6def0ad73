"""Strang-split integration of the lens-transformed NLS on [-pi/4, pi/4].

    i dw/dtau = H w + cos(2 tau)^e_c |w|^(p-2) w,      e_c = (p-2) n / 2 - 2

The state lives on the square tensor basis of the data basis's grid, so the
grid transforms are exact inverses and both substeps (harmonic phase
rotation, pointwise nonlinear phase rotation) are L^2 isometries.

Formulations
------------
full_w         w itself, w(0) = u0
remainder_v    v = w - e^{-i tau H} u0, v(0) = 0
deterministic  w with deterministic data phi (no random part)
linear         harmonic flow only
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hermite import (
    BasisTable,
    GridField,
    SpectralField,
    analyze_dense,
    embed,
    propagator_phases,
    state_basis,
    synthesize_dense,
)
from .lens import QUARTER

FORMULATIONS = ("full_w", "remainder_v", "deterministic", "linear")


@dataclass(frozen=True)
class EvolutionConfig:
    n: int
    dt: float = 1e-3
    p: float = 4.0
    tau_span: tuple = (0.0, QUARTER)
    formulation: str = "full_w"
    dealias: bool = False
    guard_factor: float = 1e3
    strength: float = 1.0  # multiplies the nonlinearity; 0 switches it off

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        t0, t1 = self.tau_span
        if max(abs(t0), abs(t1)) > QUARTER + 1e-15:
            raise ValueError("tau_span must stay inside [-pi/4, pi/4]")
        if self.n <= 4 and not (2 + 4 / self.n <= self.p <= 4):
            warnings.warn(
                f"p={self.p} is outside the range 2+4/n <= p <= 4 for n={self.n}",
                stacklevel=2,
            )

    @property
    def coefficient_exponent(self) -> float:
        return (self.p - 2) * self.n / 2 - 2

    def coefficient(self, tau: float) -> float:
        # cos(2 tau) >= 0 on the lens interval; clip the rounding at the endpoints
        c = max(math.cos(2 * tau), 0.0)
        return self.strength * c**self.coefficient_exponent

    def with_(self, **changes) -> "EvolutionConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return EvolutionConfig(**data)

    def metadata(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "dt": self.dt,
            "tau_span": list(self.tau_span),
            "formulation": self.formulation,
            "dealias": self.dealias,
            "guard_factor": self.guard_factor,
            "coefficient_exponent": self.coefficient_exponent,
        }


class _Propagator:
    """Dense-tensor transforms and phases on a square tensor basis."""

    def __init__(self, state: BasisTable):
        self.state = state
        self.eig = state.dense_eigenvalues()

    def synth(self, dense):
        return synthesize_dense(self.state, dense)

    def analyze(self, values):
        return analyze_dense(self.state, values)

    def phases(self, dt):
        return propagator_phases(self.eig, dt)

    def h1(self, dense) -> float:
        return float(np.sqrt(np.sum(self.eig * np.abs(dense) ** 2)))


def nonlinear_step(g: GridField, tau_mid: float, dt: float, config: EvolutionConfig) -> GridField:
    """Exact flow of i dw/dtau = c(tau_mid) |w|^(p-2) w over dt: a pointwise phase."""
    coef = config.coefficient(tau_mid) * dt
    rot = np.exp(-1j * coef * np.abs(g.values) ** (config.p - 2))
    return GridField(g.basis, g.values * rot, g.scale)


def _strang_dense(prop: _Propagator, dense, tau, h, config, u0_dense=None, half=None):
    half = prop.phases(h / 2) if half is None else half
    dense = dense * half
    mid = tau + h / 2
    coef = config.coefficient(mid) * h
    if coef != 0.0 and config.formulation != "linear":
        if u0_dense is None:
            g = prop.synth(dense)
            dense = prop.analyze(g * np.exp(-1j * coef * np.abs(g) ** (config.p - 2)))
        else:
            # the free wave is frozen during the nonlinear substep
            g = prop.synth(dense + u0_dense * prop.phases(mid))
            rot = np.exp(-1j * coef * np.abs(g) ** (config.p - 2))
            dense = dense + prop.analyze(g * (rot - 1.0))
    return dense * half


def strang_step(
    f: SpectralField,
    tau: float,
    dt: float,
    config: EvolutionConfig,
    u0: SpectralField | None = None,
) -> SpectralField:
    """One step: half harmonic flow, nonlinear phase at the midpoint, half harmonic flow.

    The result lives on the state (square tensor) basis of ``f``'s grid.
    ``u0`` is required for the remainder formulation.
    """
    state = state_basis(f.basis)
    prop = _Propagator(state)
    dense = embed(f, state).dense()
    u0_dense = None
    if config.formulation == "remainder_v":
        if u0 is None:
            raise ValueError("remainder formulation needs u0")
        u0_dense = embed(u0, state).dense()
    out = _strang_dense(prop, dense, tau, dt, config, u0_dense)
    return SpectralField(state, state.from_dense(out))


@dataclass
class Trajectory:
    config: EvolutionConfig
    basis: BasisTable
    state: BasisTable
    taus: np.ndarray
    fields: list
    u0: SpectralField | None
    step: float
    step_taus: np.ndarray = field(repr=False, default=None)
    mass: np.ndarray = field(repr=False, default=None)
    h1: np.ndarray = field(repr=False, default=None)
    valid: bool = True
    reason: str | None = None

    @property
    def endpoint(self) -> float:
        return float(self.taus[-1])

    def free_wave(self, tau: float) -> SpectralField:
        """xi(tau) = e^{-i tau H} u0 on the state basis (zero without u0)."""
        if self.u0 is None:
            return SpectralField.zeros(self.state)
        xi = embed(self.u0, self.state)
        return SpectralField(self.state, xi.coeffs * propagator_phases(self.state.eigenvalues, tau))

    def full_field(self, k: int) -> SpectralField:
        """w at checkpoint k (adds the free wave in the remainder formulation)."""
        f = self.fields[k]
        if self.config.formulation == "remainder_v":
            return f + self.free_wave(self.taus[k])
        return f

    def index_of(self, tau: float) -> int:
        k = int(np.argmin(np.abs(self.taus - tau)))
        if abs(self.taus[k] - tau) > 1e-12:
            raise KeyError(f"no checkpoint at tau={tau}")
        return k


def _checkpoint_steps(checkpoints, nsteps: int, tau0: float, h: float) -> set:
    if checkpoints is None:
        ks = {0, nsteps}
    elif isinstance(checkpoints, (int, np.integer)):
        stride = max(1, int(checkpoints))
        ks = set(range(0, nsteps + 1, stride)) | {nsteps}
    else:
        taus = np.asarray(checkpoints, dtype=float)
        ks = set(np.clip(np.rint((taus - tau0) / h), 0, nsteps).astype(int).tolist())
        ks |= {0, nsteps}
    return ks


def evolve(
    initial: SpectralField | None,
    u0: SpectralField | None,
    config: EvolutionConfig,
    checkpoints=None,
) -> Trajectory:
    """Integrate over ``config.tau_span`` with fixed steps.

    Parameters
    ----------
    initial : SpectralField or None
        Field at ``tau_span[0]``: w(0) = u0 for ``full_w``, phi for
        ``deterministic``, zero (or None) for ``remainder_v``.
    u0 : SpectralField or None
        Random datum; required for ``remainder_v`` and forbidden for
        ``deterministic``.
    checkpoints : None, int or sequence of float
        None keeps the two endpoints, an int is a step stride, a sequence
        lists lens times (snapped to the step grid).

    A trajectory whose H^1 norm leaves ``guard_factor`` times its scale is
    stopped and flagged invalid.
    """
    form = config.formulation
    if form == "remainder_v":
        if u0 is None:
            raise ValueError("remainder_v needs u0")
        if initial is not None and initial.l2_norm() != 0.0:
            raise ValueError("remainder_v starts from v(0) = 0")
        initial = SpectralField.zeros(u0.basis)
    elif form == "deterministic":
        if u0 is not None:
            raise ValueError("deterministic mode takes no random datum")
    if initial is None:
        raise ValueError(f"{form} needs initial data")
    if u0 is not None and u0.basis.n != config.n or initial.basis.n != config.n:
        raise ValueError("config dimension does not match the data")

    basis = initial.basis
    state = state_basis(basis)
    prop = _Propagator(state)
    tau0, tau1 = map(float, config.tau_span)
    span = tau1 - tau0
    nsteps = max(1, math.ceil(abs(span) / config.dt - 1e-9))
    h = span / nsteps
    keep = _checkpoint_steps(checkpoints, nsteps, tau0, h)

    dense = embed(initial, state).dense()
    u0_dense = embed(u0, state).dense() if form == "remainder_v" else None
    scale = prop.h1(dense)
    if u0 is not None:
        scale = max(scale, prop.h1(embed(u0, state).dense()))
    guard = config.guard_factor * scale if scale > 0 else math.inf

    half = prop.phases(h / 2)
    taus, fields = [], []
    mass = np.empty(nsteps + 1)
    h1 = np.empty(nsteps + 1)
    mass[0] = float(np.linalg.norm(dense))
    h1[0] = prop.h1(dense)
    if 0 in keep:
        taus.append(tau0)
        fields.append(SpectralField(state, state.from_dense(dense)))
    valid, reason, last = True, None, nsteps
    for k in range(nsteps):
        tau = tau0 + k * h
        if form != "linear":
            dense = _strang_dense(prop, dense, tau, h, config, u0_dense, half)
        else:
            dense = dense * half * half
        mass[k + 1] = float(np.linalg.norm(dense))
        h1[k + 1] = prop.h1(dense)
        if not np.isfinite(h1[k + 1]) or h1[k + 1] > guard:
            valid = False
            reason = f"H1 guard tripped at tau={tau + h:.6g} (norm {h1[k + 1]:.3g} > {guard:.3g})"
            last = k + 1
            taus.append(tau0 + (k + 1) * h)
            fields.append(SpectralField(state, state.from_dense(dense)))
            break
        if k + 1 in keep:
            taus.append(tau1 if k + 1 == nsteps else tau0 + (k + 1) * h)
            fields.append(SpectralField(state, state.from_dense(dense)))
    step_taus = tau0 + h * np.arange(last + 1)
    step_taus[-1] = tau1 if last == nsteps else step_taus[-1]
    return Trajectory(
        config=config,
        basis=basis,
        state=state,
        taus=np.asarray(taus),
        fields=fields,
        u0=u0,
        step=h,
        step_taus=step_taus,
        mass=mass[: last + 1],
        h1=h1[: last + 1],
        valid=valid,
        reason=reason,
    )


@dataclass(frozen=True)
class DuhamelResidual:
    taus: np.ndarray
    residual: np.ndarray  # L^2 norm of v - Xi(v) per checkpoint
    v_norm: np.ndarray

    @property
    def relative(self) -> float:
        top = float(np.max(self.v_norm)) if self.v_norm.size else 0.0
        return 0.0 if top == 0 else float(np.max(self.residual)) / top


def duhamel_residual(traj: Trajectory) -> DuhamelResidual:
    """Compare v with its Duhamel integral, trapezoid rule on the checkpoint grid.

        Xi(v)(tau) = -i int_{tau_0}^{tau} e^{-i(tau-s)H} c(s) |xi+v|^(p-2) (xi+v)(s) ds

    Every integrand sample is propagated spectrally; the rule is advanced
    recursively so only two checkpoints are held at a time.  With a
    checkpoint at every step this is the step-grid trapezoid rule.
    """
    config = traj.config
    if config.formulation == "linear":
        zeros = np.zeros(len(traj.taus))
        return DuhamelResidual(traj.taus.copy(), zeros, zeros)
    if config.formulation != "remainder_v":
        raise ValueError("Duhamel residual is defined for the remainder formulation")
    prop = _Propagator(traj.state)

    def forcing(k):
        w = traj.full_field(k).dense()
        g = prop.synth(w)
        return config.coefficient(traj.taus[k]) * prop.analyze(np.abs(g) ** (config.p - 2) * g)

    xi_int = np.zeros(traj.state.grid_shape, dtype=complex)
    res = [float(np.linalg.norm(traj.fields[0].dense() - xi_int))]
    norms = [traj.fields[0].l2_norm()]
    f_prev = forcing(0)
    for k in range(1, len(traj.taus)):
        h = traj.taus[k] - traj.taus[k - 1]
        ph = prop.phases(h)
        f_cur = forcing(k)
        xi_int = ph * xi_int - 0.5j * h * (ph * f_prev + f_cur)
        res.append(float(np.linalg.norm(traj.fields[k].dense() - xi_int)))
        norms.append(traj.fields[k].l2_norm())
        f_prev = f_cur
    return DuhamelResidual(traj.taus.copy(), np.asarray(res), np.asarray(norms))
