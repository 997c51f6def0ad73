"""Measured quantities: harmonic Sobolev and Lebesgue norms, K statistics,
Strichartz norms, the energy functional, scattering states and rate fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .evolution import EvolutionConfig, Trajectory
from .hermite import (
    BasisTable,
    GridField,
    SpectralField,
    derivative_coeffs,
    embed,
    linear_propagate,
    propagator_phases,
    synthesize,
    synthesize_dense,
)
from .lens import QUARTER, t_of_tau, tau_of_t
from .sampler import RandomLaw, build_gamma, sample


class TailResolutionWarning(RuntimeWarning):
    """A noticeable share of an integrand sits on the outermost quadrature nodes."""


class InvalidTrajectoryError(ValueError):
    pass


TAIL_SHARE = 0.01
TAIL_NODES = 0.10


def sobolev_norm(f: SpectralField, s: float) -> float:
    """(sum_k lambda_k^s |c_k|^2)^(1/2)."""
    return float(np.sqrt(np.sum(f.basis.eigenvalues**s * np.abs(f.coeffs) ** 2)))


def _outer_mask(basis: BasisTable) -> np.ndarray:
    # per axis, the TAIL_NODES fraction of nodes farthest from the origin
    m = basis.M
    count = max(1, int(round(TAIL_NODES * m)))
    order = np.argsort(-np.abs(basis.nodes))
    axis_mask = np.zeros(m, dtype=bool)
    axis_mask[order[:count]] = True
    mask = np.zeros(basis.grid_shape, dtype=bool)
    for axis in range(basis.n):
        shape = [1] * basis.n
        shape[axis] = m
        mask = mask | axis_mask.reshape(shape)
    return mask


def tail_share(g: GridField, q: float = 2.0) -> float:
    """Fraction of sum W |g|^q carried by the outer nodes (plain |g| for q = inf)."""
    mask = _outer_mask(g.basis)
    if math.isinf(q):
        dens = np.abs(g.values)
        top = dens.max()
        return 0.0 if top == 0 else float(dens[mask].max() / top)
    dens = g.cell_weights() * np.abs(g.values) ** q
    total = dens.sum()
    return 0.0 if total == 0 else float(dens[mask].sum() / total)


def _check_q(q: float):
    if not q >= 1:
        raise ValueError("Lebesgue exponent must be >= 1")


def lebesgue_norm(g: GridField, q: float, warn: bool = True) -> float:
    """Quadrature L^q norm on the grid; the grid maximum for q = inf.

    For infinite q the outer-node test compares the outer maximum with the
    global one, so it fires only when the peak itself sits in the tail.
    """
    _check_q(q)
    if warn:
        share = tail_share(g, q)
        limit = 1.0 - 1e-12 if math.isinf(q) else TAIL_SHARE
        if share > limit:
            warnings.warn(
                f"{share:.1%} of the L^{q} integrand sits on the outer {TAIL_NODES:.0%} of nodes",
                TailResolutionWarning,
                stacklevel=2,
            )
    vals = np.abs(g.values)
    if math.isinf(q):
        return float(vals.max()) if vals.size else 0.0
    return float(np.sum(g.cell_weights() * vals**q) ** (1.0 / q))


def weighted_norm(f: SpectralField | GridField, q: float, weight: float = 0.0, warn: bool = True) -> float:
    """|| <x>^weight f ||_{L^q}."""
    g = synthesize(f) if isinstance(f, SpectralField) else f
    if weight:
        g = GridField(g.basis, g.values * (1.0 + g.radius_squared()) ** (weight / 2.0), g.scale)
    return lebesgue_norm(g, q, warn)


def gradient_norm(f: SpectralField, q: float, weight: float = 0.0, warn: bool = True) -> float:
    """|| <x>^weight |grad f| ||_{L^q}, gradient by ladder relations."""
    mod = _gradient_modulus(f.basis, f.dense())
    if weight:
        mod = mod * (1.0 + f.basis.radius_squared()) ** (weight / 2.0)
    return lebesgue_norm(GridField(f.basis, mod), q, warn)


def _gradient_modulus(basis: BasisTable, dense: np.ndarray) -> np.ndarray:
    total = np.zeros(basis.grid_shape)
    for axis in range(basis.n):
        part = synthesize_dense(basis, derivative_coeffs(dense, axis))
        total += np.abs(part) ** 2
    return np.sqrt(total)


# ---------------------------------------------------------------- K statistic

@dataclass(frozen=True)
class KTerm:
    name: str
    kind: str  # "sup" or "lq"
    q: float
    weight: float
    gradient: bool


K_RECIPES = {
    2: (
        KTerm("sup_weighted", "sup", math.inf, 1.0, False),
        KTerm("sup_gradient", "sup", math.inf, 0.0, True),
        KTerm("L2", "lq", 2.0, 0.0, False),
    ),
    3: (
        KTerm("sup_weighted", "sup", math.inf, 6 / 5, False),
        KTerm("sup_gradient", "sup", math.inf, 1 / 5, True),
        KTerm("L12/5", "lq", 12 / 5, 0.0, False),
        KTerm("L12_weighted", "lq", 12.0, 1.0, False),
        KTerm("L12_gradient", "lq", 12.0, 0.0, True),
    ),
    4: (
        KTerm("sup_weighted", "sup", math.inf, 7 / 5, False),
        KTerm("sup_gradient", "sup", math.inf, 2 / 5, True),
        KTerm("L8/3", "lq", 8 / 3, 0.0, False),
        KTerm("L8_weighted", "lq", 8.0, 1.0, False),
        KTerm("L8_gradient", "lq", 8.0, 0.0, True),
    ),
}


@dataclass(frozen=True)
class KStatistic:
    n: int
    terms: dict
    sup_samples: int
    integral_samples: int
    tail_share: float

    @property
    def total(self) -> float:
        return float(sum(self.terms.values()))

    def as_dict(self) -> dict:
        return {
            "terms": dict(self.terms),
            "total": self.total,
            "sup_samples": self.sup_samples,
            "integral_samples": self.integral_samples,
            "tail_share": self.tail_share,
        }


def k_statistic(u0: SpectralField, samples: int = 512, warn: bool = True) -> KStatistic:
    """Sum of weighted sup and space-time L^q norms of xi = e^{-i tau H} u0.

    |xi| has period pi in tau, so the time sup is taken over ``samples``
    equispaced points of [-pi/2, pi/2).  The L^q terms integrate over
    [-pi/4, pi/4] by the trapezoid rule on the points of the same grid that
    fall there (``samples`` must be a multiple of 4).
    """
    n = u0.basis.n
    if n not in K_RECIPES:
        raise ValueError(f"no K recipe for n={n}")
    if samples < 256 or samples % 4:
        raise ValueError("need at least 256 time samples, a multiple of 4")
    recipe = K_RECIPES[n]
    basis = u0.basis
    dense0 = u0.dense()
    eig = basis.dense_eigenvalues()
    r2 = basis.radius_squared()
    cw = basis.cell_weights()
    step = math.pi / samples
    taus = -math.pi / 2 + step * np.arange(samples)
    first, last = samples // 4, 3 * samples // 4  # indices of -pi/4 and +pi/4
    need_grad = any(t.gradient for t in recipe)

    sups = {t.name: 0.0 for t in recipe if t.kind == "sup"}
    integrals = {t.name: 0.0 for t in recipe if t.kind == "lq"}
    worst_tail = 0.0
    mask = _outer_mask(basis)
    for k, tau in enumerate(taus):
        inside = first <= k <= last
        dense = dense0 * propagator_phases(eig, tau)
        mod = np.abs(synthesize_dense(basis, dense))
        gmod = _gradient_modulus(basis, dense) if need_grad else None
        if k == 0 or inside:
            dens = cw * mod**2
            tot = dens.sum()
            if tot > 0:
                worst_tail = max(worst_tail, float(dens[mask].sum() / tot))
        for term in recipe:
            base = gmod if term.gradient else mod
            if term.weight:
                base = base * (1.0 + r2) ** (term.weight / 2.0)
            if term.kind == "sup":
                sups[term.name] = max(sups[term.name], float(base.max()))
            elif inside:
                trap = 0.5 if k in (first, last) else 1.0
                integrals[term.name] += trap * step * float(np.sum(cw * base**term.q))
    terms = {}
    for term in recipe:
        if term.kind == "sup":
            terms[term.name] = sups[term.name]
        else:
            terms[term.name] = integrals[term.name] ** (1.0 / term.q)
    if warn and worst_tail > TAIL_SHARE:
        warnings.warn(
            f"{worst_tail:.1%} of the free-wave mass sits on the outer {TAIL_NODES:.0%} of nodes",
            TailResolutionWarning,
            stacklevel=2,
        )
    return KStatistic(n, terms, samples, last - first + 1, worst_tail)


# ------------------------------------------------------------------ Strichartz

@dataclass(frozen=True)
class StrichartzPair:
    p: float
    q: float
    n: int


def is_admissible(pair: StrichartzPair, tol: float = 1e-12) -> bool:
    p, q, n = pair.p, pair.q, pair.n
    if p < 2 or q < 2:
        return False
    if n == 2 and p == 2:
        return False
    lhs = 2.0 / p + (0.0 if math.isinf(q) else n / q)
    return abs(lhs - n / 2) <= tol


def strichartz_norm(
    traj: Trajectory,
    p: float,
    q: float,
    derivative: bool = False,
    weight: float = 0.0,
    check_admissible: bool = False,
) -> float:
    """(int ||<x>^weight D w(tau)||_{L^q}^p dtau)^(1/p) on the checkpoint grid.

    D is the identity or the gradient modulus; the time integral is the
    trapezoid rule over the stored checkpoints (max for p = inf).  The field
    is the full solution w, free wave included.
    """
    if p < 1 or q < 1:
        raise ValueError("Strichartz exponents must be >= 1")
    if check_admissible and not is_admissible(StrichartzPair(p, q, traj.config.n)):
        raise ValueError(f"(p, q) = ({p}, {q}) is not admissible for n={traj.config.n}")
    norms = []
    for k in range(len(traj.taus)):
        f = traj.full_field(k)
        if derivative:
            norms.append(gradient_norm(f, q, weight, warn=False))
        else:
            norms.append(weighted_norm(f, q, weight, warn=False))
    norms = np.asarray(norms)
    if math.isinf(p):
        return float(norms.max())
    if len(traj.taus) < 2:
        raise ValueError("need at least two checkpoints for the time integral")
    return float(trapezoid(norms**p, traj.taus) ** (1.0 / p))


# ---------------------------------------------------------------------- energy

@dataclass(frozen=True)
class EnergySample:
    tau: float
    kinetic: float  # 1/2 ||v||_{H^1}^2
    potential: float  # (1/p) int cos^{e_c} |xi + v|^p

    @property
    def total(self) -> float:
        return self.kinetic + self.potential


def energy(v: SpectralField, u0: SpectralField | None, tau: float, config: EvolutionConfig) -> EnergySample:
    """Energy of the remainder v at lens time tau (xi = 0 when u0 is None)."""
    kinetic = 0.5 * sobolev_norm(v, 1.0) ** 2
    w = v
    if u0 is not None:
        xi = embed(u0, v.basis) if u0.basis is not v.basis else u0
        w = v + linear_propagate(xi, tau)
    g = synthesize(w)
    integral = float(np.sum(g.cell_weights() * np.abs(g.values) ** config.p))
    return EnergySample(float(tau), kinetic, config.coefficient(tau) * integral / config.p)


@dataclass(frozen=True)
class EnergyAudit:
    samples: list
    mode: str
    max_increase: float = 0.0
    total_increase: float = 0.0
    step_tolerance: float = 0.0
    cumulative_tolerance: float = 0.0
    sup_h1: float = 0.0
    K: float | None = None
    log_ceiling: float | None = None
    passed: bool = True

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "energy": [[s.tau, s.total] for s in self.samples],
            "max_increase": self.max_increase,
            "total_increase": self.total_increase,
            "step_tolerance": self.step_tolerance,
            "sup_h1": self.sup_h1,
            "K": self.K,
            "log_ceiling": self.log_ceiling,
            "passed": self.passed,
        }


ENERGY_SLACK = 1.0


def log_energy_ceiling(K: float) -> float:
    """log of K^4 exp(2 pi (K^2 + 1)); -inf at K = 0."""
    if K <= 0:
        return -math.inf
    return 4.0 * math.log(K) + 2.0 * math.pi * (K * K + 1.0)


def energy_audit(traj: Trajectory, K: float | None = None, slack: float = ENERGY_SLACK) -> EnergyAudit:
    """Monotonicity audit (deterministic mode) or a priori ceiling (remainder mode).

    Deterministic: every increase between consecutive checkpoints must stay
    below ``slack * E(0) * m * h^3`` for m steps of size h, and the sum of
    increases below ``slack * E(0) * h^2``.  Remainder: sup over steps of
    ||v||_{H^1} must not exceed K^4 exp(2 pi (K^2 + 1)).
    """
    config = traj.config
    u0 = traj.u0 if config.formulation == "remainder_v" else None
    samples = [energy(f, u0, tau, config) for f, tau in zip(traj.fields, traj.taus)]
    h = abs(traj.step)
    if config.formulation == "deterministic":
        totals = np.array([s.total for s in samples])
        incs = np.diff(totals)
        steps = np.rint(np.abs(np.diff(traj.taus)) / h) if len(traj.taus) > 1 else np.zeros(0)
        scale = abs(totals[0]) if totals.size else 0.0
        tol_each = slack * scale * steps * h**3
        max_inc = float(np.max(incs, initial=0.0))
        total_inc = float(np.sum(np.clip(incs, 0.0, None)))
        cum_tol = slack * scale * h**2
        ok = bool(np.all(incs <= tol_each)) and total_inc <= cum_tol
        return EnergyAudit(
            samples,
            "deterministic",
            max_increase=max_inc,
            total_increase=total_inc,
            step_tolerance=float(tol_each.max(initial=0.0)),
            cumulative_tolerance=cum_tol,
            passed=ok,
        )
    if config.formulation == "remainder_v":
        if K is None:
            K = k_statistic(traj.u0, warn=False).total
        sup_h1 = float(np.max(traj.h1))
        log_ceiling = log_energy_ceiling(K)
        ok = sup_h1 == 0.0 or (sup_h1 > 0 and math.log(sup_h1) <= log_ceiling)
        return EnergyAudit(samples, "remainder_v", sup_h1=sup_h1, K=float(K), log_ceiling=log_ceiling, passed=ok)
    raise ValueError("energy audit needs the remainder or deterministic formulation")


# ------------------------------------------------------------------ scattering

@dataclass(frozen=True, eq=False)
class ScatteringState:
    sign: int
    r0: SpectralField
    h1_norm: float


def extract_scattering(traj: Trajectory) -> ScatteringState:
    """r0 = e^{+-i pi/4 H} v(+-pi/4) from a remainder trajectory ending at an endpoint."""
    if not traj.valid:
        raise InvalidTrajectoryError(f"trajectory is invalid: {traj.reason}")
    if traj.config.formulation != "remainder_v":
        raise ValueError("scattering states come from the remainder formulation")
    end = traj.endpoint
    if abs(abs(end) - QUARTER) > 1e-12:
        raise ValueError(f"trajectory stops at tau={end}, not at an endpoint")
    sign = 1 if end > 0 else -1
    r0 = linear_propagate(traj.fields[-1], -sign * QUARTER)
    return ScatteringState(sign, r0, sobolev_norm(r0, 1.0))


# ----------------------------------------------------------------- rate fits

def rate_checkpoints(dt: float, sign: int = 1, count: int = 40, t_min: float = 0.5, margin: int = 10) -> np.ndarray:
    """Lens times for rate fits: t log-spaced on [t_min, t(pi/4 - margin dt)].

    Samples are snapped to the step grid of size pi/4 / ceil(pi/4 / dt), so
    a run at dt and one at dt/2 share every sample.
    """
    h = QUARTER / math.ceil(QUARTER / dt - 1e-9)
    t_max = t_of_tau(QUARTER - margin * dt)
    if t_max <= t_min:
        raise ValueError("dt too coarse for the requested sampling window")
    taus = tau_of_t(np.geomspace(t_min, t_max, count))
    # snap down so no sample passes the margin
    taus = np.unique(np.floor(taus / h + 1e-9)) * h
    return sign * taus


def error_series(traj: Trajectory, state: ScatteringState | None = None):
    """E(tau) = ||e^{i tau H} v(tau) - r0||_{H^1} at every checkpoint before the endpoint.

    Returns (taus, t, errors), ordered by increasing |t|.
    """
    state = extract_scattering(traj) if state is None else state
    taus, errs = [], []
    for k in range(len(traj.taus) - 1):
        tau = float(traj.taus[k])
        if tau * state.sign <= 0:
            continue
        back = linear_propagate(traj.fields[k], -tau)
        errs.append(sobolev_norm(back - state.r0, 1.0))
        taus.append(tau)
    taus = np.asarray(taus)
    order = np.argsort(np.abs(taus))
    taus = taus[order]
    return taus, np.abs(t_of_tau(taus)) if taus.size else np.zeros(0), np.asarray(errs)[order]


@dataclass(frozen=True)
class RateFit:
    t: np.ndarray
    errors: np.ndarray
    mu: float
    intercept: float
    r2: float
    window: tuple
    n_window: int
    floor: float
    verdict: str  # "fitted" or "inconclusive"

    def as_dict(self) -> dict:
        return {
            "mu": None if math.isnan(self.mu) else self.mu,
            "intercept": None if math.isnan(self.intercept) else self.intercept,
            "r2": None if math.isnan(self.r2) else self.r2,
            "window": list(self.window),
            "n_window": self.n_window,
            "floor": self.floor,
            "verdict": self.verdict,
        }


MIN_RATE_SAMPLES = 8


def fit_decay(t, errors, taus=None, floor: float = 0.0, tau_limit: float | None = None, min_samples: int = MIN_RATE_SAMPLES) -> RateFit:
    """Least-squares fit of log E = intercept - mu log t over the fit window.

    The window keeps samples with E > 10 floor and, when ``tau_limit`` is
    given, |tau| <= tau_limit.  Fewer than ``min_samples`` survivors give an
    "inconclusive" fit with NaN exponent.
    """
    t = np.asarray(t, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = (errors > 10.0 * floor) & (errors > 0) & (t > 0)
    if tau_limit is not None and taus is not None:
        keep &= np.abs(np.asarray(taus)) <= tau_limit + 1e-12
    if keep.sum() < min_samples:
        nan = float("nan")
        return RateFit(t, errors, nan, nan, nan, (nan, nan), int(keep.sum()), floor, "inconclusive")
    x = np.log(t[keep])
    y = np.log(errors[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res <= 1e-24 else 0.0)
    window = (float(t[keep].min()), float(t[keep].max()))
    return RateFit(t, errors, float(-slope), float(intercept), float(r2), window, int(keep.sum()), floor, "fitted")


def refinement_floor(coarse: Trajectory, fine: Trajectory) -> float:
    """max |E_dt - E_dt/2| over the samples both trajectories share."""
    tc, _, ec = error_series(coarse)
    tf, _, ef = error_series(fine)
    common, ic, jf = np.intersect1d(np.round(tc, 12), np.round(tf, 12), return_indices=True)
    if common.size == 0:
        raise ValueError("the refinement pair shares no samples")
    return float(np.max(np.abs(ec[ic] - ef[jf])))


def rate_fit(traj: Trajectory, state: ScatteringState | None = None, floor: float = 0.0, margin: int = 10) -> RateFit:
    """Fit the decay exponent of E(t); samples within ``margin`` steps of the endpoint are excluded."""
    taus, t, errs = error_series(traj, state)
    limit = QUARTER - margin * abs(traj.config.dt)
    return fit_decay(t, errs, taus, floor=floor, tau_limit=limit)


# --------------------------------------------------------------- tail fits

@dataclass(frozen=True)
class TailFit:
    thresholds: np.ndarray
    exceedance: np.ndarray
    slope: float
    intercept: float
    r2: float
    degenerate: bool

    def as_dict(self) -> dict:
        clean = lambda x: None if math.isnan(x) else x  # noqa: E731
        return {
            "thresholds": self.thresholds.tolist(),
            "exceedance": self.exceedance.tolist(),
            "slope": clean(self.slope),
            "intercept": clean(self.intercept),
            "r2": clean(self.r2),
            "degenerate": self.degenerate,
        }


def tail_fit(values, thresholds=None, min_exceed: int = 10, lower_quantile: float = 0.9, count: int = 16) -> TailFit:
    """Fit log P(X > K) against K^2.

    Default thresholds are ``count`` equispaced values from the
    ``lower_quantile`` quantile to the largest value that still leaves
    ``min_exceed`` samples above it.  Thresholds with fewer exceedances are
    dropped.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size < 500:
        raise ValueError("tail fits need at least 500 samples")
    nan = float("nan")
    if x[-1] - x[0] <= 1e-12 * max(1.0, abs(x[-1])):
        return TailFit(np.zeros(0), np.zeros(0), nan, nan, nan, True)
    if thresholds is None:
        lo = np.quantile(x, lower_quantile)
        hi = x[-min_exceed - 1]
        thresholds = np.linspace(lo, hi, count) if hi > lo else np.array([lo])
    thresholds = np.asarray(thresholds, dtype=float)
    exceed = x.size - np.searchsorted(x, thresholds, side="right")
    keep = exceed >= min_exceed
    thresholds, exceed = thresholds[keep], exceed[keep]
    prob = exceed / x.size
    if thresholds.size < 3:
        return TailFit(thresholds, prob, nan, nan, nan, True)
    k2 = thresholds**2
    y = np.log(prob)
    slope, intercept = np.polyfit(k2, y, 1)
    resid = y - (slope * k2 + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else nan
    return TailFit(thresholds, prob, float(slope), float(intercept), float(r2), False)


# ---------------------------------------------------------- regularity ceiling

@dataclass(frozen=True)
class CeilingReport:
    ladder: tuple
    medians: tuple
    ratio: float
    verdict: str  # "diverging" or "bounded"


def regularity_ceiling(
    n: int,
    s: float,
    delta_reg: float,
    eps: float,
    law: RandomLaw = RandomLaw(),
    ladder=(8, 16, 32, 64),
    seeds=range(16),
    amplitude: float = 1.0,
) -> CeilingReport:
    """Median over draws of ||u0||_{H^{s+eps}} across the cutoff ladder.

    "diverging" iff the medians strictly increase and last/first > 2.
    """
    from .hermite import build_basis

    medians = []
    seeds = list(seeds)
    for J in ladder:
        basis = build_basis(n, J)
        gamma = build_gamma(basis, s, delta_reg, amplitude)
        norms = [sobolev_norm(sample(gamma, law, seed).u0, s + eps) for seed in seeds]
        medians.append(float(np.median(norms)))
    first, last = medians[0], medians[-1]
    ratio = last / first if first > 0 else (math.inf if last > 0 else 1.0)
    increasing = all(b > a for a, b in zip(medians, medians[1:]))
    verdict = "diverging" if increasing and ratio > 2 else "bounded"
    return CeilingReport(tuple(ladder), tuple(medians), float(ratio), verdict)
