import math
import warnings

import numpy as np
import pytest
from scipy.stats import norm

from lenscat.diagnostics import (
    InvalidTrajectoryError,
    StrichartzPair,
    TailResolutionWarning,
    energy,
    energy_audit,
    error_series,
    extract_scattering,
    fit_decay,
    gradient_norm,
    is_admissible,
    k_statistic,
    lebesgue_norm,
    rate_checkpoints,
    rate_fit,
    regularity_ceiling,
    sobolev_norm,
    strichartz_norm,
    tail_fit,
    weighted_norm,
)
from lenscat.evolution import EvolutionConfig, Trajectory, evolve
from lenscat.hermite import GridField, SpectralField, build_basis, linear_propagate, state_basis, synthesize
from lenscat.lens import QUARTER, t_of_tau, tau_of_t
from lenscat.sampler import RandomLaw, build_gamma, sample


def _draw(n=2, J=16, s=0.2, seed=1):
    return sample(build_gamma(build_basis(n, J), s, 0.05), RandomLaw(), seed).u0


def test_sobolev_examples():
    phi = SpectralField.unit(build_basis(2, 8))
    assert sobolev_norm(phi, 0) == 1
    assert sobolev_norm(phi, 1) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert sobolev_norm(phi, -1) == pytest.approx(2**-0.5, abs=1e-15)


def test_sobolev_monotone_in_s_and_homogeneous():
    f = _draw()
    vals = [sobolev_norm(f, s) for s in (-1, -0.5, 0, 0.5, 1, 2)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert sobolev_norm(f * 3.0, 0.7) == pytest.approx(3 * sobolev_norm(f, 0.7), rel=1e-14)


def test_lebesgue_examples():
    phi = SpectralField.unit(build_basis(2, 16))
    assert weighted_norm(phi, 2) == pytest.approx(1, abs=1e-10)
    assert weighted_norm(phi, 4) ** 4 == pytest.approx(1 / (2 * math.pi), abs=1e-12)
    zero = SpectralField.zeros(phi.basis)
    assert weighted_norm(zero, 3, weight=1.0) == 0 and gradient_norm(zero, math.inf) == 0
    assert weighted_norm(phi, math.inf) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-14)
    with pytest.raises(ValueError):
        weighted_norm(phi, 0.5)


def test_tail_warning():
    b = build_basis(1, 16)
    with warnings.catch_warnings():
        warnings.simplefilter("error", TailResolutionWarning)
        weighted_norm(SpectralField.unit(b), 2)
        edge = np.zeros(b.M)
        edge[[0, -1]] = 1.0
        with pytest.raises(TailResolutionWarning):
            lebesgue_norm(GridField(b, edge), 2)
        with pytest.raises(TailResolutionWarning):
            lebesgue_norm(GridField(b, edge), math.inf)


def test_k_statistic_examples():
    b = build_basis(2, 16)
    zero = k_statistic(SpectralField.zeros(b))
    assert zero.total == 0
    phi = SpectralField.unit(b)
    K = k_statistic(phi)
    x = np.linspace(0, 6, 600001)
    oracle = np.max(np.sqrt(1 + x**2) * np.exp(-(x**2) / 2)) / math.sqrt(math.pi)
    # the grid maximum sits on quadrature nodes, so it can only undershoot
    assert oracle - 0.02 < K.terms["sup_weighted"] <= oracle + 1e-12
    assert K.terms["L2"] == pytest.approx(math.sqrt(math.pi / 2), rel=1e-10)
    u = _draw()
    K1, K3 = k_statistic(u, warn=False), k_statistic(u * 3.0, warn=False)
    for name in K1.terms:
        assert K3.terms[name] == pytest.approx(3 * K1.terms[name], rel=1e-12)


def test_k_statistic_recipes():
    assert set(k_statistic(_draw(n=3, J=6, s=0), warn=False).terms) == {
        "sup_weighted", "sup_gradient", "L12/5", "L12_weighted", "L12_gradient"}
    with pytest.raises(ValueError):
        k_statistic(SpectralField.unit(build_basis(1, 4)))
    with pytest.raises(ValueError):
        k_statistic(_draw(), samples=100)


def test_admissibility_examples():
    assert is_admissible(StrichartzPair(2, 6, 3))
    assert not is_admissible(StrichartzPair(2, math.inf, 2))
    assert is_admissible(StrichartzPair(4, 4, 2))
    assert not is_admissible(StrichartzPair(4, 12, 3))


def test_strichartz_constant_in_time():
    b = build_basis(2, 12)
    phi = SpectralField.unit(b)
    traj = evolve(phi, None, EvolutionConfig(n=2, dt=0.01, tau_span=(-QUARTER, QUARTER), formulation="linear"), checkpoints=5)
    for p, q in ((2, 2), (4, 4), (3, 6)):
        expected = (math.pi / 2) ** (1 / p) * weighted_norm(phi, q)
        assert strichartz_norm(traj, p, q) == pytest.approx(expected, rel=1e-10)
    assert strichartz_norm(traj, math.inf, 2) == pytest.approx(1, abs=1e-10)
    with pytest.raises(ValueError):
        strichartz_norm(traj, 0.5, 2)
    with pytest.raises(ValueError):
        strichartz_norm(traj, 2, math.inf, check_admissible=True)
    assert strichartz_norm(traj, 4, 4, derivative=True, check_admissible=True) > 0


def test_energy_at_start_and_lower_bound():
    u0 = _draw()
    cfg = EvolutionConfig(n=2, formulation="remainder_v", dt=2e-3)
    traj = evolve(None, u0, cfg, checkpoints=40)
    e0 = energy(traj.fields[0], u0, 0.0, cfg)
    assert e0.total == pytest.approx(0.25 * weighted_norm(u0, 4) ** 4, rel=1e-12)
    for f, tau in zip(traj.fields, traj.taus):
        s = energy(f, u0, tau, cfg)
        assert s.potential >= 0 and s.total >= 0.5 * sobolev_norm(f, 1) ** 2


@pytest.mark.parametrize("n,J", [(3, 8), (4, 6)])
def test_deterministic_energy_decreases(n, J):
    phi = SpectralField.unit(build_basis(n, J)) * 0.5
    cfg = EvolutionConfig(n=n, dt=2e-3, formulation="deterministic")
    audit = energy_audit(evolve(phi, None, cfg, checkpoints=1))
    assert audit.passed
    e0 = 0.5 * sobolev_norm(phi, 1) ** 2 + 0.25 * weighted_norm(phi, 4) ** 4
    assert audit.samples[0].total == pytest.approx(e0, rel=1e-12)
    assert all(s.total <= e0 * (1 + 1e-12) for s in audit.samples)


def test_enest_ceiling():
    u0 = _draw()
    traj = evolve(None, u0, EvolutionConfig(n=2, dt=2e-3, formulation="remainder_v"), checkpoints=50)
    audit = energy_audit(traj)
    assert audit.passed and audit.K > 0 and math.log(audit.sup_h1) < audit.log_ceiling


def test_scattering_examples():
    b = build_basis(2, 12)
    cfg = EvolutionConfig(n=2, dt=2e-3, formulation="remainder_v")
    zero = extract_scattering(evolve(None, SpectralField.zeros(b), cfg))
    assert zero.h1_norm == 0
    u0 = _draw(J=12)
    traj = evolve(None, u0, cfg)
    st = extract_scattering(traj)
    for s in (-1, 0, 1, 2):
        assert sobolev_norm(st.r0, s) == pytest.approx(sobolev_norm(traj.fields[-1], s), rel=1e-13)
    neg = evolve(None, u0, cfg.with_(tau_span=(0, -QUARTER)))
    assert extract_scattering(neg).sign == -1
    with pytest.raises(ValueError):
        extract_scattering(evolve(None, u0, cfg.with_(tau_span=(0, 0.5))))
    traj.valid, traj.reason = False, "synthetic"
    with pytest.raises(InvalidTrajectoryError):
        extract_scattering(traj)


def test_scattering_refinement_stability():
    u0 = _draw(J=16)
    runs = [evolve(None, u0, EvolutionConfig(n=2, dt=dt, formulation="remainder_v")) for dt in (2e-3, 1e-3, 5e-4)]
    r = [extract_scattering(t).r0 for t in runs]
    est = sobolev_norm(r[1] - r[2], 1)
    assert sobolev_norm(r[0] - r[1], 1) < 5 * 4 * est  # dt vs dt/2 against the next refinement
    assert sobolev_norm(r[1] - r[2], 1) < 5 * est + 1e-15


def _synthetic(mu, dt=1e-5):
    b = build_basis(2, 6)
    state = state_basis(b)
    t = np.geomspace(10, 1e3, 30)
    taus = np.append(tau_of_t(t), QUARTER)
    fields = [linear_propagate(SpectralField.unit(state) * (QUARTER - tau) ** mu, tau) for tau in taus]
    cfg = EvolutionConfig(n=2, dt=dt, formulation="remainder_v")
    return Trajectory(cfg, b, state, taus, fields, SpectralField.zeros(b), dt)


def test_rate_fit_recovers_planted_exponent():
    for mu in (1.5, 2.0, 0.9):
        fit = rate_fit(_synthetic(mu))
        assert fit.verdict == "fitted" and abs(fit.mu - mu) < 0.01 * mu and fit.r2 > 0.999


def test_fit_decay_edge_cases():
    t = np.geomspace(1, 100, 20)
    flat = fit_decay(t, np.full(20, 0.3))
    assert flat.mu == pytest.approx(0, abs=1e-12) and not math.isnan(flat.r2)
    empty = fit_decay(t, np.full(20, 1e-9), floor=1e-9)
    assert empty.verdict == "inconclusive" and math.isnan(empty.mu)
    assert empty.as_dict()["mu"] is None


def test_rate_checkpoints_share_grid():
    a = rate_checkpoints(5e-4)
    b = rate_checkpoints(2.5e-4)
    assert a[0] == pytest.approx(math.pi / 8, abs=1e-3)
    assert a[-1] <= QUARTER - 10 * 5e-4 + 1e-12
    h = QUARTER / math.ceil(QUARTER / 2.5e-4)
    assert np.allclose(a / h, np.rint(a / h), atol=1e-9)
    assert len(a) >= 30 and len(b) >= 30
    assert np.all(rate_checkpoints(5e-4, sign=-1) < 0)


def test_error_series_vanishes_at_endpoint_limit():
    traj = _synthetic(1.5)
    taus, t, e = error_series(traj)
    assert np.all(np.diff(t) > 0) and np.all(np.diff(e) < 0)
    assert np.allclose(t, t_of_tau(taus))


def test_tail_fit_gaussian():
    x = np.random.default_rng(4).standard_normal(1_000_000)
    fit = tail_fit(x)
    assert abs(fit.slope + 0.5) < 0.15 * 0.5 and fit.r2 > 0.95
    # the exact tail over the same thresholds gives the same slope
    exact = np.polyfit(fit.thresholds**2, norm.logsf(fit.thresholds), 1)[0]
    assert abs(fit.slope - exact) < 0.03


def test_tail_fit_degenerate_and_small():
    assert tail_fit(np.full(600, 2.0)).degenerate
    with pytest.raises(ValueError):
        tail_fit(np.arange(100.0))


def test_regularity_ceiling_examples():
    assert regularity_ceiling(2, 0.0, 0.5, 2.0, seeds=range(8)).verdict == "diverging"
    assert regularity_ceiling(2, 0.0, 0.5, 0.0, seeds=range(8)).verdict == "bounded"
    zero = regularity_ceiling(2, 0.0, 0.5, 2.0, seeds=range(2), amplitude=0.0)
    assert zero.verdict == "bounded" and all(m == 0 for m in zero.medians)


def test_dispersive_ceiling():
    b = build_basis(2, 24)
    phi = SpectralField.unit(b)
    l1 = float(np.sum(b.cell_weights() * np.abs(synthesize(phi).values)))
    for tau in (np.arange(64) + 0.5) * (math.pi / 2) / 64:
        sup = lebesgue_norm(synthesize(linear_propagate(phi, tau)), math.inf, warn=False)
        assert sup * (2 * math.pi * abs(math.sin(2 * tau))) ** (b.n / 2) / l1 <= 1 + 1e-6
