import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lenscat.hermite import GridField, SpectralField, analyze, build_basis, synthesize
from lenscat.lens import (
    QUARTER,
    LensFrame,
    coherent_state,
    conjugation_check,
    grid_l2,
    lens_forward,
    lens_inverse,
    t_of_tau,
    tau_of_t,
)


def test_time_map_values():
    assert t_of_tau(0.0) == 0.0 and tau_of_t(0.0) == 0.0
    assert t_of_tau(math.pi / 8) == pytest.approx(0.5, abs=1e-15)
    assert abs(tau_of_t(1e3) - math.atan(2000) / 2) < 1e-12
    assert t_of_tau(QUARTER) == math.inf and t_of_tau(-QUARTER) == -math.inf
    with pytest.raises(ValueError):
        t_of_tau(0.8)


@settings(max_examples=50)
@given(st.floats(-1e3, 1e3))
def test_time_maps_are_inverse(t):
    assert abs(t_of_tau(tau_of_t(t)) - t) <= 1e-13 * max(1.0, abs(t)) ** 2


def test_rate_transfer():
    t = np.geomspace(10, 1e3, 50)
    for mu in (0.9, 1.5, 2.0):
        e = 3.0 * (QUARTER - tau_of_t(t)) ** mu
        slope = np.polyfit(np.log(t), np.log(e), 1)[0]
        assert abs(-slope - mu) < 0.01 * mu


def test_frame():
    assert LensFrame(0.0).scale == 1.0 and LensFrame(0.0).chirp == 0.0
    assert LensFrame(0.3).scale > 1
    with pytest.raises(ValueError):
        LensFrame(QUARTER)


def _random(b, seed):
    rng = np.random.default_rng(seed)
    c = (rng.standard_normal(b.size) + 1j * rng.standard_normal(b.size)) * np.exp(-0.05 * b.eigenvalues)
    return SpectralField(b, c)


def test_identity_at_zero():
    b = build_basis(2, 16)
    u = synthesize(_random(b, 1))
    assert np.array_equal(lens_forward(u, 0.0).values, u.values)


@pytest.mark.parametrize("tau", [0.3, -0.5, 0.7])
def test_round_trip_and_isometry(tau):
    b = build_basis(2, 32)
    u = synthesize(_random(b, 2))
    w = lens_forward(u, tau)
    assert abs(grid_l2(w) - grid_l2(u)) <= 1e-9 * grid_l2(u)
    back = lens_inverse(w, tau)
    assert back.scale == pytest.approx(1.0, abs=1e-15)
    assert np.max(np.abs(back.values - u.values)) < 1e-9


def test_spectral_resampling_preserves_mass():
    b = build_basis(2, 32)
    f = SpectralField(b, np.exp(-0.3 * b.eigenvalues))
    w = lens_forward(f, 0.3)
    assert abs(grid_l2(w) - f.l2_norm()) < 1e-8


def test_conjugation_identity_on_coherent_state():
    b = build_basis(2, 48)
    initial, free = coherent_state([1.0, -0.5], [0.5, 0.3])
    u0 = analyze(GridField(b, initial(b.grid_points())))
    rep = conjugation_check(u0, [0.0, 0.1, 0.2, -0.2], free_flow=free)
    assert rep.oracle_defect[0] == 0.0 and rep.identity_defect[0] == 0.0
    assert np.max(rep.oracle_defect) < 1e-8
    rot = conjugation_check(u0 * np.exp(0.7j), [0.2], free_flow=lambda x, t: np.exp(0.7j) * free(x, t))
    assert abs(rot.oracle_defect[0] - rep.oracle_defect[2]) < 1e-12


def test_coherent_state_is_normalized():
    initial, _ = coherent_state([0.3], [1.0])
    x = np.linspace(-12, 12, 4001)
    assert abs(np.trapezoid(np.abs(initial([x])) ** 2, x) - 1) < 1e-10
