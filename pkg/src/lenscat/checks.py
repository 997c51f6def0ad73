"""Invariant battery behind ``lenscat check``, pinned at small sizes (n <= 2, J <= 32)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .diagnostics import sobolev_norm
from .evolution import EvolutionConfig, evolve
from .hermite import (
    GridField,
    SpectralField,
    analyze,
    apply_gradient,
    build_basis,
    evaluate,
    gram_matrix,
    linear_propagate,
    mehler_reference,
    state_basis,
    synthesize,
)
from .lens import coherent_state, conjugation_check, grid_l2, lens_forward, lens_inverse
from .sampler import RandomLaw, mgf_audit
from .snapshot import SnapshotFormatError, decode, encode


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_field(basis, seed=0, decay=0.0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
    return SpectralField(basis, c * basis.eigenvalues ** (-decay))


def check_gram():
    b = build_basis(2, 32)
    err = float(np.max(np.abs(gram_matrix(b) - np.eye(b.size))))
    return err <= 1e-10, f"max |G - I| = {err:.2e}"


def check_round_trip():
    worst = 0.0
    for n, J in ((1, 32), (2, 32)):
        b = build_basis(n, J)
        f = _random_field(b, seed=n)
        back = analyze(synthesize(f))
        worst = max(worst, float(np.linalg.norm(back.coeffs - f.coeffs) / np.linalg.norm(f.coeffs)))
    return worst <= 1e-10, f"relative round-trip error {worst:.2e}"


def check_clusters():
    oracle = {1: lambda j: 1, 2: lambda j: j, 3: lambda j: int(comb(j + 1, 2))}
    for n, J in ((1, 32), (2, 32), (3, 12)):
        b = build_basis(n, J)
        sizes = b.cluster_sizes()
        first = max(1, (n + 1) // 2)
        for j in range(first, J + 1):
            if sizes.get(j, 0) != oracle[n](j):
                return False, f"n={n}, j={j}: {sizes.get(j, 0)} != {oracle[n](j)}"
        if sum(sizes.values()) != b.size:
            return False, f"n={n}: clusters do not partition the basis"
    return True, "cluster sizes match the combinatorial counts"


def check_ladder():
    b = build_basis(1, 16)
    f = SpectralField(b, np.exp(-0.3 * np.arange(b.size)))
    x = np.linspace(-2, 2, 9)
    errs = []
    g = apply_gradient(f)[0]
    exact = analyze(GridField(state_basis(b), g.values))
    for h in (1e-2, 5e-3):
        fd = (evaluate(f, [x + h]) - evaluate(f, [x - h])) / (2 * h)
        errs.append(float(np.max(np.abs(fd - evaluate(exact, [x])))))
    order = math.log2(errs[0] / errs[1])
    return abs(order - 2) < 0.2, f"finite-difference order {order:.2f}"


def check_propagator():
    b = build_basis(2, 32)
    f = _random_field(b, seed=3)
    period = float(np.max(np.abs(linear_propagate(f, math.pi).coeffs - f.coeffs)))
    group = float(np.max(np.abs(linear_propagate(linear_propagate(f, 0.3), 0.45).coeffs - linear_propagate(f, 0.75).coeffs)))
    ok = period == 0.0 and group <= 1e-12
    return ok, f"pi-period defect {period:.1e}, group-law defect {group:.1e}"


def check_mehler():
    b = build_basis(2, 32)
    phi = SpectralField.unit(b)
    exact = synthesize(linear_propagate(phi, 0.3)).values
    approx = mehler_reference(synthesize(phi), 0.3).values
    err = float(np.max(np.abs(exact - approx)))
    return err <= 1e-8, f"max |Mehler - spectral| = {err:.2e}"


def check_lens():
    b = build_basis(2, 32)
    f = _random_field(b, seed=5, decay=2.0)
    u = synthesize(f)
    w = lens_forward(u, 0.3)
    back = lens_inverse(w, 0.3)
    trip = float(np.max(np.abs(back.values - u.values)))
    iso = abs(grid_l2(w) - grid_l2(u)) / grid_l2(u)
    return trip <= 1e-9 and iso <= 1e-9, f"round trip {trip:.1e}, isometry {iso:.1e}"


def check_conjugation():
    b = build_basis(2, 48)
    initial, free = coherent_state([1.0, -0.5], [0.5, 0.3])
    u0 = analyze(GridField(b, initial(b.grid_points())))
    rep = conjugation_check(u0, [0.0, 0.2], free_flow=free)
    err = float(np.max(rep.oracle_defect))
    return err <= 1e-8, f"conjugation defect {err:.2e}"


def check_mass():
    b = build_basis(2, 16)
    u0 = _random_field(b, seed=7, decay=1.5) * 0.5
    traj = evolve(u0, None, EvolutionConfig(n=2, dt=2e-3, formulation="full_w"))
    drift = float(np.max(np.abs(traj.mass - traj.mass[0])) / traj.mass[0])
    return drift <= 1e-10, f"relative mass drift {drift:.1e}"


def check_mgf():
    grid = np.linspace(-5, 5, 201)
    worst = max(mgf_audit(RandomLaw(kind), grid) for kind in ("gaussian", "rademacher", "uniform"))
    return worst <= 1 + 1e-3, f"max mgf ratio {worst:.6f}"


def check_snapshot():
    b = build_basis(2, 8)
    f = _random_field(b, seed=11)
    blob = encode(f.coeffs, {"n": 2, "J": 8, "M": b.M})
    same = decode(blob).coeffs.tobytes() == f.coeffs.tobytes()
    try:
        decode(b"LENSX" + blob[5:])
        rejected = False
    except SnapshotFormatError:
        rejected = True
    return same and rejected, f"bit-exact {same}, corrupt magic rejected {rejected}"


def check_norms():
    b = build_basis(2, 16)
    f = _random_field(b, seed=13)
    inv = max(abs(sobolev_norm(linear_propagate(f, 0.7), s) - sobolev_norm(f, s)) / sobolev_norm(f, s) for s in (-1, 0, 1, 2))
    mono = sobolev_norm(f, -1) <= sobolev_norm(f, 0) <= sobolev_norm(f, 1)
    return inv <= 1e-12 and mono, f"propagator invariance {inv:.1e}, monotone in s {mono}"


CHECKS = {
    "gram": check_gram,
    "round_trip": check_round_trip,
    "clusters": check_clusters,
    "ladder": check_ladder,
    "propagator": check_propagator,
    "mehler": check_mehler,
    "lens": check_lens,
    "conjugation": check_conjugation,
    "mass": check_mass,
    "mgf": check_mgf,
    "snapshot": check_snapshot,
    "norms": check_norms,
}


def run_checks(names=None) -> list:
    results = []
    for name, fn in CHECKS.items():
        if names and name not in names:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
