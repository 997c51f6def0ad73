"""Admissible profiles and randomized initial data.

A profile gamma = sum c_k phi_k is randomized coefficient-wise,
u0 = sum c_k g_k phi_k, with g_k i.i.d. centered, unit variance and
sub-Gaussian.  Every g_k comes from its own Philox counter stream keyed by
(seed, k), so raising the cutoff J appends new coefficients without
reshuffling the old ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hermite import BasisTable, SpectralField

LAW_KINDS = ("gaussian", "rademacher", "uniform")
DEFAULT_C_ADM = 10.0


@dataclass(frozen=True)
class RandomLaw:
    kind: str = "gaussian"
    kappa: float = 0.5

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown law {self.kind!r}; choose from {LAW_KINDS}")
        if self.kappa <= 0:
            raise ValueError("sub-Gaussian constant must be positive")

    def draw(self, gen: np.random.Generator) -> float:
        if self.kind == "gaussian":
            return float(gen.standard_normal())
        if self.kind == "rademacher":
            return 1.0 if gen.integers(0, 2) else -1.0
        return float(gen.uniform(-math.sqrt(3.0), math.sqrt(3.0)))

    def mgf(self, c):
        """Closed-form E[exp(c g)]."""
        c = np.asarray(c, dtype=float)
        if self.kind == "gaussian":
            return np.exp(c**2 / 2)
        if self.kind == "rademacher":
            return np.cosh(c)
        x = math.sqrt(3.0) * c
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(x == 0, 1.0, np.sinh(x) / np.where(x == 0, 1.0, x))


@dataclass(frozen=True, eq=False)
class GammaProfile:
    basis: BasisTable
    coeffs: np.ndarray
    s: float
    delta_reg: float

    def field(self) -> SpectralField:
        return SpectralField(self.basis, self.coeffs)

    def scaled(self, a: float) -> "GammaProfile":
        return GammaProfile(self.basis, self.coeffs * a, self.s, self.delta_reg)


@dataclass(frozen=True, eq=False)
class Draw:
    seed: int
    profile: GammaProfile
    law: RandomLaw
    u0: SpectralField

    def metadata(self, C_adm: float = DEFAULT_C_ADM) -> dict:
        b = self.profile.basis
        return {
            "n": b.n,
            "s": self.profile.s,
            "delta_reg": self.profile.delta_reg,
            "J": b.J,
            "law": self.law.kind,
            "kappa": self.law.kappa,
            "seed": int(self.seed),
            "C_adm": C_adm,
        }


def cluster_amplitudes(J: int, s: float, delta_reg: float, first: int = 1) -> dict:
    """Cluster masses A_j^2 = (1+j)^(-1-2 delta_reg - s)."""
    return {j: (1.0 + j) ** (-1.0 - 2.0 * delta_reg - s) for j in range(first, J + 1)}


def build_gamma(basis: BasisTable, s: float, delta_reg: float, amplitude: float = 1.0) -> GammaProfile:
    """Equal-in-cluster power-law profile: |c_k|^2 = A_j^2 / #I(j) on cluster j.

    The profile sits in H^s but its H^{s+eps} norms diverge with J for
    eps > 2 delta_reg.
    """
    if not 0 < delta_reg <= 0.5:
        raise ValueError("delta_reg must lie in (0, 0.5]")
    if basis.truncation != "cluster":
        raise ValueError("profiles are defined on cluster-truncated bases")
    coeffs = np.zeros(basis.size, dtype=complex)
    for j, (a, b) in basis.cluster_ranges.items():
        mass = (1.0 + j) ** (-1.0 - 2.0 * delta_reg - s)
        coeffs[a:b] = math.sqrt(mass / (b - a))
    return GammaProfile(basis, amplitude * coeffs, s, delta_reg)


@dataclass(frozen=True)
class AdmissibilityReport:
    per_cluster: dict
    max_ratio: float
    C_adm: float
    passed: bool


def check_admissible(gamma: GammaProfile, C_adm: float = DEFAULT_C_ADM) -> AdmissibilityReport:
    """max_k |c_k|^2 #I(j) / sum_{m in I(j)} |c_m|^2 per cluster; empty clusters pass."""
    mass = np.abs(gamma.coeffs) ** 2
    ratios = {}
    for j, (a, b) in gamma.basis.cluster_ranges.items():
        total = mass[a:b].sum()
        ratios[j] = 0.0 if total == 0 else float(mass[a:b].max() * (b - a) / total)
    worst = max(ratios.values(), default=0.0)
    return AdmissibilityReport(ratios, worst, C_adm, worst <= C_adm)


def coefficient_stream(seed: int, k: int) -> np.random.Generator:
    """Independent counter-based stream for coefficient index k."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(k)]))


def random_coefficients(seed: int, count: int, law: RandomLaw) -> np.ndarray:
    return np.array([law.draw(coefficient_stream(seed, k)) for k in range(count)])


def sample(gamma: GammaProfile, law: RandomLaw, seed: int) -> Draw:
    """Draw u0 = sum c_k g_k(seed) phi_k."""
    g = random_coefficients(seed, gamma.basis.size, law)
    return Draw(int(seed), gamma, law, SpectralField(gamma.basis, gamma.coeffs * g))


def mgf_audit(law: RandomLaw, c_grid, method: str = "exact", samples: int = 200_000, seed: int = 0) -> float:
    """max over c of E[exp(c g)] exp(-kappa c^2).

    ``method="exact"`` uses the closed form for gaussian and rademacher and
    Gauss-Legendre quadrature of the density for the uniform law.
    ``method="monte_carlo"`` averages over draws from the law's own streams.
    """
    c = np.asarray(c_grid, dtype=float)
    if method == "exact":
        if law.kind == "uniform":
            a = math.sqrt(3.0)
            x, w = np.polynomial.legendre.leggauss(64)
            moments = (np.exp(np.outer(c, a * x)) * w).sum(axis=1) / 2.0
        else:
            moments = law.mgf(c)
    elif method == "monte_carlo":
        g = random_coefficients(seed, samples, law) if samples <= 20_000 else _bulk_draws(law, seed, samples)
        moments = np.exp(np.outer(c, g)).mean(axis=1)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.max(moments * np.exp(-law.kappa * c**2)))


def _bulk_draws(law: RandomLaw, seed: int, count: int) -> np.ndarray:
    gen = coefficient_stream(seed, 2**63)
    if law.kind == "gaussian":
        return gen.standard_normal(count)
    if law.kind == "rademacher":
        return gen.integers(0, 2, size=count) * 2.0 - 1.0
    return gen.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=count)
