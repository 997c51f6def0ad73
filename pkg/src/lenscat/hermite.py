"""Tensor Hermite eigenbasis of the harmonic oscillator H = -Delta + |x|^2.

Everything here is built on per-axis tables of the normalized Hermite
functions psi_d evaluated at Gauss-Hermite nodes.  Fields are stored in two
flavours: :class:`SpectralField` (coefficients in the eigenbasis, ordered by
eigenvalue) and :class:`GridField` (values on the tensor quadrature grid).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite

DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes


@dataclass(frozen=True, eq=False)
class BasisTable:
    """Immutable description of a truncated Hermite basis and its grid.

    ``truncation="cluster"`` keeps every multi-index whose eigenvalue
    2|alpha| + n lies in a cluster I(j) with j <= J.  ``truncation="tensor"``
    keeps every multi-index with per-axis degree below M; on that basis the
    grid transforms are square and mutually inverse, which is what the time
    integrator needs.
    """

    n: int
    J: int
    M: int
    truncation: str
    indices: np.ndarray  # (N, n) multi-indices, eigenvalue order
    eigenvalues: np.ndarray  # (N,) float, 2|alpha| + n
    cluster_index: np.ndarray  # (N,) cluster j of each basis element
    cluster_ranges: dict  # j -> (start, stop) into the ordering
    flat: np.ndarray  # (N,) offsets into the dense (M,)*n coefficient tensor
    nodes: np.ndarray  # (M,)
    weights: np.ndarray  # (M,), int f dx ~ sum weights * f(nodes)
    values: np.ndarray  # (M, M+1), psi_d(nodes[i]) for d = 0..M
    derivatives: np.ndarray  # (M, M+1), psi_d'(nodes[i])

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    @property
    def max_degree(self) -> int:
        return int(self.indices.max()) if self.size else 0

    @property
    def grid_shape(self) -> tuple:
        return (self.M,) * self.n

    def cluster_sizes(self) -> dict:
        return {j: b - a for j, (a, b) in self.cluster_ranges.items()}

    def same_grid(self, other: "BasisTable") -> bool:
        return self is other or (self.n == other.n and self.M == other.M)

    def to_dense(self, coeffs: np.ndarray) -> np.ndarray:
        dense = np.zeros(self.grid_shape, dtype=complex)
        dense.flat[self.flat] = coeffs
        return dense

    def from_dense(self, dense: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(dense.reshape(-1)[self.flat])

    def dense_eigenvalues(self) -> np.ndarray:
        degrees = np.arange(self.M)
        total = np.zeros(self.grid_shape)
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = self.M
            total = total + degrees.reshape(shape)
        return 2.0 * total + self.n

    def grid_points(self) -> list:
        """Coordinate arrays (one per axis) broadcastable over the grid."""
        out = []
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = self.M
            out.append(self.nodes.reshape(shape))
        return out

    def radius_squared(self) -> np.ndarray:
        return sum(x**2 for x in self.grid_points())

    def cell_weights(self) -> np.ndarray:
        """Tensor quadrature weights over the full grid."""
        w = np.ones(self.grid_shape)
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = self.M
            w = w * self.weights.reshape(shape)
        return w

    def metadata(self) -> dict:
        return {
            "basis": "tensor-hermite",
            "n": self.n,
            "J": self.J,
            "M": self.M,
            "truncation": self.truncation,
            "size": self.size,
        }


def hermite_functions(x, dmax: int):
    """Normalized Hermite functions psi_0..psi_dmax and their derivatives at x.

    Uses the three-term recurrence on the polynomial part with running
    rescaling, and applies the Gaussian factor at the end in log form so that
    large degrees and large |x| neither overflow nor underflow prematurely.
    """
    x = np.asarray(x, dtype=float)
    vals = np.empty(x.shape + (dmax + 2,))
    logscale = np.zeros(x.shape)
    prev = np.zeros(x.shape)
    cur = np.full(x.shape, math.pi**-0.25)
    vals[..., 0] = cur
    for d in range(dmax + 1):
        nxt = math.sqrt(2.0 / (d + 1)) * x * cur - math.sqrt(d / (d + 1.0)) * prev
        vals[..., d + 1] = nxt
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e150
        if np.any(big):
            factor = np.where(big, 1e-150, 1.0)
            vals[..., : d + 2] *= factor[..., None]
            prev = prev * factor
            cur = cur * factor
            logscale = logscale + np.where(big, math.log(1e150), 0.0)
    vals *= np.exp(logscale - 0.5 * x**2)[..., None]
    psi = vals[..., : dmax + 1]
    d = np.arange(dmax + 1)
    dpsi = np.empty_like(psi)
    dpsi[..., 0] = 0.0
    dpsi[..., 1:] = np.sqrt(d[1:] / 2.0) * vals[..., : dmax]
    dpsi -= np.sqrt((d + 1) / 2.0) * vals[..., 1 : dmax + 2]
    return psi, dpsi


@functools.lru_cache(maxsize=None)
def _quadrature(M: int):
    nodes, _ = roots_hermite(M)
    # w_i e^{x_i^2} = 1 / (M psi_{M-1}(x_i)^2), evaluated without overflow
    psi, _ = hermite_functions(nodes, M - 1)
    weights = 1.0 / (M * psi[:, M - 1] ** 2)
    for arr in (nodes, weights):
        arr.setflags(write=False)
    return nodes, weights


def cluster_of(eigenvalue) -> np.ndarray:
    """Cluster label j with 2j <= lambda < 2(j+1)."""
    return np.floor_divide(np.asarray(eigenvalue, dtype=np.int64), 2)


def _enumerate(n: int, limit: int, total_max: int | None):
    grids = np.indices((limit + 1,) * n).reshape(n, -1).T
    if total_max is not None:
        grids = grids[grids.sum(axis=1) <= total_max]
    eig = 2 * grids.sum(axis=1) + n
    # eigenvalue first, then lexicographic on alpha
    keys = [grids[:, i] for i in range(n - 1, -1, -1)] + [eig]
    order = np.lexsort(keys)
    return grids[order], eig[order]


@functools.lru_cache(maxsize=64)
def build_basis(
    n: int,
    J: int,
    M: int | None = None,
    truncation: str = "cluster",
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> BasisTable:
    """Build the Hermite basis table for dimension ``n`` and cluster cutoff ``J``.

    Parameters
    ----------
    n : int
        Spatial dimension, 1 to 4.
    J : int
        Largest retained cluster index.  Clusters are kept whole.
    M : int, optional
        Gauss-Hermite points per axis.  Defaults to ``2 * d_max + 1`` where
        ``d_max`` is the largest per-axis degree of the cluster basis.
    truncation : {"cluster", "tensor"}
        See :class:`BasisTable`.

    Raises
    ------
    ValueError
        If ``M`` is below the de-aliasing floor or the grid does not fit in
        ``memory_budget``.
    """
    if n not in (1, 2, 3, 4):
        raise ValueError(f"dimension must be 1..4, got {n}")
    if J < max(1, n // 2):
        raise ValueError(f"cluster cutoff J={J} retains no basis function for n={n}")
    if truncation not in ("cluster", "tensor"):
        raise ValueError(f"unknown truncation {truncation!r}")
    d_max = J - n // 2
    floor = 2 * d_max + 1
    if M is None:
        M = floor
    if M < floor:
        raise ValueError(f"M={M} is below the de-aliasing floor 2*d_max+1={floor}")
    # the transforms keep a handful of complex arrays of the grid size alive
    need = 16 * 8 * M**n
    if need > memory_budget:
        raise ValueError(
            f"grid {M}^{n} needs ~{need / 1e9:.2f} GB, over the budget of {memory_budget / 1e9:.2f} GB"
        )

    if truncation == "cluster":
        indices, eig = _enumerate(n, d_max, d_max)
    else:
        indices, eig = _enumerate(n, M - 1, None)
    clusters = cluster_of(eig)
    ranges = {}
    for j in np.unique(clusters):
        where = np.nonzero(clusters == j)[0]
        ranges[int(j)] = (int(where[0]), int(where[-1]) + 1)
    flat = np.ravel_multi_index(tuple(indices.T), (M,) * n)

    nodes, weights = _quadrature(M)
    values, derivs = hermite_functions(nodes, M)
    for arr in (indices, eig, clusters, flat, values, derivs):
        arr.setflags(write=False)
    return BasisTable(
        n=n,
        J=J if truncation == "cluster" else int(clusters.max()),
        M=M,
        truncation=truncation,
        indices=indices,
        eigenvalues=eig.astype(float),
        cluster_index=clusters,
        cluster_ranges=ranges,
        flat=flat,
        nodes=nodes,
        weights=weights,
        values=values,
        derivatives=derivs,
    )


def state_basis(basis: BasisTable) -> BasisTable:
    """Square tensor basis sharing ``basis``'s grid (the integrator's state space)."""
    if basis.truncation == "tensor":
        return basis
    return build_basis(basis.n, basis.J, basis.M, truncation="tensor")


@dataclass(frozen=True, eq=False)
class SpectralField:
    basis: BasisTable
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (self.basis.size,):
            raise ValueError(f"expected {self.basis.size} coefficients, got {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    def _check(self, other: "SpectralField"):
        if other.basis is not self.basis:
            raise ValueError("fields live on different bases")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.basis, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.basis, -self.coeffs)

    @classmethod
    def zeros(cls, basis: BasisTable) -> "SpectralField":
        return cls(basis, np.zeros(basis.size, dtype=complex))

    @classmethod
    def unit(cls, basis: BasisTable, k: int = 0) -> "SpectralField":
        c = np.zeros(basis.size, dtype=complex)
        c[k] = 1.0
        return cls(basis, c)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def dense(self) -> np.ndarray:
        return self.basis.to_dense(self.coeffs)


@dataclass(frozen=True, eq=False)
class GridField:
    """Values on the tensor Gauss-Hermite grid, optionally dilated by ``scale``.

    A scaled grid has nodes ``scale * nodes`` and weights ``scale * weights``
    per axis; the lens maps produce such grids.
    """

    basis: BasisTable
    values: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.basis.grid_shape:
            raise ValueError(f"expected grid of shape {self.basis.grid_shape}, got {values.shape}")
        object.__setattr__(self, "values", values)

    def cell_weights(self) -> np.ndarray:
        return self.basis.cell_weights() * self.scale**self.basis.n

    def grid_points(self) -> list:
        return [x * self.scale for x in self.basis.grid_points()]

    def radius_squared(self) -> np.ndarray:
        return self.basis.radius_squared() * self.scale**2


def apply_axes(mats, arr: np.ndarray) -> np.ndarray:
    """Apply ``mats[k]`` (shape out x in) along axis k of ``arr``."""
    for axis, mat in enumerate(mats):
        arr = np.moveaxis(np.tensordot(mat, arr, axes=([1], [axis])), 0, axis)
    return arr


def _synth_mats(basis: BasisTable, size: int):
    return basis.values[:, :size]


def synthesize_dense(basis: BasisTable, dense: np.ndarray, derivative_axis: int | None = None) -> np.ndarray:
    mats = []
    for axis in range(basis.n):
        size = dense.shape[axis]
        table = basis.derivatives if axis == derivative_axis else basis.values
        mats.append(table[:, :size])
    return apply_axes(mats, dense)


def analyze_dense(basis: BasisTable, values: np.ndarray) -> np.ndarray:
    mat = (basis.values[:, : basis.M] * basis.weights[:, None]).T
    return apply_axes([mat] * basis.n, values)


def synthesize(f: SpectralField) -> GridField:
    """Evaluate a spectral field on the quadrature grid."""
    return GridField(f.basis, synthesize_dense(f.basis, f.dense()))


def analyze(g: GridField, basis: BasisTable | None = None) -> SpectralField:
    """Project grid values onto ``basis`` (default: the grid's own basis) by quadrature."""
    basis = g.basis if basis is None else basis
    if not basis.same_grid(g.basis):
        raise ValueError("grid field and target basis do not share a grid")
    if g.scale != 1.0:
        raise ValueError("cannot analyze a dilated grid; resample it first")
    return SpectralField(basis, basis.from_dense(analyze_dense(basis, g.values)))


def embed(f: SpectralField, target: BasisTable) -> SpectralField:
    """Re-express ``f`` on another basis over the same grid (drops missing modes)."""
    if f.basis is target:
        return f
    if not target.same_grid(f.basis):
        raise ValueError("bases do not share a grid")
    return SpectralField(target, target.from_dense(f.dense()))


def evaluate(f: SpectralField, points) -> np.ndarray:
    """Evaluate the expansion of ``f`` at a tensor product of per-axis points.

    ``points`` is a sequence of n one-dimensional coordinate arrays; the
    result has shape ``(len(points[0]), ..., len(points[n-1]))``.
    """
    dense = f.dense()
    d = f.basis.max_degree + 1
    dense = dense[(slice(0, d),) * f.basis.n]
    mats = [hermite_functions(p, d - 1)[0] for p in points]
    return apply_axes(mats, dense)


# ladder relations: x psi_d = sqrt(d/2) psi_{d-1} + sqrt((d+1)/2) psi_{d+1},
# psi_d' = sqrt(d/2) psi_{d-1} - sqrt((d+1)/2) psi_{d+1}
def _ladder(dense: np.ndarray, axis: int, sign: float) -> np.ndarray:
    size = dense.shape[axis]
    shape = list(dense.shape)
    shape[axis] = size + 1
    out = np.zeros(shape, dtype=complex)
    d = np.arange(size)
    bshape = [1] * dense.ndim
    bshape[axis] = size
    lower = np.sqrt(d / 2.0).reshape(bshape)
    upper = np.sqrt((d + 1) / 2.0).reshape(bshape)
    down = [slice(None)] * dense.ndim
    down[axis] = slice(0, size - 1)
    src = [slice(None)] * dense.ndim
    src[axis] = slice(1, size)
    out[tuple(down)] += (lower * dense)[tuple(src)]
    up = [slice(None)] * dense.ndim
    up[axis] = slice(1, size + 1)
    out[tuple(up)] += sign * upper * dense
    return out


def derivative_coeffs(dense: np.ndarray, axis: int) -> np.ndarray:
    """Coefficients of d/dx_axis applied to a dense coefficient tensor (one degree longer)."""
    return _ladder(dense, axis, -1.0)


def position_coeffs(dense: np.ndarray, axis: int) -> np.ndarray:
    """Coefficients of x_axis times the field (one degree longer)."""
    return _ladder(dense, axis, 1.0)


def apply_gradient(f: SpectralField) -> list:
    """Gradient components on the grid, via ladder relations in coefficient space."""
    dense = f.dense()
    out = []
    for axis in range(f.basis.n):
        out.append(GridField(f.basis, synthesize_dense(f.basis, derivative_coeffs(dense, axis))))
    return out


def apply_weight(f: SpectralField | GridField, power: float) -> GridField:
    """Multiply by <x>^power = (1 + |x|^2)^(power/2) on the grid."""
    if power < 0:
        raise ValueError("weight power must be nonnegative")
    g = synthesize(f) if isinstance(f, SpectralField) else f
    return GridField(g.basis, g.values * (1.0 + g.radius_squared()) ** (power / 2.0), g.scale)


def propagator_phases(eigenvalues: np.ndarray, dt: float) -> np.ndarray:
    # count whole turns first: for dt a dyadic multiple of pi the reduction is exact
    turns = eigenvalues * (dt / (2 * math.pi))
    return np.exp(-2j * math.pi * (turns - np.floor(turns)))


def linear_propagate(f: SpectralField, dt: float) -> SpectralField:
    """Exact harmonic flow e^{-i dt H}: phase rotation of every coefficient."""
    return SpectralField(f.basis, f.coeffs * propagator_phases(f.basis.eigenvalues, dt))


def mehler_matrix(nodes_out: np.ndarray, nodes_in: np.ndarray, tau: float) -> np.ndarray:
    """One-dimensional kernel of e^{-i tau H} restricted to |tau| < pi/2, tau != 0."""
    s = math.sin(2 * tau)
    c = math.cos(2 * tau)
    x = nodes_out[:, None]
    y = nodes_in[None, :]
    prefactor = (2j * math.pi * s) ** -0.5
    return prefactor * np.exp(1j * ((x**2 + y**2) * c - 2 * x * y) / (2 * s))


class KernelSingularityError(ValueError):
    """Raised when the Mehler kernel is evaluated at a multiple of pi/2."""


def mehler_reference(g: GridField, tau: float, oversample: float = 2.0, atol: float = 1e-9) -> GridField:
    """Apply e^{-i tau H} by quadrature against the closed-form Mehler kernel.

    The kernel modulus is the constant (2 pi |sin 2 tau|)^{-n/2}.  The input is
    interpolated through its square tensor-basis expansion and the kernel
    integral is taken on a finer Gauss-Hermite rule whose size grows like
    1/sin^2(2 tau): the kernel oscillates at frequency |x|/|sin 2 tau| and a
    Gauss-Hermite rule resolves frequency k only with ~k^2 nodes.  Used as an independent
    check of :func:`linear_propagate` and of the dispersive bound.
    """
    k = round(tau / math.pi)
    reduced = tau - k * math.pi
    s = abs(math.sin(2 * reduced))
    if s < atol:
        raise KernelSingularityError(f"Mehler kernel is singular at tau={tau}")
    if g.scale != 1.0:
        raise ValueError("mehler_reference expects an undilated grid")
    basis = g.basis
    full = state_basis(basis) if basis.truncation == "cluster" else basis
    interp = analyze(GridField(full, g.values))
    m_fine = int(min(4096, max(basis.M, math.ceil(oversample * basis.M / s**2))))
    fine_nodes, fine_weights = _quadrature(m_fine)
    vals = evaluate(interp, [fine_nodes] * basis.n)
    mat = mehler_matrix(basis.nodes, fine_nodes, reduced) * fine_weights[None, :]
    out = apply_axes([mat] * basis.n, vals)
    # e^{-i pi H} = e^{-i pi n}
    out = out * np.exp(-1j * math.pi * basis.n * k)
    return GridField(basis, out)


def gram_matrix(basis: BasisTable, limit: int | None = None) -> np.ndarray:
    """Discrete Gram matrix of the (first ``limit``) basis functions on the grid."""
    size = basis.size if limit is None else min(limit, basis.size)
    w = basis.cell_weights().reshape(-1)
    cols = np.empty((w.size, size))
    for k in range(size):
        alpha = basis.indices[k]
        vals = basis.values[:, alpha[0]]
        for axis in range(1, basis.n):
            vals = np.multiply.outer(vals, basis.values[:, alpha[axis]])
        cols[:, k] = vals.reshape(-1)
    return cols.T @ (cols * w[:, None])
