"""Cell-centered rectangular grids, fields, and discrete calculus.

Scalar fields are sampled at cell centers of a uniform rectangular grid in
two or three dimensions.  Differential operators come in two boundary
flavours: homogeneous Neumann, realized by ghost-cell even reflection
(second order), and periodic wraparound.  The module also provides the
mean-free inverse of the negative Laplacian, which defines the dual-space
norm used by the gradient-flow diagnostics.

All operations are pure functions of their inputs; sums are evaluated with
fixed numpy reduction order, so results are reproducible run to run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import (
    DomainMismatch,
    NonZeroMean,
    PreconditionViolated,
    SolverDivergence,
    UnsupportedDimension,
)

NEUMANN = "neumann"
PERIODIC = "periodic"

_L2 = "l2"
_H1 = "h1"
_VSTAR = "vstar"


@dataclass(frozen=True)
class Domain:
    """Uniform rectangular box ``[0, L_1] x ... x [0, L_d]`` split into cells.

    Parameters
    ----------
    lengths : tuple of float
        Side lengths per axis, all positive.
    cells : tuple of int
        Number of cells per axis, at least 4 each.
    boundary : str
        Either ``"neumann"`` or ``"periodic"``.
    """

    lengths: tuple
    cells: tuple
    boundary: str = NEUMANN

    def __post_init__(self):
        lengths = tuple(float(l) for l in self.lengths)
        cells = tuple(int(n) for n in self.cells)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "cells", cells)
        if len(lengths) not in (2, 3):
            raise UnsupportedDimension(f"dim must be 2 or 3, got {len(lengths)}")
        if len(cells) != len(lengths):
            raise ValueError("lengths and cells must have matching dimension")
        if any(l <= 0 for l in lengths):
            raise ValueError("domain lengths must be positive")
        if any(n < 4 for n in cells):
            raise ValueError("need at least 4 cells per axis")
        if self.boundary not in (NEUMANN, PERIODIC):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def spacing(self) -> tuple:
        # derived, never stored: spacing_i * cells_i reproduces lengths_i
        return tuple(l / n for l, n in zip(self.lengths, self.cells))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def centers(self) -> tuple:
        """1D arrays of cell-center coordinates per axis."""
        return tuple(
            (np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)
        )

    def mesh(self) -> tuple:
        """Full coordinate arrays of shape ``cells`` (ij indexing)."""
        return tuple(np.meshgrid(*self.centers(), indexing="ij"))


@dataclass
class Field:
    """Scalar samples at cell centers, flat in row-major cell order."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size != self.domain.n_cells:
            raise ValueError(
                f"expected {self.domain.n_cells} values, got {v.size}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    def grid(self) -> np.ndarray:
        """Values reshaped to the cell grid (a view)."""
        return self.values.reshape(self.domain.cells)

    def copy(self) -> "Field":
        return Field(self.domain, self.values.copy())

    @classmethod
    def zeros(cls, domain: Domain) -> "Field":
        return cls(domain, np.zeros(domain.n_cells))

    @classmethod
    def constant(cls, domain: Domain, value: float) -> "Field":
        return cls(domain, np.full(domain.n_cells, float(value)))

    @classmethod
    def from_function(cls, domain: Domain, fn) -> "Field":
        """Sample ``fn(*coords)`` at cell centers."""
        return cls(domain, fn(*domain.mesh()))

    def __add__(self, other):
        _check_same_domain(self, other)
        return Field(self.domain, self.values + other.values)

    def __sub__(self, other):
        _check_same_domain(self, other)
        return Field(self.domain, self.values - other.values)

    def __mul__(self, scalar):
        return Field(self.domain, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass
class VectorField:
    """One scalar sample per cell for each spatial component."""

    domain: Domain
    components: tuple

    def __post_init__(self):
        comps = []
        for c in self.components:
            v = np.asarray(c, dtype=np.float64).ravel()
            if v.size != self.domain.n_cells:
                raise ValueError("component length must equal cell count")
            if not np.all(np.isfinite(v)):
                raise ValueError("vector components must be finite")
            comps.append(v)
        if len(comps) != self.domain.dim:
            raise ValueError("need one component per axis")
        self.components = tuple(comps)

    def grids(self) -> tuple:
        return tuple(c.reshape(self.domain.cells) for c in self.components)

    @classmethod
    def zeros(cls, domain: Domain) -> "VectorField":
        return cls(domain, tuple(np.zeros(domain.n_cells) for _ in range(domain.dim)))


def _check_same_domain(a, b):
    if a.domain != b.domain:
        raise DomainMismatch("fields live on different domains")


# ---------------------------------------------------------------------------
# basic reductions


def mean(f: Field) -> float:
    """Cell average of the field; exact for constants on the uniform grid."""
    return float(np.mean(f.values))


def inner(f: Field, g: Field) -> float:
    """L2 inner product with midpoint (cell-volume) weights."""
    _check_same_domain(f, g)
    return f.domain.cell_volume * float(np.dot(f.values, g.values))


# ---------------------------------------------------------------------------
# stencil operators (arrays in cell-grid shape)


def _pad_mode(domain: Domain) -> str:
    return "wrap" if domain.boundary == PERIODIC else "edge"


def _lap_array(a: np.ndarray, domain: Domain) -> np.ndarray:
    """Second-order Laplacian stencil with reflecting or periodic ghosts."""
    p = np.pad(a, 1, mode=_pad_mode(domain))
    d = domain.dim
    core = tuple(slice(1, -1) for _ in range(d))
    out = np.zeros_like(a)
    diag = 0.0
    for ax, h in enumerate(domain.spacing):
        up = list(core)
        dn = list(core)
        up[ax] = slice(2, None)
        dn[ax] = slice(None, -2)
        out += (p[tuple(up)] + p[tuple(dn)]) / h**2
        diag += 2.0 / h**2
    out -= diag * a
    return out


def _grad_arrays(a: np.ndarray, domain: Domain) -> list:
    """Centered-difference gradient, one array per axis."""
    p = np.pad(a, 1, mode=_pad_mode(domain))
    core = tuple(slice(1, -1) for _ in range(domain.dim))
    grads = []
    for ax, h in enumerate(domain.spacing):
        up = list(core)
        dn = list(core)
        up[ax] = slice(2, None)
        dn[ax] = slice(None, -2)
        grads.append((p[tuple(up)] - p[tuple(dn)]) / (2.0 * h))
    return grads


def laplacian(f: Field) -> Field:
    """Discrete Laplacian; output has zero mean up to float accumulation."""
    return Field(f.domain, _lap_array(f.grid(), f.domain))


def gradient(f: Field) -> VectorField:
    """Centered-difference gradient; exact for affine fields away from walls."""
    return VectorField(f.domain, tuple(_grad_arrays(f.grid(), f.domain)))


def divergence_flux(F: VectorField, trace_tol: float = 1e-3) -> Field:
    """Conservative (flux-form) divergence of a cell-centered vector field.

    Face values are arithmetic averages of the adjacent cells; Neumann walls
    carry zero flux, so the cell sum of the output telescopes to zero and the
    transport term conserves mass exactly.

    Raises
    ------
    PreconditionViolated
        In Neumann mode, if the extrapolated boundary-normal component
        exceeds ``trace_tol`` relative to the field magnitude.
    """
    domain = F.domain
    comps = F.grids()
    scale = max(float(np.max(np.abs(c))) for c in comps) if comps else 0.0
    out = np.zeros(domain.cells)
    periodic = domain.boundary == PERIODIC
    for ax, h in enumerate(domain.spacing):
        g = comps[ax]
        if not periodic:
            lo = _axis_slice(g, ax, 0)
            lo2 = _axis_slice(g, ax, 1)
            hi = _axis_slice(g, ax, -1)
            hi2 = _axis_slice(g, ax, -2)
            trace = max(
                float(np.max(np.abs(1.5 * lo - 0.5 * lo2))),
                float(np.max(np.abs(1.5 * hi - 0.5 * hi2))),
            )
            if trace > trace_tol * (1.0 + scale):
                raise PreconditionViolated(
                    "nonzero normal velocity on a Neumann wall "
                    f"(trace {trace:.3e} > tol {trace_tol:.3e})"
                )
        inner_faces = 0.5 * (
            g[_axis_range(domain.dim, ax, 1, None)]
            + g[_axis_range(domain.dim, ax, None, -1)]
        )
        if periodic:
            wrap = 0.5 * (_axis_slice(g, ax, 0) + _axis_slice(g, ax, -1))
            wrap = np.expand_dims(wrap, ax)
            faces = np.concatenate([wrap, inner_faces, wrap], axis=ax)
        else:
            zero = np.zeros_like(np.expand_dims(_axis_slice(g, ax, 0), ax))
            faces = np.concatenate([zero, inner_faces, zero], axis=ax)
        out += np.diff(faces, axis=ax) / h
    return Field(domain, out)


def _axis_slice(a: np.ndarray, ax: int, idx: int) -> np.ndarray:
    sl = [slice(None)] * a.ndim
    sl[ax] = idx
    return a[tuple(sl)]


def _axis_range(ndim: int, ax: int, start, stop) -> tuple:
    sl = [slice(None)] * ndim
    sl[ax] = slice(start, stop)
    return tuple(sl)


# ---------------------------------------------------------------------------
# spectral diagonalization of the stencil Laplacian
#
# The reflecting stencil is diagonal in the DCT-II basis, the periodic one in
# the Fourier basis; both diagonalizations are exact for the stencil above,
# which makes them ideal preconditioners (and direct solvers) for the
# constant-coefficient solves.


def laplacian_symbol(domain: Domain) -> np.ndarray:
    """Eigenvalues (all <= 0) of the stencil Laplacian on the transform grid."""
    axes = []
    for n, h in zip(domain.cells, domain.spacing):
        k = np.arange(n)
        if domain.boundary == PERIODIC:
            lam = (2.0 * np.cos(2.0 * np.pi * k / n) - 2.0) / h**2
        else:
            lam = (2.0 * np.cos(np.pi * k / n) - 2.0) / h**2
        axes.append(lam)
    if domain.boundary == PERIODIC:
        # real-FFT layout: last axis is halved
        axes[-1] = axes[-1][: domain.cells[-1] // 2 + 1]
    out = axes[0]
    for lam in axes[1:]:
        out = np.add.outer(out, lam)
    return out


def to_modes(a: np.ndarray, domain: Domain) -> np.ndarray:
    if domain.boundary == PERIODIC:
        return scipy.fft.rfftn(a, norm="ortho")
    return scipy.fft.dctn(a, type=2, norm="ortho")


def from_modes(coeffs: np.ndarray, domain: Domain) -> np.ndarray:
    if domain.boundary == PERIODIC:
        return scipy.fft.irfftn(coeffs, s=domain.cells, norm="ortho")
    return scipy.fft.idctn(coeffs, type=2, norm="ortho")


def _poisson_solve_array(b: np.ndarray, domain: Domain, symbol=None) -> np.ndarray:
    """Exact mean-free solve of ``-lap z = b`` in the diagonalizing basis."""
    lam = laplacian_symbol(domain) if symbol is None else symbol
    coeffs = to_modes(b, domain)
    with np.errstate(divide="ignore", invalid="ignore"):
        coeffs = np.where(lam < 0, coeffs / (-lam), 0.0)
    return from_modes(coeffs, domain)


# ---------------------------------------------------------------------------
# conjugate gradients


def pcg(apply_a, b, x0=None, rtol=1e-10, maxiter=500, precond=None):
    """Preconditioned conjugate gradients for SPD operators on arrays.

    Returns ``(x, iterations, relative_residual)``; the caller decides
    whether a non-converged result is an error.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_a(x)
    bnorm = float(np.linalg.norm(b.ravel()))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    relres = float(np.linalg.norm(r.ravel())) / bnorm
    if relres <= rtol:
        return x, 0, relres
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(np.dot(r.ravel(), z.ravel()))
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        pap = float(np.dot(p.ravel(), ap.ravel()))
        if pap <= 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        relres = float(np.linalg.norm(r.ravel())) / bnorm
        if relres <= rtol:
            return x, it, relres
        z = precond(r) if precond is not None else r
        rz_new = float(np.dot(r.ravel(), z.ravel()))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, relres


def inverse_neumann_laplacian(
    f: Field, rtol: float = 1e-10, maxiter: int = 200, mean_tol: float = 1e-8
) -> Field:
    """Mean-free solution of ``-lap z = f``.

    Conjugate-direction iteration on the zero-mean subspace, preconditioned
    by the exact spectral factorization of the stencil (so it converges in a
    couple of iterations).  The input must be mean-free.

    Raises
    ------
    NonZeroMean
        If ``|mean(f)|`` exceeds ``mean_tol`` relative to the field size.
    SolverDivergence
        If the iteration fails to reach ``rtol``.
    """
    m = mean(f)
    scale = float(np.max(np.abs(f.values))) if f.values.size else 0.0
    if abs(m) > mean_tol * (1.0 + scale):
        raise NonZeroMean(f"mean {m:.3e} too large for an inverse-Laplacian solve")
    domain = f.domain
    b = f.grid() - m
    symbol = laplacian_symbol(domain)

    def apply_a(x):
        return -_lap_array(x, domain)

    def precond(r):
        return _poisson_solve_array(r, domain, symbol)

    z, _, relres = pcg(apply_a, b, rtol=rtol, maxiter=maxiter, precond=precond)
    if relres > rtol:
        raise SolverDivergence(
            f"inverse Laplacian stalled at relative residual {relres:.3e}"
        )
    z -= np.mean(z)
    return Field(domain, z)


# ---------------------------------------------------------------------------
# norms


def norm(f: Field, which: str = _L2) -> float:
    """Grid norm of a field: ``"l2"``, ``"h1"``, or the dual ``"vstar"``.

    The dual norm is ``sqrt((Nf, f))`` with ``N`` the mean-free inverse
    Laplacian and requires a mean-free input.
    """
    if which == _L2:
        return math.sqrt(max(inner(f, f), 0.0))
    if which == _H1:
        g = gradient(f)
        total = inner(f, f)
        for c in g.components:
            total += f.domain.cell_volume * float(np.dot(c, c))
        return math.sqrt(max(total, 0.0))
    if which == _VSTAR:
        z = inverse_neumann_laplacian(f)
        return math.sqrt(max(inner(z, f), 0.0))
    raise ValueError(f"unknown norm {which!r}")


def dirichlet_form(f: Field) -> float:
    """Discrete Dirichlet energy ``-(f, lap f)`` (face-difference form >= 0)."""
    return max(-inner(f, laplacian(f)), 0.0)


# ---------------------------------------------------------------------------
# velocity fields


@dataclass
class VelocityField:
    """Prescribed transport velocity, evaluated per time.

    Kinds
    -----
    zero
        No transport.
    cellular
        Steady divergence-free rolls from the stream function
        ``A sin(pi m x / Lx) sin(pi n y / Ly)`` (Neumann; doubled frequency
        on the torus), with vanishing wall-normal components.
    custom_samples
        Time-indexed snapshots; evaluation picks the nearest sample time.
    """

    kind: str
    domain: Domain
    amplitude: float = 0.0
    modes: tuple = (1, 1)
    times: np.ndarray = None
    samples: tuple = None
    _cache: VectorField = field(default=None, repr=False, compare=False)

    @classmethod
    def zero(cls, domain: Domain) -> "VelocityField":
        return cls("zero", domain)

    @classmethod
    def cellular(cls, domain: Domain, amplitude: float, modes=(1, 1)) -> "VelocityField":
        return cls("cellular", domain, amplitude=float(amplitude), modes=tuple(modes))

    @classmethod
    def from_samples(cls, domain: Domain, times, fields) -> "VelocityField":
        times = np.asarray(times, dtype=np.float64)
        if len(times) != len(fields) or len(times) == 0:
            raise ValueError("need one velocity sample per time")
        return cls("custom_samples", domain, times=times, samples=tuple(fields))

    def at(self, t: float) -> VectorField:
        if self.kind == "zero":
            if self._cache is None:
                self._cache = VectorField.zeros(self.domain)
            return self._cache
        if self.kind == "cellular":
            if self._cache is None:
                self._cache = _cellular_rolls(self.domain, self.amplitude, self.modes)
            return self._cache
        if self.kind == "custom_samples":
            idx = int(np.argmin(np.abs(self.times - t)))
            return self.samples[idx]
        raise ValueError(f"unknown velocity kind {self.kind!r}")

    def max_divergence(self) -> float:
        """L2 norm of the discrete divergence at time zero."""
        return norm(divergence_flux(self.at(0.0)), _L2)


def _cellular_rolls(domain: Domain, amplitude: float, modes) -> VectorField:
    xs = domain.mesh()
    L = domain.lengths
    m = tuple(int(v) for v in modes[: domain.dim])
    # wavenumbers; Neumann rolls use half wavelengths so that the normal
    # component vanishes on each wall, periodic ones use full wavelengths
    factor = 2.0 * np.pi if domain.boundary == PERIODIC else np.pi
    kx = factor * m[0] / L[0]
    ky = factor * (m[1] if len(m) > 1 else 1) / L[1]
    sx, cx = np.sin(kx * xs[0]), np.cos(kx * xs[0])
    sy, cy = np.sin(ky * xs[1]), np.cos(ky * xs[1])
    # v = curl(psi e_z) with psi = A sin(kx x) sin(ky y): div-free, zero trace
    v1 = amplitude * ky * sx * cy
    v2 = -amplitude * kx * cx * sy
    comps = [v1, v2]
    if domain.dim == 3:
        comps.append(np.zeros(domain.cells))
    return VectorField(domain, tuple(c.ravel() for c in comps))
