"""Radial interaction kernels built from mollifiers.

A kernel is ``J(z) = eps^-(2-alpha) * rho_eps(|z|) * |z|^-alpha`` with
``rho_eps(r) = eps^-d rho(r/eps)``; the mollifier ``rho`` is renormalized so
that ``int rho(s) s^(d+1-alpha) ds = 2 / C_d``, which makes the quadratic
interaction energy converge to the Dirichlet energy as the range ``eps``
shrinks.  The discretization integrates ``J`` exactly over grid cells
(polar sub-quadrature at the singular center cell), yielding a symmetric,
nonnegative stencil whose restricted convolution matches the continuum
definition under midpoint quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicSpline

from .errors import (
    AlphaOutOfRange,
    DivergentMoment,
    DomainMismatch,
    KernelUnresolved,
    UnsupportedDimension,
)
from .grid import NEUMANN, PERIODIC, Domain, Field

GAUSSIAN = "gaussian"
COMPACT_POLY = "compact_poly"
CUSTOM = "custom"

_QUAD_OPTS = dict(epsabs=1e-14, epsrel=1e-12, limit=200)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in dimension d."""
    if d == 2:
        return 2.0 * math.pi
    if d == 3:
        return 4.0 * math.pi
    raise UnsupportedDimension(f"d must be 2 or 3, got {d}")


def c_d(d: int) -> float:
    """Second moment of a coordinate over the unit sphere.

    Equals ``|S^(d-1)| / d`` by symmetry: pi in 2D, 4 pi / 3 in 3D.
    """
    return sphere_area(d) / d


@dataclass
class MollifierSpec:
    """Radial profile ``rho`` on [0, inf) with its derivative.

    Use the constructors :meth:`gaussian`, :meth:`compact_poly`, or
    :meth:`from_samples`; then :func:`normalize_mollifier` fixes the moment
    so the kernel family carries the right interaction strength.  The
    ``normalization_constant`` records the factor applied by the most recent
    normalization (1.0 if already normalized).
    """

    kind: str
    q: int = None
    radii: np.ndarray = None
    rho_samples: np.ndarray = None
    drho_samples: np.ndarray = None
    amplitude: float = 1.0
    normalization_constant: float = 1.0
    d: int = None
    alpha: float = None
    _rho_spline: object = field(default=None, repr=False, compare=False)
    _drho_spline: object = field(default=None, repr=False, compare=False)

    @classmethod
    def gaussian(cls) -> "MollifierSpec":
        return cls(GAUSSIAN)

    @classmethod
    def compact_poly(cls, q: int = 2) -> "MollifierSpec":
        if q < 2:
            raise ValueError("compact_poly needs q >= 2 for a C1 profile")
        return cls(COMPACT_POLY, q=int(q))

    @classmethod
    def from_samples(cls, radii, rho, drho) -> "MollifierSpec":
        radii = np.asarray(radii, dtype=np.float64)
        rho = np.asarray(rho, dtype=np.float64)
        drho = np.asarray(drho, dtype=np.float64)
        if radii.ndim != 1 or radii.size < 8:
            raise ValueError("need at least 8 radial samples")
        if not (np.all(np.diff(radii) > 0) and radii[0] == 0.0):
            raise ValueError("radii must increase from 0")
        if np.any(rho < 0):
            raise ValueError("rho must be nonnegative")
        return cls(CUSTOM, radii=radii, rho_samples=rho, drho_samples=drho)

    def support(self) -> float:
        """Radius beyond which rho vanishes (inf for the gaussian)."""
        if self.kind == GAUSSIAN:
            return np.inf
        if self.kind == COMPACT_POLY:
            return 1.0
        return float(self.radii[-1])

    def rho(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == GAUSSIAN:
            out = np.exp(-(s**2))
        elif self.kind == COMPACT_POLY:
            out = np.clip(1.0 - s**2, 0.0, None) ** self.q
        else:
            if self._rho_spline is None:
                self._rho_spline = CubicSpline(self.radii, self.rho_samples)
            out = np.where(
                s <= self.radii[-1], np.clip(self._rho_spline(s), 0.0, None), 0.0
            )
        return self.amplitude * out

    def drho(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == GAUSSIAN:
            out = -2.0 * s * np.exp(-(s**2))
        elif self.kind == COMPACT_POLY:
            out = -2.0 * self.q * s * np.clip(1.0 - s**2, 0.0, None) ** (self.q - 1)
        else:
            if self._drho_spline is None:
                self._drho_spline = CubicSpline(self.radii, self.drho_samples)
            out = np.where(s <= self.radii[-1], self._drho_spline(s), 0.0)
        return self.amplitude * out


def _radial_quad(fn, upper: float) -> float:
    """Integrate ``fn`` on (0, upper), refining until the estimate settles."""
    breaks = [0.0, 1.0, upper] if upper > 1.0 else [0.0, upper]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        try:
            val = err = 0.0
            for lo, hi in zip(breaks[:-1], breaks[1:]):
                v, e = quad(fn, lo, hi, **_QUAD_OPTS)
                val += v
                err += e
        except Exception as exc:  # noqa: BLE001
            raise DivergentMoment(f"radial quadrature failed: {exc}") from exc
    # convergence judged by the returned estimate, not by roundoff warnings
    if not np.isfinite(val) or err > 1e-8 * (abs(val) + 1e-30) + 1e-13:
        raise DivergentMoment(
            f"radial quadrature did not converge (value {val:.3e}, error {err:.3e})"
        )
    return float(val)


def moment(spec: MollifierSpec, power: float) -> float:
    """``int_0^inf rho(s) s^power ds`` by adaptive quadrature."""
    return _radial_quad(lambda s: spec.rho(s) * s**power, spec.support())


def _check_alpha(d: int, alpha: float):
    if not 0.0 < alpha < d - 1:
        raise AlphaOutOfRange(
            f"alpha must lie in (0, {d - 1}) for d={d}, got {alpha}"
        )


def normalize_mollifier(spec: MollifierSpec, d: int, alpha: float) -> MollifierSpec:
    """Rescale rho so its (d+1-alpha)-th moment equals ``2 / C_d``.

    Also validates the profile: nonnegativity, a consistent derivative for
    sampled profiles, and integrability of ``|rho'(s)| s^(d-1-alpha)``.

    Raises
    ------
    DivergentMoment
        If a required radial integral does not converge.
    AlphaOutOfRange, UnsupportedDimension
        For parameters outside the admissible window.
    """
    if d not in (2, 3):
        raise UnsupportedDimension(f"d must be 2 or 3, got {d}")
    _check_alpha(d, alpha)
    if spec.kind == CUSTOM:
        _check_sampled_derivative(spec)
    # the gradient integrability required of admissible profiles
    _radial_quad(lambda s: np.abs(spec.drho(s)) * s ** (d - 1 - alpha), spec.support())
    raw = moment(spec, d + 1 - alpha)
    if raw <= 0:
        raise DivergentMoment("mollifier moment must be positive")
    c = (2.0 / c_d(d)) / raw
    return replace(
        spec,
        amplitude=spec.amplitude * c,
        normalization_constant=c,
        d=d,
        alpha=float(alpha),
        _rho_spline=None,
        _drho_spline=None,
    )


def _check_sampled_derivative(spec: MollifierSpec, rel_tol: float = 1e-4):
    r = spec.radii
    rho = spec.rho_samples
    drho = spec.drho_samples
    fd = np.gradient(rho, r)
    scale = np.max(np.abs(drho)) + 1e-30
    # compare away from the endpoints, where one-sided differences are crude
    sl = slice(2, -2)
    err = np.max(np.abs(fd[sl] - drho[sl])) / scale
    if err > 10 * rel_tol:
        raise ValueError(
            f"sampled rho' inconsistent with rho (relative gap {err:.2e})"
        )


def tilde_rho_tail(spec: MollifierSpec, eps: float, delta: float) -> float:
    """Mass of the rescaled profile beyond radius ``delta``.

    Equals ``int_{delta/eps}^inf rho(s) s^(d+1-alpha) ds``; at ``delta = 0``
    this is the full normalized moment ``2 / C_d``, and for fixed ``delta``
    it vanishes as ``eps`` shrinks.
    """
    if spec.d is None or spec.alpha is None:
        raise ValueError("normalize_mollifier must run before tail evaluation")
    lo = delta / eps
    upper = spec.support()
    if lo >= upper:
        return 0.0
    power = spec.d + 1 - spec.alpha
    fn = lambda s: spec.rho(s) * s**power  # noqa: E731
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            if np.isinf(upper):
                val, _ = quad(fn, lo, np.inf, **_QUAD_OPTS)
            else:
                val, _ = quad(fn, lo, upper, **_QUAD_OPTS)
        except (IntegrationWarning, Exception) as exc:  # noqa: BLE001
            raise DivergentMoment(f"tail quadrature failed: {exc}") from exc
    return float(val)


# ---------------------------------------------------------------------------
# discrete kernel


@dataclass
class Kernel:
    """Discretized interaction kernel on a grid.

    ``stencil[o]`` is the exact integral of ``J`` over the cell at offset
    ``o`` (axes ordered as in the domain, center at ``center``); convolution
    against a field is then midpoint quadrature of the restricted integral.
    ``a_field`` caches ``J * 1`` over the domain.
    """

    eps: float
    alpha: float
    domain: Domain
    stencil: np.ndarray
    center: tuple
    a_field: Field
    l1_mass: float
    grad_l1: float
    truncation_radius: float
    mollifier: MollifierSpec
    _fft_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def a_min(self) -> float:
        return float(np.min(self.a_field.values))


def _j_radial(spec: MollifierSpec, eps: float, r: np.ndarray) -> np.ndarray:
    d, alpha = spec.d, spec.alpha
    pref = eps ** -(2.0 - alpha + d)
    return pref * spec.rho(r / eps) * r ** (-alpha)


def _gauss_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w  # on [0, 1]


def _cell_quad_smooth(spec, eps, centers, h, sub, order=4):
    """Integral of J over many cells (vectorized); cells must avoid z = 0."""
    d = len(h)
    nodes, wts = _gauss_nodes(order)
    # composite positions and weights within [-h/2, h/2] per axis
    axis_pos, axis_w = [], []
    for a in range(d):
        step = h[a] / sub
        starts = -0.5 * h[a] + step * np.arange(sub)
        pos = (starts[:, None] + step * nodes[None, :]).ravel()
        w = np.tile(step * wts, sub)
        axis_pos.append(pos)
        axis_w.append(w)
    grids = np.meshgrid(*axis_pos, indexing="ij")
    wgrid = np.meshgrid(*axis_w, indexing="ij")
    wflat = np.ones_like(grids[0])
    for w in wgrid:
        wflat = wflat * w
    wflat = wflat.ravel()
    pts = np.stack([g.ravel() for g in grids], axis=-1)  # (nodes, d)
    rad2 = np.zeros((centers.shape[0], pts.shape[0]))
    for a in range(d):
        rad2 += (centers[:, a : a + 1] + pts[None, :, a]) ** 2
    vals = _j_radial(spec, eps, np.sqrt(rad2))
    return vals @ wflat


def _center_cell_weight(spec, eps, h, n_radial=48, n_angular=128):
    """Polar/spherical integral of J over the cell containing the origin.

    The substitution ``u = r^(d-alpha)`` absorbs the ``r^-alpha``
    singularity exactly, leaving a smooth radial integrand.
    """
    d, alpha = spec.d, spec.alpha
    p = d - alpha  # > 1 since alpha < d - 1
    nodes, wts = _gauss_nodes(n_radial)
    if d == 2:
        theta = (np.arange(n_angular) + 0.5) * (2.0 * np.pi / n_angular)
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        ang_w = np.full(n_angular, 2.0 * np.pi / n_angular)
    else:
        phi = (np.arange(n_angular) + 0.5) * (2.0 * np.pi / n_angular)
        mu, mu_w = np.polynomial.legendre.leggauss(n_angular // 2)
        st = np.sqrt(1.0 - mu**2)
        dirs = np.stack(
            [
                np.outer(st, np.cos(phi)).ravel(),
                np.outer(st, np.sin(phi)).ravel(),
                np.repeat(mu, n_angular),
            ],
            axis=-1,
        )
        ang_w = np.repeat(mu_w, n_angular) * (2.0 * np.pi / n_angular)
    with np.errstate(divide="ignore"):
        r_max = np.min(
            np.where(np.abs(dirs) > 1e-300, np.asarray(h) / (2.0 * np.abs(dirs)), np.inf),
            axis=-1,
        )
    u_max = r_max**p
    u = u_max[:, None] * nodes[None, :]
    r = u ** (1.0 / p)
    rho_vals = spec.rho(r / eps)
    inner = (u_max / p) * (rho_vals @ wts)
    pref = eps ** -(2.0 - alpha + d)
    return float(pref * np.dot(ang_w, inner))


def _find_truncation(spec: MollifierSpec, tail_fraction: float) -> float:
    """Smallest profile radius keeping all but ``tail_fraction`` of the mass."""
    sup = spec.support()
    if np.isfinite(sup):
        return sup
    d, alpha = spec.d, spec.alpha
    power = d - 1 - alpha
    fn = lambda s: spec.rho(s) * s**power  # noqa: E731
    total = _radial_quad(fn, np.inf)
    lo, hi = 0.5, 40.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        tail, _ = quad(fn, mid, np.inf, **_QUAD_OPTS)
        if tail > tail_fraction * total:
            lo = mid
        else:
            hi = mid
    return hi


def build_kernel(
    spec: MollifierSpec,
    eps: float,
    domain: Domain,
    tail_fraction: float = 1e-8,
) -> Kernel:
    """Discretize ``J`` on the domain's grid.

    Cell weights are exact cell integrals of ``J`` (composite Gauss rules,
    refined near the origin, polar at the singular center cell); the stencil
    is truncated where the discarded profile mass falls below
    ``tail_fraction`` of the total.

    Raises
    ------
    KernelUnresolved
        If the truncation radius spans fewer than 2 cells.
    AlphaOutOfRange
        If the mollifier was normalized for an incompatible exponent.
    """
    if spec.d is None or spec.alpha is None:
        raise ValueError("mollifier must be normalized before building a kernel")
    if spec.d != domain.dim:
        raise DomainMismatch(
            f"mollifier normalized for d={spec.d}, domain has dim {domain.dim}"
        )
    _check_alpha(domain.dim, spec.alpha)
    if eps <= 0:
        raise ValueError("eps must be positive")

    h = domain.spacing
    s_max = _find_truncation(spec, tail_fraction)
    radius = eps * s_max
    if radius < 2.0 * max(h):
        raise KernelUnresolved(
            f"eps={eps:g} gives truncation radius {radius:.3g}, "
            f"below two cells ({2 * max(h):.3g}) on this grid"
        )
    m_full = tuple(int(math.ceil(radius / ha)) for ha in h)
    if any(m > 4 * n for m, n in zip(m_full, domain.cells)):
        raise KernelUnresolved(
            "kernel support spans more than four domain widths; reduce eps"
        )

    W = _stencil_weights(spec, eps, domain, m_full)
    l1_mass = float(np.sum(W))

    # cells farther than the grid can pair never contribute to the
    # restricted convolution; store only the reachable part
    if domain.boundary == NEUMANN:
        m_store = tuple(min(m, n - 1) for m, n in zip(m_full, domain.cells))
        sl = tuple(
            slice(mf - ms, mf + ms + 1) for mf, ms in zip(m_full, m_store)
        )
        W_store = np.ascontiguousarray(W[sl])
    else:
        m_store, W_store = m_full, W

    grad_l1 = _grad_l1_quad(spec, eps, radius)

    kern = Kernel(
        eps=float(eps),
        alpha=float(spec.alpha),
        domain=domain,
        stencil=W_store,
        center=m_store,
        a_field=Field.zeros(domain),
        l1_mass=l1_mass,
        grad_l1=grad_l1,
        truncation_radius=float(radius),
        mollifier=spec,
    )
    kern.a_field = convolve(kern, Field.constant(domain, 1.0), method="direct")
    return kern


def _stencil_weights(spec, eps, domain, m) -> np.ndarray:
    h = domain.spacing
    d = domain.dim
    shape = tuple(2 * ma + 1 for ma in m)
    offs = [ha * np.arange(-ma, ma + 1) for ha, ma in zip(h, m)]
    mesh = np.meshgrid(*offs, indexing="ij")
    centers = np.stack([g.ravel() for g in mesh], axis=-1)
    inf_norm = np.max(
        np.stack([np.abs(g.ravel()) / ha for g, ha in zip(mesh, h)], axis=-1), axis=-1
    )
    is_center = inf_norm < 0.5
    is_near = (~is_center) & (inf_norm <= 2.5)

    # subcell refinement keyed to how coarsely the grid resolves the range
    sub = int(min(8, max(1, math.ceil(2.0 * max(h) / eps))))
    sub_near = max(4, 2 * sub)

    W = np.zeros(centers.shape[0])
    far = ~(is_center | is_near)
    if np.any(far):
        W[far] = _cell_quad_smooth(spec, eps, centers[far], h, sub)
    if np.any(is_near):
        W[is_near] = _cell_quad_smooth(spec, eps, centers[is_near], h, sub_near)
    W = W.reshape(shape)
    W[m] = _center_cell_weight(spec, eps, h)
    # enforce exact symmetry under offset negation
    W = 0.5 * (W + W[tuple(slice(None, None, -1) for _ in range(d))])
    np.clip(W, 0.0, None, out=W)
    return W


def _grad_l1_quad(spec, eps, radius) -> float:
    """L1 norm of grad J over the truncation ball, by radial quadrature."""
    d, alpha = spec.d, spec.alpha
    pref = eps ** -(2.0 - alpha + d)

    def integrand(r):
        s = r / eps
        jprime = pref * (spec.drho(s) / eps * r**-alpha - alpha * spec.rho(s) * r ** (-alpha - 1.0))
        return sphere_area(d) * np.abs(jprime) * r ** (d - 1)

    split = min(eps, 0.5 * radius)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        v1, _ = quad(integrand, 0.0, split, **_QUAD_OPTS)
        v2, _ = quad(integrand, split, radius, **_QUAD_OPTS)
    return float(v1 + v2)


def kernel_w11(k: Kernel) -> tuple:
    """The kernel's L1 mass and the L1 norm of its gradient.

    Both scale like powers of the range: mass as ``eps^-2``, gradient mass
    as ``eps^-3``.
    """
    return k.l1_mass, k.grad_l1


def kernel_summary(k: Kernel) -> dict:
    """JSON-ready record of the kernel's headline numbers."""
    return {
        "eps": k.eps,
        "alpha": k.alpha,
        "l1": k.l1_mass,
        "grad_l1": k.grad_l1,
        "truncation_radius": k.truncation_radius,
        "mollifier": k.mollifier.kind,
        "a_min": k.a_min,
        "cells": list(k.domain.cells),
        "boundary": k.domain.boundary,
    }


# ---------------------------------------------------------------------------
# convolution


def convolve(k: Kernel, f: Field, method: str = "fft") -> Field:
    """Restricted convolution ``(J * f)(x) = int_domain J(x - y) f(y) dy``.

    Neumann mode integrates over the domain only (zero extension); periodic
    mode convolves on the torus.  The ``"fft"`` path zero-pads past the
    stencil size so circular wraparound reproduces the linear convolution
    exactly; the ``"direct"`` path is plain shifted summation, kept as an
    independent reference.
    """
    if f.domain != k.domain:
        raise DomainMismatch("kernel and field domains differ")
    a = f.grid()
    if method == "direct":
        out = _convolve_direct(k, a)
    elif method == "fft":
        out = _convolve_fft(k, a)
    else:
        raise ValueError(f"unknown convolve method {method!r}")
    return Field(f.domain, out)


def _convolve_direct(k: Kernel, a: np.ndarray) -> np.ndarray:
    dom = k.domain
    W = k.stencil
    m = k.center
    n = dom.cells
    out = np.zeros(n)
    if dom.boundary == PERIODIC:
        for idx in np.ndindex(W.shape):
            w = W[idx]
            if w == 0.0:
                continue
            shift = tuple(i - ma for i, ma in zip(idx, m))
            out += w * np.roll(a, shift, axis=tuple(range(dom.dim)))
        return out
    pad = np.zeros(tuple(na + 2 * ma for na, ma in zip(n, m)))
    pad[tuple(slice(ma, ma + na) for ma, na in zip(m, n))] = a
    for idx in np.ndindex(W.shape):
        w = W[idx]
        if w == 0.0:
            continue
        sl = tuple(
            slice(2 * ma - i, 2 * ma - i + na) for i, ma, na in zip(idx, m, n)
        )
        out += w * pad[sl]
    return out


def _convolve_fft(k: Kernel, a: np.ndarray) -> np.ndarray:
    dom = k.domain
    n = dom.cells
    if dom.boundary == PERIODIC:
        what = k._fft_cache.get("periodic")
        if what is None:
            # fold offsets onto the torus; wraparound weights accumulate
            m = k.center
            idx_axes = [(np.arange(-ma, ma + 1) % na) for ma, na in zip(m, n)]
            mesh = np.meshgrid(*idx_axes, indexing="ij")
            folded = np.zeros(n)
            np.add.at(folded, tuple(g.ravel() for g in mesh), k.stencil.ravel())
            what = scipy.fft.rfftn(folded)
            k._fft_cache["periodic"] = what
        return scipy.fft.irfftn(scipy.fft.rfftn(a) * what, s=n)
    cache = k._fft_cache.get("neumann")
    if cache is None:
        m = k.center
        pad_shape = tuple(
            scipy.fft.next_fast_len(na + 2 * ma) for na, ma in zip(n, m)
        )
        wpad = np.zeros(pad_shape)
        wpad[tuple(slice(0, 2 * ma + 1) for ma in m)] = k.stencil
        for ax, ma in enumerate(m):
            wpad = np.roll(wpad, -ma, axis=ax)
        what = scipy.fft.rfftn(wpad)
        cache = (pad_shape, what)
        k._fft_cache["neumann"] = cache
    pad_shape, what = cache
    fpad = np.zeros(pad_shape)
    fpad[tuple(slice(0, na) for na in n)] = a
    conv = scipy.fft.irfftn(scipy.fft.rfftn(fpad) * what, s=pad_shape)
    return conv[tuple(slice(0, na) for na in n)]
