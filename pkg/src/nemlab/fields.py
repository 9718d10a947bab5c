"""Periodic-domain gradient flow for the anisotropic Q-tensor model.

State: a Q-tensor field sampled on a uniform periodic grid in 1, 2 or 3
dimensions, stored with 5 components per node.  The evolution is

    dQ/dt = L_op Q + eps^-2 f(Q),
    (L_op Q)_ij = Lap Q_ij + (L/2)(d_ik Q_kj + d_jk Q_ki - (2/3) d_kl Q_kl I)

integrated either semi-implicitly (elastic operator inverted in Fourier
space through its spectral projectors, bulk force explicit) or fully
explicitly with fourth-order stencils.  Diagnostics: the energy functional,
the curl-type operator T(Q), the pointwise and integrated div-curl
identities, interface location, and the weighted error-energy functional.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensors
from .tensors import DomainError, ModelParams, ValidationError

__all__ = [
    "PeriodicGrid",
    "QField",
    "SimConfig",
    "SimLog",
    "IntegrationError",
    "NotLayeredError",
    "elastic_apply",
    "energy",
    "step",
    "run",
    "t_operator",
    "divcurl_check",
    "interface_locate",
    "error_energy",
    "uniform_field",
    "flat_layer_field",
]

_LEVI = np.zeros((3, 3, 3))
_LEVI[0, 1, 2] = _LEVI[1, 2, 0] = _LEVI[2, 0, 1] = 1.0
_LEVI[0, 2, 1] = _LEVI[2, 1, 0] = _LEVI[1, 0, 2] = -1.0


class IntegrationError(RuntimeError):
    """Time stepping failed (NaN, instability, or persistent energy rise)."""


class NotLayeredError(RuntimeError):
    """No interface crossing was found in the field."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid: nodes per axis and box lengths."""

    dim: int
    n: tuple
    box: tuple

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValidationError("dim must be 1, 2 or 3")
        n = tuple(int(v) for v in (self.n if np.iterable(self.n) else (self.n,) * self.dim))
        box = tuple(float(v) for v in (self.box if np.iterable(self.box) else (self.box,) * self.dim))
        if len(n) != self.dim or len(box) != self.dim:
            raise ValidationError("n and box must have one entry per axis")
        for v in n:
            if v < 16 or v % 2:
                raise ValidationError("node count per axis must be even and >= 16")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "box", box)

    @property
    def h(self):
        return tuple(b / m for b, m in zip(self.box, self.n))

    @property
    def shape(self):
        return self.n

    def axes(self):
        """Node coordinates along each axis (cell-centered at j*h)."""
        return [np.arange(m) * (b / m) for m, b in zip(self.n, self.box)]

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def wavenumbers(self, rfft_last=True):
        """Angular wavenumber arrays matching (r)fftn layout."""
        ks = []
        for ax, (m, b) in enumerate(zip(self.n, self.box)):
            if rfft_last and ax == self.dim - 1:
                k = np.fft.rfftfreq(m, d=b / m) * 2.0 * np.pi
            else:
                k = np.fft.fftfreq(m, d=b / m) * 2.0 * np.pi
            ks.append(k)
        shape = [1] * self.dim
        out = []
        for ax, k in enumerate(ks):
            s = shape.copy()
            s[ax] = len(k)
            out.append(k.reshape(s))
        return out

    @property
    def cell_volume(self):
        return float(np.prod(self.h))


@dataclass
class QField:
    """Q-tensor field on a periodic grid with model parameters and time."""

    grid: PeriodicGrid
    data: np.ndarray  # (*grid.shape, 5)
    params: ModelParams
    time: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.grid.shape + (5,):
            raise ValidationError("field data must have shape grid.shape + (5,)")

    def validate(self):
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("field contains non-finite values")
        m = float(np.max(tensors.norm2(self.data)))
        if m > 4.0:  # |Q| <= 2 physical range guard
            raise ValidationError(f"|Q| exceeds the physical range guard (|Q|^2 = {m:.3f})")
        return True

    def copy(self):
        return QField(self.grid, self.data.copy(), self.params, self.time)


@dataclass(frozen=True)
class SimConfig:
    """Time-stepping configuration."""

    dt: float
    t_end: float
    scheme: str = "semi_implicit_fourier"
    record_every: int = 10
    energy_tol: float = 1e-9
    max_energy_violations: int = 5

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        if self.scheme not in ("explicit", "semi_implicit_fourier"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")


def explicit_dt_bound(field):
    """Stability bound 0.2 min(eps^2, h^2/(2 dim (1+|L|))) for the explicit path."""
    p = field.params
    hmin = min(field.grid.h)
    return 0.2 * min(p.epsilon**2, hmin**2 / (2.0 * field.grid.dim * (1.0 + abs(p.L))))


# ---------------------------------------------------------------------------
# spectral machinery
# ---------------------------------------------------------------------------

def _fft(data, grid):
    return np.fft.rfftn(data, axes=tuple(range(grid.dim)))

def _ifft(data, grid):
    return np.fft.irfftn(data, s=grid.shape, axes=tuple(range(grid.dim)))


def _khat_and_k2(grid):
    ks = grid.wavenumbers()
    k2 = sum(k**2 for k in ks)
    kvec = np.zeros(k2.shape + (3,))
    for ax in range(grid.dim):
        kvec[..., ax] = np.broadcast_to(ks[ax], k2.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        khat = np.where(k2[..., None] > 0, kvec / np.sqrt(k2)[..., None], 0.0)
    return khat, k2, kvec


def _to33(c):
    """(..., 5) components -> (..., 3, 3) matrices (works on complex)."""
    M = np.empty(c.shape[:-1] + (3, 3), dtype=c.dtype)
    xx, yy, xy, xz, yz = (c[..., i] for i in range(5))
    M[..., 0, 0] = xx
    M[..., 1, 1] = yy
    M[..., 2, 2] = -xx - yy
    M[..., 0, 1] = M[..., 1, 0] = xy
    M[..., 0, 2] = M[..., 2, 0] = xz
    M[..., 1, 2] = M[..., 2, 1] = yz
    return M


def _from33(M):
    return np.stack([M[..., 0, 0], M[..., 1, 1], M[..., 0, 1], M[..., 0, 2], M[..., 1, 2]],
                    axis=-1)


def _sym_symbol_apply(Mh, khat, L, k2, dt=None):
    """Apply L_op (dt None) or (I - dt L_op)^{-1} in Fourier space.

    The divergence part acts per mode as S(Q) = khat khat.Q + Q.khat khat
    - (2/3)(khat.Q.khat) I, with eigenvalues 4/3, 1, 1, 0, 0 on the basis
    generated by khat; the inverse is assembled from the spectral
    projectors of S.
    """
    nQn = np.einsum("...i,...ij,...j->...", khat, Mh, khat)
    nMn = np.einsum("...i,...ij->...j", khat, Mh)
    S = khat[..., :, None] * nMn[..., None, :] + nMn[..., :, None] * khat[..., None, :] \
        - (2.0 / 3.0) * nQn[..., None, None] * np.eye(3)
    if dt is None:
        return -k2[..., None, None] * (Mh + 0.5 * L * S)
    # spectral projectors of S: P0 onto E0(khat), P12, P34
    E0 = khat[..., :, None] * khat[..., None, :] - np.eye(3) / 3.0
    P0 = 1.5 * nQn[..., None, None] * E0
    P12 = S - (4.0 / 3.0) * P0
    P34 = Mh - P0 - P12
    a0 = 1.0 + dt * k2 * (1.0 + 2.0 * L / 3.0)
    a12 = 1.0 + dt * k2 * (1.0 + 0.5 * L)
    a34 = 1.0 + dt * k2
    return (P0 / a0[..., None, None] + P12 / a12[..., None, None]
            + P34 / a34[..., None, None])


def elastic_apply(field, path="spectral"):
    """The anisotropic elastic operator L_op applied to the field.

    path "spectral": exact Fourier symbol on the periodic grid.
    path "fd4": fourth-order centered stencils (cross-check route).
    Returns the (*shape, 5) array of the result.
    """
    grid = field.grid
    L = field.params.L
    if path == "spectral":
        Mh = _to33(_fft(field.data, grid))
        khat, k2, _ = _khat_and_k2(grid)
        out = _sym_symbol_apply(Mh, khat, L, k2)
        return _from33(_ifft(out, grid))
    if path == "fd4":
        M = _to33(field.data)
        lap = np.zeros_like(M)
        for ax in range(grid.dim):
            lap += _d2_fd4(M, ax, grid.h[ax])
        div = _div_terms_fd4(M, grid)
        return _from33(lap + 0.5 * L * div)
    raise ValidationError(f"unknown elastic path {path!r}")


def _d1_fd4(a, ax, h):
    r = lambda s: np.roll(a, -s, axis=ax)
    return (r(-2) - 8 * r(-1) + 8 * r(1) - r(2)) / (12 * h)


def _d2_fd4(a, ax, h):
    r = lambda s: np.roll(a, -s, axis=ax)
    return (-r(-2) + 16 * r(-1) - 30 * a + 16 * r(1) - r(2)) / (12 * h * h)


def _div_terms_fd4(M, grid):
    """d_ik Q_kj + d_jk Q_ki - (2/3) delta_ij d_kl Q_kl by nested stencils."""
    dim = grid.dim
    h = grid.h
    divQ = np.zeros(M.shape[:-2] + (3,))
    for k in range(dim):
        divQ += _d1_fd4(M[..., k, :], k, h[k])
    out = np.zeros_like(M)
    for i in range(dim):
        di_div = _d1_fd4(divQ, i, h[i])   # d_i d_k Q_kj
        out[..., i, :] += di_div
        out[..., :, i] += di_div
    dd = np.zeros(M.shape[:-2])
    for l in range(dim):
        dd += _d1_fd4(divQ[..., l], l, h[l])
    out -= (2.0 / 3.0) * dd[..., None, None] * np.eye(3)
    return out


def gradient_spectral(data5, grid):
    """All first derivatives d_k of the 5 components: shape (*shape, dim, 5)."""
    Fh = _fft(data5, grid)
    ks = grid.wavenumbers()
    out = np.empty(grid.shape + (grid.dim, 5))
    for ax in range(grid.dim):
        out[..., ax, :] = _ifft(1j * ks[ax][..., None] * Fh, grid)
    return out


# ---------------------------------------------------------------------------
# energy and diagnostics
# ---------------------------------------------------------------------------

def energy(field, parts=False):
    """eps^-2 int F(Q) + (1/2) int (|grad Q|^2 + L |div Q|^2).

    Derivatives are spectral; integrals are the exact trapezoidal (= mean
    value times volume) rule of the periodic grid.
    """
    grid = field.grid
    p = field.params
    vol = grid.cell_volume
    bulk = float(np.sum(tensors.bulk_potential(field.data)) * vol) / p.epsilon**2
    Mh = _to33(_fft(field.data, grid))
    ks = grid.wavenumbers()
    k2 = sum(k**2 for k in ks)
    nrm = 1.0 / np.prod(grid.shape)
    # rfft double-counts interior modes of the last axis once conjugates are
    # accounted: weight 2 except the first (and Nyquist, even n) plane
    wlast = np.full(Mh.shape[grid.dim - 1], 2.0)
    wlast[0] = 1.0
    if grid.n[-1] % 2 == 0:
        wlast[-1] = 1.0
    shape = [1] * Mh.ndim
    shape[grid.dim - 1] = len(wlast)
    wlast = wlast.reshape(shape)
    vol_total = float(np.prod(grid.box))
    grad2 = np.sum(wlast * k2[..., None, None] * np.abs(Mh) ** 2) * nrm**2 * vol_total
    kvec = np.zeros(k2.shape + (3,), dtype=float)
    for ax in range(grid.dim):
        kvec[..., ax] = np.broadcast_to(ks[ax], k2.shape)
    divh = np.einsum("...k,...kj->...j", kvec, Mh)
    div2 = np.sum(wlast[..., 0] * np.abs(divh) ** 2) * nrm**2 * vol_total
    elastic = 0.5 * (grad2 + p.L * div2)
    if parts:
        return bulk + elastic, {"bulk": bulk, "gradient": 0.5 * grad2,
                                "divergence": 0.5 * p.L * div2}
    return bulk + elastic


def t_operator(field):
    """T_ij = eps^{ikl} d_k Q_lj + eps^{jkl} d_k Q_li (spectral derivatives)."""
    grid = field.grid
    g5 = gradient_spectral(field.data, grid)        # (*shape, dim, 5)
    dQ = np.zeros(grid.shape + (3, 3, 3))           # d_k Q_lj
    dQ[..., :grid.dim, :, :] = _to33(g5)
    half = np.einsum("ikl,...klj->...ij", _LEVI, dQ)
    return half + np.swapaxes(half, -1, -2)


@dataclass
class DivCurlReport:
    pointwise_defect: float
    integrated_defect: float
    grad2_mean: float


def divcurl_check(field):
    """Pointwise and integrated div-curl identity defects.

    Pointwise: |grad Q|^2 - (3/2)|div Q|^2 - (1/4)|T|^2 - (d_k Q_li d_l Q_ki
    - d_k Q_ki d_l Q_li); integrated: int |div Q|^2 - (2/3) int |grad Q|^2
    + (1/6) int |T|^2 (the Stokes identity; the null-Lagrangian term drops).
    """
    grid = field.grid
    g5 = gradient_spectral(field.data, grid)
    dQ = np.zeros(grid.shape + (3, 3, 3))
    dQ[..., :grid.dim, :, :] = _to33(g5)
    grad2 = np.einsum("...klj,...klj->...", dQ, dQ)
    divQ = np.einsum("...kkj->...j", dQ)
    div2 = np.einsum("...j,...j->...", divQ, divQ)
    half = np.einsum("ikl,...klj->...ij", _LEVI, dQ)
    T = half + np.swapaxes(half, -1, -2)
    T2 = np.einsum("...ij,...ij->...", T, T)
    cross = np.einsum("...kli,...lki->...", dQ, dQ)
    null_term = cross - div2
    pw = grad2 - 1.5 * div2 - 0.25 * T2 - null_term
    vol = grid.cell_volume
    integrated = float((np.sum(div2) - (2.0 / 3.0) * np.sum(grad2)
                        + (1.0 / 6.0) * np.sum(T2)) * vol)
    return DivCurlReport(float(np.max(np.abs(pw))), integrated, float(np.mean(grad2)))


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def step(field, cfg):
    """Advance one time step; returns a new QField.

    semi_implicit_fourier: elastic term implicit through the Fourier-space
    projector inverse, bulk force explicit.  explicit: forward Euler with
    fourth-order stencils (dt must satisfy the stability bound).
    """
    p = field.params
    force = tensors.bulk_force(field.data) / p.epsilon**2
    if cfg.scheme == "semi_implicit_fourier":
        rhs = field.data + cfg.dt * force
        Mh = _to33(_fft(rhs, field.grid))
        khat, k2, _ = _khat_and_k2(field.grid)
        out = _sym_symbol_apply(Mh, khat, p.L, k2, dt=cfg.dt)
        new = _from33(_ifft(out, field.grid))
    else:
        if cfg.dt > explicit_dt_bound(field) * (1.0 + 1e-12):
            raise IntegrationError(
                f"explicit dt {cfg.dt} exceeds the stability bound {explicit_dt_bound(field):.3e}")
        new = field.data + cfg.dt * (elastic_apply(field, path="fd4") + force)
    if not np.all(np.isfinite(new)):
        raise IntegrationError(f"non-finite values after step at t = {field.time}")
    return QField(field.grid, new, p, field.time + cfg.dt)


@dataclass
class SimLog:
    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    violations: int = 0
    records: list = field(default_factory=list)


def run(field0, cfg, recorder=None):
    """Integrate to cfg.t_end with per-step energy monitoring.

    The discrete energy must be non-increasing within cfg.energy_tol
    relative per step; isolated violations are logged and more than
    cfg.max_energy_violations consecutive ones raise IntegrationError.
    `recorder(field)` is sampled every cfg.record_every steps.
    """
    f = field0.copy()
    log = SimLog()
    e_prev = energy(f)
    log.times.append(f.time)
    log.energies.append(e_prev)
    if recorder is not None:
        log.records.append(recorder(f))
    nsteps = int(round(cfg.t_end / cfg.dt))
    consecutive = 0
    for i in range(nsteps):
        f = step(f, cfg)
        e = energy(f)
        if e > e_prev + cfg.energy_tol * (1.0 + abs(e_prev)):
            log.violations += 1
            consecutive += 1
            if consecutive > cfg.max_energy_violations:
                raise IntegrationError(
                    f"energy increased {consecutive} consecutive steps at t = {f.time}")
        else:
            consecutive = 0
        e_prev = e
        if (i + 1) % cfg.record_every == 0 or i == nsteps - 1:
            log.times.append(f.time)
            log.energies.append(e)
            if recorder is not None:
                log.records.append(recorder(f))
    return f, log


# ---------------------------------------------------------------------------
# interface location and error energy
# ---------------------------------------------------------------------------

def _q0_coefficient(field, director):
    """q0(x) = (3/2) Q : E0(n(x)) for a director field n (broadcastable)."""
    nn5 = tensors.outer_dev(director, director)
    return 1.5 * tensors.dot(field.data, nn5)


def interface_locate(field, normal_axis=None, center=None, rays=256):
    """Locate the q0 = 1/2 level set.

    Flat mode (normal_axis given): linear interpolation of the crossing
    along each grid line in that axis; returns (mean position, std).
    Radial mode (center given): mean radius and std over `rays` angles
    (2-D only), sampling q0 along rays by bilinear interpolation.
    """
    if (normal_axis is None) == (center is None):
        raise ValidationError("specify exactly one of normal_axis or center")
    if normal_axis is not None:
        n = np.zeros(3)
        n[normal_axis] = 1.0
        q0 = _q0_coefficient(field, n)
        ax = field.grid.axes()[normal_axis]
        q0 = np.moveaxis(q0, normal_axis, -1).reshape(-1, len(ax))
        pos = []
        for line in q0:
            c = np.where((line[:-1] - 0.5) * (line[1:] - 0.5) < 0)[0]
            if len(c) == 0:
                continue
            i = c[0]
            t = (0.5 - line[i]) / (line[i + 1] - line[i])
            pos.append(ax[i] + t * (ax[i + 1] - ax[i]))
        if not pos:
            raise NotLayeredError("no q0 = 1/2 crossing found along the axis")
        return float(np.mean(pos)), float(np.std(pos))

    if field.grid.dim != 2:
        raise ValidationError("radial location implemented for 2-D fields")
    x, y = field.grid.meshgrid()
    cx, cy = center
    angles = np.linspace(0.0, 2.0 * np.pi, rays, endpoint=False)
    rmax = min(field.grid.box) / 2.0 - 2.0 * max(field.grid.h)
    rr = np.linspace(1e-3, rmax, 400)
    radii = []
    data = field.data
    nx, ny = field.grid.n
    hx, hy = field.grid.h
    for a in angles:
        px = cx + rr * np.cos(a)
        py = cy + rr * np.sin(a)
        n_dir = np.array([np.cos(a), np.sin(a), 0.0])
        nn5 = tensors.outer_dev(n_dir, n_dir)
        ix = (px / hx) % nx
        iy = (py / hy) % ny
        i0, j0 = np.floor(ix).astype(int), np.floor(iy).astype(int)
        fx, fy = ix - i0, iy - j0
        i1, j1 = (i0 + 1) % nx, (j0 + 1) % ny
        vals = (data[i0, j0] * ((1 - fx) * (1 - fy))[:, None]
                + data[i1, j0] * (fx * (1 - fy))[:, None]
                + data[i0, j1] * ((1 - fx) * fy)[:, None]
                + data[i1, j1] * (fx * fy)[:, None])
        q0 = 1.5 * tensors.dot(vals, nn5)
        c = np.where((q0[:-1] - 0.5) * (q0[1:] - 0.5) < 0)[0]
        if len(c) == 0:
            continue
        i = c[0]
        t = (0.5 - q0[i]) / (q0[i + 1] - q0[i])
        radii.append(rr[i] + t * (rr[i + 1] - rr[i]))
    if not radii:
        raise NotLayeredError("no q0 = 1/2 crossing found along any ray")
    return float(np.mean(radii)), float(np.std(radii))


def error_energy(f, fref, eps):
    """sum_{i=0..2} eps^{6i} int |d^i (F - Fref)|^2 with spectral derivatives."""
    if f.grid != fref.grid:
        raise ValidationError("error energy requires matching grids")
    grid = f.grid
    diff = f.data - fref.data
    Fh = _to33(_fft(diff, grid))
    ks = grid.wavenumbers()
    k2 = sum(k**2 for k in ks)
    nrm = 1.0 / np.prod(grid.shape)
    wlast = np.full(Fh.shape[grid.dim - 1], 2.0)
    wlast[0] = 1.0
    if grid.n[-1] % 2 == 0:
        wlast[-1] = 1.0
    shape = [1] * (Fh.ndim - 2)
    shape[grid.dim - 1] = len(wlast)
    w = wlast.reshape(shape + [1, 1])
    vol = float(np.prod(grid.box))
    total = 0.0
    for i in range(3):
        total += eps ** (6 * i) * float(np.sum(w * k2[..., None, None] ** i
                                               * np.abs(Fh) ** 2)) * nrm**2 * vol
    return total


# ---------------------------------------------------------------------------
# simple initial data
# ---------------------------------------------------------------------------

def uniform_field(grid, coeffs, params):
    """Spatially uniform field with the given 5 components."""
    data = np.broadcast_to(np.asarray(coeffs, float), grid.shape + (5,)).copy()
    return QField(grid, data, params)


def flat_layer_field(grid, params, axis=0, offset=None, pure=True):
    """Nematic slab between two flat layers along one axis (periodic).

    The slab occupies half the box (interfaces at `offset` and
    offset + box/2), built as the kink-antikink superposition
    s((x-a)/eps) + s((b-x)/eps) - 1 of the exact profile, so the field is
    smooth and periodic; with n along the axis each interface is the exact
    stationary layer up to the exponentially small pair interaction.
    """
    from .layer import LayerContext, s_profile

    ctx = LayerContext(params.L)
    x = grid.meshgrid()[axis]
    box = grid.box[axis]
    a = box * 0.25 if offset is None else float(offset)
    b = a + box * 0.5
    sval = (s_profile((x - a) / params.epsilon, ctx)
            + s_profile((b - x) / params.epsilon, ctx) - 1.0)
    n = np.zeros(3)
    n[axis] = 1.0
    data = sval[..., None] * tensors.outer_dev(n, n)
    return QField(grid, data, params)
