"""Glued leading-order approximate solutions and their PDE residuals.

The approximate solution glues the inner layer profile s(d/eps)(nn - I/3)
(with n the interface normal extended off the interface) to the outer pure
phases 0 / nn - I/3 through a C^2 cutoff of the signed distance,

    Q = eta(d/delta) Q_in + (1 - eta(d/delta)) Q_out .

Supported geometries: a flat slab (two parallel planes, which is the
periodic embedding of a single flat interface) and a radial droplet of
isotropic phase inside a radially anchored nematic, shrinking by mean
curvature flow with speed constant 1 + 2L/3.  The PDE residual
R = dQ/dt - L_op Q - eps^-2 f(Q) is measured with the time derivative
taken analytically through the prescribed motion.
"""

from dataclasses import dataclass

import numpy as np

from . import fields, tensors
from .layer import LayerContext, s_profile
from scipy.special import expit
from .tensors import DomainError, ModelParams, ValidationError
from ._numerics import loglog_slope

__all__ = [
    "Geometry",
    "GlueConfig",
    "EscapeBlend",
    "ApproxSolution",
    "signed_distance",
    "build_Q0",
    "h0_and_G0",
    "residual",
    "residual_sweep",
    "glued_scalar_profile",
    "smoothstep",
]


def smoothstep(t):
    """Quintic smoothstep: 0 below 0, 1 above 1, C^2 at the junctions."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


@dataclass(frozen=True)
class GlueConfig:
    """Cutoff profile: eta = 1 on |y| <= 1/2, 0 on |y| >= 1, C^2 between."""

    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValidationError("gluing half-width delta must be positive")

    def eta(self, y):
        return 1.0 - smoothstep(2.0 * (np.abs(y) - 0.5))

    def eta_prime(self, y):
        y = np.asarray(y, dtype=float)
        t = np.clip(2.0 * (np.abs(y) - 0.5), 0.0, 1.0)
        ds = 30.0 * t**2 * (1.0 - t) ** 2
        return -2.0 * np.sign(y) * ds


def glued_scalar_profile(d, eps, glue, ctx=None, L=-0.5):
    """Scalar gluing of the layer profile to the step function of d."""
    if ctx is None:
        ctx = LayerContext(L)
    d = np.asarray(d, dtype=float)
    eta = glue.eta(d / glue.delta)
    outer = (d > 0).astype(float)
    return eta * s_profile(d / eps, ctx) + (1.0 - eta) * outer


@dataclass(frozen=True)
class EscapeBlend:
    """Director escape to the z-axis over an annulus r1 < rho < r2.

    A 2-D radial director cannot be continued periodically across the box
    (its winding has no compensation on the torus); tilting it out of
    plane over an annulus outside the droplet removes the obstruction
    without defects, leaving n = z beyond r2.
    """

    r1: float
    r2: float

    def __post_init__(self):
        if not 0 < self.r1 < self.r2:
            raise ValidationError("escape blend needs 0 < r1 < r2")

    def director(self, rho, radial_unit):
        alpha = 0.5 * np.pi * smoothstep((rho - self.r1) / (self.r2 - self.r1))
        n = np.zeros(rho.shape + (3,))
        n[..., :2] = np.cos(alpha)[..., None] * radial_unit[..., :2]
        n[..., 2] = np.sin(alpha)
        return n


@dataclass(frozen=True)
class Geometry:
    """Interface geometry: flat slab or radial droplet.

    flat: two parallel planes normal to `axis` at offset and
    offset + box/2 (the periodic embedding of a single interface; the
    primary plane is the one at `offset`), static.
    radial: isotropic disc of initial radius R0 centered at `center`,
    shrinking by R(t)^2 = R0^2 - 2 (1+2L/3)(dim-1) t when motion="mcf".
    """

    kind: str
    axis: int = 0
    offset: float = 0.25
    center: tuple = (0.5, 0.5)
    R0: float = 0.3
    motion: str = "static"
    dim: int = 2

    def __post_init__(self):
        if self.kind not in ("flat", "radial"):
            raise ValidationError("geometry kind must be flat or radial")
        if self.kind == "radial":
            if self.motion not in ("static", "mcf"):
                raise ValidationError("radial motion must be static or mcf")
            if len(self.center) != self.dim:
                raise ValidationError("center must have dim entries")
            if self.R0 <= 0:
                raise ValidationError("R0 must be positive")
        elif self.motion != "static":
            raise ValidationError("flat geometry supports only static motion")

    def radius(self, t, sigma):
        if self.kind != "radial":
            raise ValidationError("radius is defined for radial geometry")
        if self.motion == "static" or t == 0.0:
            return self.R0
        R2 = self.R0**2 - 2.0 * sigma * (self.dim - 1) * t
        if R2 <= 0:
            raise DomainError(f"interface vanished before t = {t}")
        return float(np.sqrt(R2))

    def radius_dot(self, t, sigma):
        if self.motion == "static":
            return 0.0
        return -sigma * (self.dim - 1) / self.radius(t, sigma)


def signed_distance(geom, x, t=0.0, sigma=1.0):
    """Analytic d, grad d and Lap d of the geometry at time t.

    x: array of points with shape (..., dim) (radial) or the coordinate
    along the axis (flat; single-plane distance x - offset).  Radial
    evaluation at the center is a domain error.
    """
    if geom.kind == "flat":
        d = np.asarray(x, dtype=float) - geom.offset
        return d, np.ones_like(d), np.zeros_like(d)
    x = np.asarray(x, dtype=float)
    rel = x - np.asarray(geom.center)
    rho = np.sqrt(np.sum(rel**2, axis=-1))
    if np.any(rho < 1e-12):
        raise DomainError("signed distance evaluated at the radial center")
    R = geom.radius(t, sigma)
    d = rho - R
    grad = rel / rho[..., None]
    lap = (geom.dim - 1) / rho
    return d, grad, lap


def _radial_frame(rel, rho):
    """(n, l, m) = (rho_hat, phi_hat, z_hat) for in-plane radial geometry."""
    n = np.zeros(rho.shape + (3,))
    n[..., 0] = rel[..., 0] / rho
    n[..., 1] = rel[..., 1] / rho
    l = np.zeros_like(n)
    l[..., 0] = -n[..., 1]
    l[..., 1] = n[..., 0]
    m = np.zeros_like(n)
    m[..., 2] = 1.0
    return n, l, m


@dataclass
class ApproxSolution:
    """The K = 0 glued approximate solution on a prescribed geometry.

    glue=None builds the pure (un-cut) profile, valid when the far fields
    already agree with the pure phases on the domain.  For radial
    geometry, `blend` optionally escapes the director to the z-axis so the
    field embeds periodically (needed for spectral time stepping; residual
    evaluation with local stencils does not require it).
    """

    geometry: Geometry
    params: ModelParams
    glue: GlueConfig = None
    blend: EscapeBlend = None
    order: int = 0

    def __post_init__(self):
        if self.order != 0:
            raise ValidationError("only the leading order K = 0 is supported")
        if self.glue is not None and self.glue.delta < 8.0 * self.params.epsilon:
            raise ValidationError(
                f"gluing width {self.glue.delta} does not resolve the layer "
                f"(need delta >= 8 eps = {8 * self.params.epsilon})")
        if self.geometry.kind == "radial" and self.glue is not None:
            if self.glue.delta >= self.geometry.R0:
                raise ValidationError("gluing band must not reach the radial center")

    def _director(self, rel, rho):
        n, _, _ = _radial_frame(rel, rho)
        if self.blend is not None:
            n = self.blend.director(rho, n)
        return n

    def build(self, grid, t=0.0):
        """Sample the glued field on a periodic grid at time t."""
        p = self.params
        ctx = LayerContext(p.L)
        eps = p.epsilon
        if self.geometry.kind == "flat":
            ax = grid.meshgrid()[self.geometry.axis]
            box = grid.box[self.geometry.axis]
            a = self.geometry.offset
            b = a + 0.5 * box
            nvec = np.zeros(3)
            nvec[self.geometry.axis] = 1.0
            e0 = tensors.outer_dev(nvec, nvec)
            if self.glue is None:
                sval = _periodic_slab_profile(ax, a, b, box, eps, ctx)
            else:
                d = np.minimum(ax - a, b - ax)  # signed distance to the slab
                sval = glued_scalar_profile(d, eps, self.glue, ctx)
            data = sval[..., None] * e0
            return fields.QField(grid, data, p, t)

        xs = np.stack(grid.meshgrid(), axis=-1)
        rel = xs - np.asarray(self.geometry.center)
        rho = np.sqrt(np.sum(rel**2, axis=-1))
        rho_safe = np.maximum(rho, 1e-9)
        R = self.geometry.radius(t, p.sigma)
        d = rho - R
        n = self._director(rel, rho_safe)
        e0 = tensors.outer_dev(n, n)
        if self.glue is None:
            chi = s_profile(d / eps, ctx)
        else:
            chi = glued_scalar_profile(d, eps, self.glue, ctx)
            # inside the pure-isotropic zone the director is never used
            chi = np.where(d / self.glue.delta <= -1.0, 0.0, chi)
        data = chi[..., None] * e0
        return fields.QField(grid, data, p, t)

    def time_derivative(self, grid, t=0.0):
        """Analytic dQ/dt through the prescribed interface motion."""
        p = self.params
        ctx = LayerContext(p.L)
        eps = p.epsilon
        if self.geometry.kind == "flat":
            return np.zeros(grid.shape + (5,))
        xs = np.stack(grid.meshgrid(), axis=-1)
        rel = xs - np.asarray(self.geometry.center)
        rho = np.maximum(np.sqrt(np.sum(rel**2, axis=-1)), 1e-9)
        R = self.geometry.radius(t, p.sigma)
        d = rho - R
        dd_dt = -self.geometry.radius_dot(t, p.sigma)
        n = self._director(rel / rho[..., None], rho)
        e0 = tensors.outer_dev(n, n)
        sp = s_profile(d / eps, ctx, 1)
        if self.glue is None:
            rate = sp / eps * dd_dt
        else:
            y = d / self.glue.delta
            eta = self.glue.eta(y)
            etap = self.glue.eta_prime(y)
            s = s_profile(d / eps, ctx)
            outer = (d > 0).astype(float)
            rate = (eta * sp / eps + etap * (s - outer) / self.glue.delta) * dd_dt
        return rate[..., None] * e0


def _kink_deviation(d, eps, ctx):
    """s(d/eps) - H(d), tail-stable on both sides."""
    d = np.asarray(d, float)
    g = ctx.gamma * d / eps
    # H(0) = 1 here; the slab indicator below uses the same convention
    return np.where(d >= 0, -expit(-np.abs(g)), expit(-np.abs(g)))


def _periodic_slab_profile(x, a, b, box, eps, ctx):
    """Exactly periodic nematic-slab profile via image interfaces.

    The bare kink-antikink superposition has a first-derivative mismatch
    of order e^{-gamma box/(4 eps)} at the wrap which spectral operators
    amplify; adding the +-1 image interfaces pushes the mismatch to the
    next image distance (machine-dead for the widths used here).
    """
    q = ((x >= a) & (x <= b)).astype(float)
    for m in (-1.0, 0.0, 1.0):
        q = q + _kink_deviation(x - a + m * box, eps, ctx)
        q = q + _kink_deviation(b - x + m * box, eps, ctx)
    return q


def build_Q0(geom, params, grid, glue=None, blend=None, t=0.0):
    """Convenience wrapper: sample the K = 0 glued solution on a grid."""
    return ApproxSolution(geom, params, glue=glue, blend=blend).build(grid, t)


def _jacobi_theta1(u, q=np.exp(-np.pi), terms=8):
    """Jacobi theta_1 for complex u at nome q (square torus tau = i)."""
    u = np.asarray(u, dtype=complex)
    out = np.zeros_like(u)
    for n in range(terms):
        out += 2.0 * (-1.0) ** n * q ** ((n + 0.5) ** 2) * np.sin((2 * n + 1) * u)
    return out


def droplet_texture(grid, center):
    """Periodic planar line field: +1 winding at `center`, two -1/2 defects.

    A lone +1 hedgehog cannot close up on the torus; two compensating
    -1/2 line-field defects are placed on the far side at center +
    (B/2, +-B/4) (so the charge moments cancel the theta-function
    quasi-periods exactly).  Returns (cos 2theta, sin 2theta, p1, p2); the
    direction is asymptotically radial about the center, up to O(rho/B)
    corrections from the compensating pair.
    """
    B = grid.box[0]
    if abs(grid.box[1] - B) > 1e-12:
        raise ValidationError("droplet texture needs a square box")
    x, y = grid.meshgrid()
    cx, cy = center
    p1 = ((cx + B / 2) % B, (cy + B / 4) % B)
    p2 = ((cx + B / 2) % B, (cy - B / 4) % B)
    scale = np.pi / B

    def u(px, py):
        return scale * ((x - px) + 1j * (y - py))

    w = (_jacobi_theta1(u(cx, cy)) ** 2
         / (_jacobi_theta1(u(*p1)) * _jacobi_theta1(u(*p2))))
    mag = np.abs(w)
    mag = np.where(mag < 1e-300, 1.0, mag)
    return (w.real / mag, w.imag / mag), p1, p2


def droplet_field(grid, params, center, R0, core_pos=4.0, core_width=3.0):
    """Isotropic disc (radius R0) inside a radially anchored nematic (2-D).

    The director texture is the periodic +1 / two -1/2 arrangement of
    droplet_texture, with the compensating defect cores melted to exact
    isotropic over core_pos +- core_width layer widths; the droplet
    interface carries the layer profile with n -> grad d.  The interface
    shrinks by R^2 = R0^2 - 2 (1+2L/3) t.
    """
    from .layer import LayerContext, s_profile

    ctx = LayerContext(params.L)
    eps = params.epsilon
    (c2, s2), p1, p2 = droplet_texture(grid, center)
    x, y = grid.meshgrid()
    B = grid.box[0]

    def torus_dist(px, py):
        dx = np.abs(x - px)
        dy = np.abs(y - py)
        dx = np.minimum(dx, B - dx)
        dy = np.minimum(dy, B - dy)
        return np.sqrt(dx**2 + dy**2)

    amp = s_profile((torus_dist(*center) - R0) / eps, ctx)
    for pp in (p1, p2):
        amp = amp * glued_scalar_profile(torus_dist(*pp) - core_pos * eps, eps,
                                         GlueConfig(delta=core_width * eps), ctx)
    data = np.zeros(grid.shape + (5,))
    data[..., 0] = amp * (0.5 * c2 + 1.0 / 6.0)
    data[..., 1] = amp * (-0.5 * c2 + 1.0 / 6.0)
    data[..., 2] = amp * 0.5 * s2
    return fields.QField(grid, data, params, 0.0)


# ---------------------------------------------------------------------------
# h0 / G0 correction fields
# ---------------------------------------------------------------------------

def h0_and_G0(director_fn, geom, points, params, t=0.0, on_gamma_step=1e-5):
    """The alignment defect h0 = (n - grad d)/d and the forcing tensor G0.

    director_fn(x) returns the unit alignment field at points of shape
    (..., dim).  Off the interface h0 is the difference quotient; on it
    (|d| below a floor) the normal-derivative limit, evaluated by a
    centered difference of n - grad d along the normal.  Returns
    (h0, g0_tensor) where G0(z, x) = (L/2) g0(x) s''(z); g0 is returned in
    5-component form after symmetrization (its antisymmetric content is
    zero) -- see the identity checks for h0 . n = 0 on the interface.
    """
    pts = np.asarray(points, dtype=float)
    d, gradd, _ = signed_distance(geom, pts if geom.kind == "radial" else pts[..., geom.axis],
                                  t, params.sigma)
    n = director_fn(pts)
    if geom.kind == "flat":
        g3 = np.zeros(pts.shape[:-1] + (3,))
        g3[..., geom.axis] = 1.0
        gradd_full = g3
    else:
        gradd_full = np.zeros(pts.shape[:-1] + (3,))
        gradd_full[..., : geom.dim] = gradd
    diff = n - gradd_full
    floor = 1e-8
    small = np.abs(d) < floor
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = diff / np.where(small, 1.0, d)[..., None]
    if np.any(small):
        # normal-derivative limit: (n - grad d) one floor-step along nu
        step = on_gamma_step
        shifted = pts + step * gradd_full[..., : pts.shape[-1]]
        d2, gradd2, _ = signed_distance(geom, shifted if geom.kind == "radial"
                                        else shifted[..., geom.axis], t, params.sigma)
        n2 = director_fn(shifted)
        if geom.kind == "flat":
            gradd2_full = g3
        else:
            gradd2_full = np.zeros(pts.shape[:-1] + (3,))
            gradd2_full[..., : geom.dim] = gradd2
        lim = (n2 - gradd2_full) / step
        h0 = np.where(small[..., None], lim, h0)

    L = params.L
    nd = np.einsum("...i,...i->...", n, h0)
    hh = np.einsum("...i,...i->...", h0, h0)
    sym_nh = n[..., :, None] * h0[..., None, :] + h0[..., :, None] * n[..., None, :]
    nn = n[..., :, None] * n[..., None, :]
    h0h0 = h0[..., :, None] * h0[..., None, :]
    eye = np.eye(3)
    dcol = d[..., None, None]
    g0 = (-(2.0 / 3.0) * sym_nh - 2.0 * nn * nd[..., None, None]
          + dcol * nd[..., None, None] * sym_nh
          - (2.0 / 3.0) * dcol * h0h0
          + (8.0 / 9.0) * nd[..., None, None] * eye
          - (2.0 / 3.0) * dcol * (nd**2)[..., None, None] * eye
          + (2.0 / 9.0) * dcol * hh[..., None, None] * eye)
    # the tensor (L/2) g0 multiplies s''(z); store its deviatoric symmetric part
    g0_sym = 0.5 * (g0 + np.swapaxes(g0, -1, -2))
    g0_sym = g0_sym - (np.trace(g0_sym, axis1=-2, axis2=-1) / 3.0)[..., None, None] * eye
    g0_5 = np.stack([g0_sym[..., 0, 0], g0_sym[..., 1, 1], g0_sym[..., 0, 1],
                     g0_sym[..., 0, 2], g0_sym[..., 1, 2]], axis=-1) * (0.5 * L)
    return h0, g0_5


# ---------------------------------------------------------------------------
# residual measurement
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    epsilon: float
    sup: float
    l2: float
    channel_sup: np.ndarray  # sup of the E^i projections (radial frame)
    margin_nodes: int


def residual(sol, grid, t=0.0, path=None, margin=6):
    """PDE residual of the K = 0 solution: dQ/dt - L_op Q - eps^-2 f(Q).

    path "spectral" (default for flat, which embeds periodically) or "fd4"
    (default for radial: the hedgehog far field is not periodic, so local
    stencils are used and a `margin` of nodes at the box faces -- where
    wrap-around stencils would mix incompatible values -- is excluded from
    the norms).  Channel projections use the geometry's natural frame.
    """
    p = sol.params
    if path is None:
        path = "spectral" if sol.geometry.kind == "flat" else "fd4"
    f = sol.build(grid, t)
    dt_term = sol.time_derivative(grid, t)
    Lq = fields.elastic_apply(f, path=path)
    force = tensors.bulk_force(f.data) / p.epsilon**2
    res = dt_term - Lq - force

    if sol.geometry.kind == "radial" and path == "fd4":
        sl = tuple(slice(margin, n - margin) for n in grid.shape)
        res_in = res[sl]
        xs = np.stack(grid.meshgrid(), axis=-1)[sl]
    else:
        res_in = res
        xs = np.stack(grid.meshgrid(), axis=-1)
        margin = 0

    mag = np.sqrt(tensors.norm2(res_in))
    sup = float(np.max(mag))
    l2 = float(np.sqrt(np.sum(mag**2) * grid.cell_volume))

    if sol.geometry.kind == "radial":
        rel = xs - np.asarray(sol.geometry.center)
        rho = np.maximum(np.sqrt(np.sum(rel**2, axis=-1)), 1e-9)
        n, l, m = _radial_frame(rel, rho)
        E = [tensors.outer_dev(n, n),
             tensors._dev5(n[..., :, None] * l[..., None, :] + l[..., :, None] * n[..., None, :]),
             tensors._dev5(n[..., :, None] * m[..., None, :] + m[..., :, None] * n[..., None, :]),
             tensors._dev5(m[..., :, None] * l[..., None, :] + l[..., :, None] * m[..., None, :]),
             tensors._dev5(l[..., :, None] * l[..., None, :] - m[..., :, None] * m[..., None, :])]
    else:
        frame = tensors.frame_from_normal(np.eye(3)[sol.geometry.axis])
        E = list(tensors.basis_from_frame(frame))
    ch = []
    for e in E:
        eb = np.broadcast_to(e, res_in.shape) if np.asarray(e).ndim == 1 else e
        ch.append(float(np.max(np.abs(tensors.dot(res_in, eb)))))
    ch = np.array(ch)
    return ResidualReport(p.epsilon, sup, l2, ch, margin)


def residual_sweep(make_solution, make_grid, epsilons, t=0.0):
    """Residual norms across an eps sweep with the fitted sup-norm exponent."""
    rows = []
    for eps in epsilons:
        sol = make_solution(eps)
        grid = make_grid(eps)
        rep = residual(sol, grid, t)
        rows.append(rep)
    exponent = loglog_slope([r.epsilon for r in rows], [r.sup for r in rows])
    return rows, exponent
