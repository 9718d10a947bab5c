"""Discretized quadratic forms on I = [-1, 1] and their low spectra.

The scalar forms are

    G_j(p) = (1 + 2L/3) int |p'|^2 + eps^-2 int V_j(s(r/eps)) p^2 dr,

with V_0 = theta, V_1 = kappa, V_2 = iota, posed on all of H^1(I) (natural
boundary).  Discretization: P1 stiffness (second-order centered differences
with free boundary rows) plus trapezoidal mass lumping, reduced to a
standard symmetric tridiagonal eigenproblem.  The vector-valued form behind
the uniform spectral upper bound couples five basis channels around the
glued leading-order profile; for a constant frame it is block tridiagonal.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import tensors
from .layer import LayerContext, potential, s_profile
from .tensors import ValidationError

__all__ = [
    "FormSpec",
    "omega_weight",
    "AssembledForm",
    "EigenReport",
    "SweepResult",
    "TheoremAResult",
    "assemble_form",
    "eigen_smallest",
    "spectral_gap_sweep",
    "endpoint_ratio",
    "theoremA_maxeig",
    "ResolutionError",
]

_POTENTIALS = {0: "theta", 1: "kappa", 2: "iota"}


class ResolutionError(ValueError):
    """The grid does not resolve the layer width (eps/h too small)."""


@dataclass(frozen=True)
class FormSpec:
    """A scalar form: potential kind (0|1|2), layer width, anisotropy, nodes."""

    kind: int
    epsilon: float
    L: float
    N: int

    def __post_init__(self):
        if self.kind not in (0, 1, 2):
            raise ValidationError("form kind must be 0, 1 or 2")
        if not (0.0 < self.epsilon <= 0.5):
            raise ValidationError("epsilon must lie in (0, 0.5]")
        if self.N < 64:
            raise ValidationError("need at least 64 nodes")
        if not 1.0 + 2.0 * self.L / 3.0 > 0.0:
            raise ValidationError("prefactor 1 + 2L/3 must be positive")

    @property
    def grid(self):
        return np.linspace(-1.0, 1.0, self.N)

    @property
    def h(self):
        return 2.0 / (self.N - 1)


@dataclass
class AssembledForm:
    """Symmetric tridiagonal reduction of a discretized quadratic form.

    d, e: diagonal/off-diagonal of W^{-1/2} (K + V W) W^{-1/2} where K is
    the free-boundary stiffness, V the nodal potential and W the lumped
    mass.  Eigenvalues of (d, e) approximate the form's spectrum against
    the L^2 norm; eigenvectors map back to grid functions via W^{-1/2}.
    """

    d: np.ndarray
    e: np.ndarray
    weights: np.ndarray
    grid: np.ndarray
    prefactor: float
    V: np.ndarray
    epsilon: float
    kind: int

    def as_dense(self):
        return np.diag(self.d) + np.diag(self.e, 1) + np.diag(self.e, -1)

    def form_value(self, p):
        """G(p) for a nodal function p (stiffness + lumped potential)."""
        p = np.asarray(p, dtype=float)
        h = self.grid[1] - self.grid[0]
        grad = np.diff(p) / h
        return float(self.prefactor * np.sum(grad**2) * h
                     + np.sum(self.V * self.weights * p**2))

    def l2_norm2(self, p):
        return float(np.sum(self.weights * np.asarray(p, float) ** 2))


@dataclass
class EigenReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns are grid functions
    residuals: np.ndarray
    epsilon: float = 0.0
    kind: int = -1

    def __post_init__(self):
        if np.any(np.diff(self.eigenvalues) < -1e-12):
            raise ValidationError("eigenvalues must be ascending")


def omega_weight(spec, floor=1e-8):
    """Exponentially decaying measure weight for the kappa-form gap.

    The kappa potential vanishes on the nematic side, so the plain-L2
    second eigenvalue of G_1 is an O(1) free mode there; the gap scaling
    holds in a norm weighted by a positive bounded function decaying
    exponentially at +inf.  The natural layer-rate choice is
    omega = 1 - s(r/eps), floored for conditioning.
    """
    ctx = LayerContext(spec.L)
    return np.maximum(s_profile(-spec.grid / spec.epsilon, ctx), floor)


def assemble_form(spec, weight=None):
    """Discretize G_kind as a symmetric tridiagonal pencil reduction.

    `weight` optionally multiplies the mass measure (used for the
    omega-weighted kappa gap); the form itself is unchanged.
    """
    ctx = LayerContext(spec.L)
    r = spec.grid
    h = spec.h
    V = potential(_POTENTIALS[spec.kind], s_profile(r / spec.epsilon, ctx)) / spec.epsilon**2
    w = np.full(spec.N, h)
    w[0] = w[-1] = 0.5 * h
    kd = np.full(spec.N, 2.0 * ctx.sigma / h)
    kd[0] = kd[-1] = ctx.sigma / h
    ke = np.full(spec.N - 1, -ctx.sigma / h)
    mw = w if weight is None else w * np.asarray(weight, dtype=float)
    d = (kd + V * w) / mw
    e = ke / np.sqrt(mw[:-1] * mw[1:])
    return AssembledForm(d, e, mw, r, ctx.sigma, V, spec.epsilon, spec.kind)


def eigen_smallest(form, k=2):
    """The k algebraically smallest eigenpairs, residual-certified.

    Accepts an AssembledForm (or a bare (d, e) tuple) and solves the
    tridiagonal eigenproblem by bisection + inverse iteration; residuals
    |A v - lambda v| are certified against 1e-8 |A|.
    """
    if isinstance(form, AssembledForm):
        d, e = form.d, form.e
        eps, kind, w = form.epsilon, form.kind, form.weights
    else:
        d, e = form
        d = np.asarray(d, float)
        e = np.asarray(e, float)
        eps, kind, w = 0.0, -1, np.ones_like(d)
    k = min(k, len(d))
    vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1),
                                  lapack_driver="stebz")
    anorm = float(np.max(np.abs(d)) + 2.0 * np.max(np.abs(e), initial=0.0))
    res = np.empty(k)
    for j in range(k):
        v = vecs[:, j]
        Av = d * v
        Av[:-1] += e * v[1:]
        Av[1:] += e * v[:-1]
        res[j] = np.max(np.abs(Av - vals[j] * v))
    if np.any(res > 1e-8 * anorm):
        raise RuntimeError(f"eigenpair residuals {res} exceed 1e-8 |A| = {1e-8 * anorm:.3e}")
    grid_vecs = vecs / np.sqrt(w)[:, None]
    return EigenReport(vals, grid_vecs, res, eps, kind)


def _sweep_nodes(eps, eps_max):
    """Node count for a sweep entry: eps/h >= 16 plus h ~ eps^{5/2} scaling.

    16 points per layer width resolves the eigenfunctions; the extra
    refinement makes the O(h^2/eps^4)-scale discretization floor of the
    near-null ground eigenvalue decrease along the sweep.
    """
    h16 = eps / 16.0
    h_scaled = (eps_max / 16.0) * (eps / eps_max) ** 2.5
    h = min(h16, h_scaled)
    return int(np.ceil(2.0 / h)) + 1


@dataclass
class SweepResult:
    kind: int
    rows: list  # (epsilon, N, lambda1, lambda2, lambda2*eps^2)
    c0: float
    ratio: float  # max/min of lambda2 eps^2 across the sweep


def spectral_gap_sweep(kind, L, epsilons, k=2, weighted=None):
    """Two lowest eigenvalues of G_kind across an epsilon sweep.

    Returns rows (epsilon, N, lambda1, lambda2, lambda2 eps^2) together
    with c0 = min lambda2 eps^2 and the spread ratio of lambda2 eps^2; the
    structural claims (lambda1 -> 0 decreasing, bounded spread) are left to
    the caller so failed sweeps remain inspectable.  For the kappa form
    (kind 1) lambda2 is taken from the omega-weighted pencil -- the
    plain-L2 second eigenvalue is a free O(1) mode on the potential-free
    side and the eps^-2 gap only holds against a decaying weight --
    while lambda1 is the plain near-null ground eigenvalue (the weighted
    pencil's conditioning floor would mask it).
    """
    if weighted is None:
        weighted = kind == 1
    epsilons = sorted(epsilons, reverse=True)
    if len(epsilons) < 3:
        raise ValidationError("sweep needs at least 3 epsilon values")
    rows = []
    for eps in epsilons:
        N = _sweep_nodes(eps, epsilons[0])
        spec = FormSpec(kind, eps, L, N)
        if eps / spec.h < 16.0:
            raise ResolutionError(f"eps/h = {eps / spec.h:.1f} < 16")
        rep_plain = eigen_smallest(assemble_form(spec), k)
        lam1 = float(rep_plain.eigenvalues[0])
        if weighted:
            rep_w = eigen_smallest(assemble_form(spec, weight=omega_weight(spec)), k)
            lam2 = float(rep_w.eigenvalues[1])
        else:
            lam2 = float(rep_plain.eigenvalues[1])
        rows.append((eps, N, lam1, lam2, lam2 * eps**2))
    lam2e2 = [r[4] for r in rows]
    c0 = min(lam2e2)
    ratio = max(lam2e2) / min(lam2e2) if min(lam2e2) > 0 else np.inf
    return SweepResult(kind, rows, c0, ratio)


def endpoint_ratio(p, spec):
    """max(|p(-1)|^2, |p(1)|^2) / (eps (G_0(p) + int p^2)).

    The endpoint-control constant of the theta form; for ground-mode-like
    p it stays bounded across an eps sweep.
    """
    if spec.kind != 0:
        raise ValidationError("endpoint ratio is defined for the theta form (kind 0)")
    form = assemble_form(spec)
    p = np.asarray(p, dtype=float)
    num = max(p[0] ** 2, p[-1] ** 2)
    den = spec.epsilon * (form.form_value(p) + form.l2_norm2(p))
    if den == 0.0:
        return 0.0
    return float(num / den)


# ---------------------------------------------------------------------------
# the five-channel form around the glued leading-order profile
# ---------------------------------------------------------------------------

@dataclass
class TheoremAResult:
    epsilon: float
    L: float
    N: int
    max_eig: float
    channel_max: np.ndarray     # largest eigenvalue per basis channel
    block_offdiag_max: float    # largest assembled cross-channel coupling


def theoremA_maxeig(epsilon, L, N, include_bulk=True):
    """Largest eigenvalue of the linearized form around the glued profile.

    Assembles B[Q] = -int |dQ/dr|^2 - L int |div Q|^2 + eps^-2 int H_{Q0}Q:Q
    for fields Q(r) = sum_i q_i(r) E^i on [-1, 1] with the constant frame
    n = e1 and Q0 the glued leading-order profile (identically the pure
    layer on the delta/4-normalized interval), against the mass int |Q|^2.
    Channel couplings are built through the tensor contractions; the
    cross-channel blocks must vanish for the constant frame, which is
    verified before the per-channel tridiagonal solves.

    include_bulk=False drops the eps^-2 Hessian term, leaving the pure
    (negative semidefinite) elastic form as a sign-structure diagnostic.
    """
    from .approx import GlueConfig, glued_scalar_profile

    if N < 64:
        raise ValidationError("need at least 64 nodes")
    h = 2.0 / (N - 1)
    if epsilon / h < 8.0:
        raise ResolutionError(f"eps/h = {epsilon / h:.1f} < 8")
    ctx = LayerContext(L)
    r = np.linspace(-1.0, 1.0, N)
    # delta/4 = 1 normalization: delta = 4, the cutoff is identically 1 on I
    chi = glued_scalar_profile(r, epsilon, GlueConfig(delta=4.0), ctx)

    frame = tensors.frame_from_normal(np.array([1.0, 0.0, 0.0]))
    E = tensors.basis_from_frame(frame)
    G = np.array([[tensors.dot(E[i], E[j]) for j in range(5)] for i in range(5)])
    Ee1 = tensors.to_matrix(E)[:, :, 0]           # rows: E^i e1
    D = Ee1 @ Ee1.T
    P = chi[:, None] * E[0][None, :]              # Q0 at every node
    B = np.empty((5, 5, N))
    for i in range(5):
        HEi = tensors.hessian_apply(P, np.broadcast_to(E[i], P.shape))
        for j in range(5):
            B[i, j] = tensors.dot(HEi, np.broadcast_to(E[j], P.shape))
    if not include_bulk:
        B = np.zeros_like(B)

    offdiag_max = 0.0
    for i in range(5):
        for j in range(5):
            if i != j:
                cross = abs(G[i, j]) + abs(L) * abs(D[i, j]) + np.max(np.abs(B[i, j]))
                offdiag_max = max(offdiag_max, float(cross))
    if offdiag_max > 1e-12:
        raise ValidationError(
            f"five-channel form is not block diagonal (max cross {offdiag_max:.2e})")

    w = np.full(N, h)
    w[0] = w[-1] = 0.5 * h
    channel_max = np.empty(5)
    for i in range(5):
        stiff = G[i, i] + L * D[i, i]
        kd = np.full(N, 2.0 * stiff / h)
        kd[0] = kd[-1] = stiff / h
        ke = np.full(N - 1, -stiff / h)
        diag_B = -kd + (B[i, i] / epsilon**2) * w
        mass = G[i, i] * w
        d = diag_B / mass
        e = -ke / np.sqrt(mass[:-1] * mass[1:])
        vals = eigh_tridiagonal(-d, -e, select="i", select_range=(0, 0),
                                lapack_driver="stebz")[0]
        channel_max[i] = -vals[0]
    return TheoremAResult(epsilon, L, N, float(np.max(channel_max)),
                          channel_max, offdiag_max)
