"""Algebra of symmetric traceless 3x3 tensors.

Values are stored with 5 degrees of freedom in the component order
(xx, yy, xy, xz, yz); the zz entry is always -(xx+yy), so symmetry and
tracelessness hold by construction.  All functions below are vectorized
over leading axes: a "tensor" argument is an ndarray of shape (..., 5)
and a frame-vector argument an ndarray of shape (..., 3).

The bulk potential is the equal-well quartic with a=1, b=9, c=3, s_+=1,
for which the isotropic state Q=0 and the uniaxial states nn - I/3 are
degenerate minima.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ValidationError",
    "DomainError",
    "ModelParams",
    "SymTraceless3",
    "Frame",
    "to_matrix",
    "from_matrix",
    "dot",
    "norm2",
    "uniaxial",
    "basis_from_frame",
    "decompose",
    "reconstruct",
    "bulk_potential",
    "bulk_force",
    "taylor_B",
    "taylor_C",
    "hessian_apply",
    "f_second",
    "hplus_inverse",
    "standard_frame",
    "frame_from_normal",
    "random_frame",
    "random_tensor",
]

A_COEFF, B_COEFF, C_COEFF = 1.0, 9.0, 3.0

_I3 = np.eye(3)


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


@dataclass(frozen=True)
class ModelParams:
    """Model constants: fixed equal-well potential plus (L, epsilon).

    The potential coefficients are pinned to a=1, b=9, c=3, s_+=1 (the
    equal-well normalization b^2 = 27ac).  L is the elastic anisotropy,
    restricted to -3/2 < L < 0; epsilon the layer width.
    """

    L: float
    epsilon: float
    a: float = A_COEFF
    b: float = B_COEFF
    c: float = C_COEFF
    s_plus: float = 1.0

    def __post_init__(self):
        if not (self.a == 1.0 and self.b == 9.0 and self.c == 3.0 and self.s_plus == 1.0):
            raise ValidationError("potential coefficients are fixed at a=1, b=9, c=3, s_+=1")
        if abs(self.b**2 - 27.0 * self.a * self.c) > 1e-12:
            raise ValidationError("equal-well condition b^2 = 27ac violated")
        if not (-1.5 < self.L < 0.0):
            raise ValidationError(f"L={self.L} outside (-3/2, 0)")
        if not self.epsilon > 0.0:
            raise ValidationError("epsilon must be positive")

    @property
    def sigma(self):
        """Interface mobility constant 1 + 2L/3 (> 0)."""
        return 1.0 + 2.0 * self.L / 3.0


# ---------------------------------------------------------------------------
# 5-component <-> 3x3 conversions and invariant bilinear forms
# ---------------------------------------------------------------------------

def to_matrix(c):
    """Expand (..., 5) components into full (..., 3, 3) matrices."""
    c = np.asarray(c, dtype=float)
    M = np.empty(c.shape[:-1] + (3, 3), dtype=float)
    xx, yy, xy, xz, yz = (c[..., i] for i in range(5))
    M[..., 0, 0] = xx
    M[..., 1, 1] = yy
    M[..., 2, 2] = -xx - yy
    M[..., 0, 1] = M[..., 1, 0] = xy
    M[..., 0, 2] = M[..., 2, 0] = xz
    M[..., 1, 2] = M[..., 2, 1] = yz
    return M


def from_matrix(M, tol=1e-12):
    """Extract (..., 5) components, checking symmetry and trace.

    Inputs must be symmetric and traceless within `tol` (relative to the
    matrix magnitude); the stored components come from the exactly
    symmetrized, trace-projected matrix.
    """
    M = np.asarray(M, dtype=float)
    scale = 1.0 + np.abs(M).max(axis=(-2, -1), initial=0.0)
    if np.any(np.abs(M - np.swapaxes(M, -1, -2)).max(axis=(-2, -1)) > tol * scale):
        raise ValidationError("matrix is not symmetric within tolerance")
    tr = np.trace(M, axis1=-2, axis2=-1)
    if np.any(np.abs(tr) > 100 * tol * scale):
        raise ValidationError("matrix is not traceless within tolerance")
    S = 0.5 * (M + np.swapaxes(M, -1, -2))
    S = S - (np.trace(S, axis1=-2, axis2=-1) / 3.0)[..., None, None] * _I3
    return np.stack([S[..., 0, 0], S[..., 1, 1], S[..., 0, 1], S[..., 0, 2], S[..., 1, 2]], axis=-1)


def _dev5(M):
    """5 components of the deviatoric symmetric part of M, no validation."""
    S = 0.5 * (M + np.swapaxes(M, -1, -2))
    S = S - (np.trace(S, axis1=-2, axis2=-1) / 3.0)[..., None, None] * _I3
    return np.stack([S[..., 0, 0], S[..., 1, 1], S[..., 0, 1], S[..., 0, 2], S[..., 1, 2]], axis=-1)


def dot(p, q):
    """Frobenius contraction Q:R = Tr(QR) on 5-component arrays."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    return (2.0 * (p[..., 0] * q[..., 0] + p[..., 1] * q[..., 1])
            + p[..., 0] * q[..., 1] + p[..., 1] * q[..., 0]
            + 2.0 * (p[..., 2] * q[..., 2] + p[..., 3] * q[..., 3] + p[..., 4] * q[..., 4]))


def norm2(p):
    """|Q|^2 = Q:Q."""
    return dot(p, p)


def outer_dev(u, v):
    """Deviatoric symmetric part of the dyad u v, as 5 components."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    M = u[..., :, None] * v[..., None, :]
    return _dev5(M)


def uniaxial(s, n):
    """Uniaxial tensor s (nn - I/3) from order parameter s and director n."""
    return np.asarray(s, float)[..., None] * outer_dev(n, n)


# ---------------------------------------------------------------------------
# Scalar value type and frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymTraceless3:
    """A single symmetric traceless tensor (thin wrapper over 5 components)."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != (5,):
            raise ValidationError("SymTraceless3 stores exactly 5 components")
        object.__setattr__(self, "c", c)

    @classmethod
    def from_matrix(cls, M, tol=1e-12):
        return cls(from_matrix(M, tol=tol))

    @property
    def matrix(self):
        return to_matrix(self.c)

    def __add__(self, other):
        return SymTraceless3(self.c + other.c)

    def __sub__(self, other):
        return SymTraceless3(self.c - other.c)

    def __mul__(self, a):
        return SymTraceless3(self.c * float(a))

    __rmul__ = __mul__

    def dot(self, other):
        return float(dot(self.c, other.c))

    def norm(self):
        return float(np.sqrt(norm2(self.c)))


@dataclass(frozen=True)
class Frame:
    """Right-handed orthonormal triple (n, l, m).

    Orthonormality is enforced to 1e-12 at construction; the recorded
    orientation is the sign of n . (l x m).
    """

    n: np.ndarray
    l: np.ndarray
    m: np.ndarray
    orientation: int = field(init=False)

    def __post_init__(self):
        n = np.asarray(self.n, float)
        l = np.asarray(self.l, float)
        m = np.asarray(self.m, float)
        for name, v in (("n", n), ("l", l), ("m", m)):
            if v.shape != (3,):
                raise ValidationError(f"frame vector {name} must have shape (3,)")
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValidationError(f"frame vector {name} is not unit within 1e-12")
        for a, b, nm in ((n, l, "n.l"), ((n), m, "n.m"), (l, m, "l.m")):
            if abs(float(a @ b)) > 1e-12:
                raise ValidationError(f"frame vectors not orthogonal: |{nm}| > 1e-12")
        tri = float(n @ np.cross(l, m))
        if abs(abs(tri) - 1.0) > 1e-12:
            raise ValidationError("frame triple product is not +-1 within 1e-12")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "orientation", 1 if tri > 0 else -1)


def standard_frame():
    """The coordinate frame (e1, e2, e3)."""
    return Frame(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))


def frame_from_normal(n):
    """Complete a unit vector n to a right-handed orthonormal frame."""
    n = np.asarray(n, float)
    n = n / np.linalg.norm(n)
    a = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    l = np.cross(a, n)
    l /= np.linalg.norm(l)
    m = np.cross(n, l)
    return Frame(n, l, m)


def random_frame(rng):
    """Haar-ish random right-handed frame from a seeded Generator."""
    A = rng.normal(size=(3, 3))
    Qm, _ = np.linalg.qr(A)
    if np.linalg.det(Qm) < 0:
        Qm[:, 2] *= -1
    return Frame(Qm[:, 0], Qm[:, 1], Qm[:, 2])


def random_tensor(rng, scale=1.0):
    """Random symmetric traceless tensor with entries ~ N(0, scale^2)."""
    M = rng.normal(size=(3, 3)) * scale
    return _dev5(M)


def basis_from_frame(frame):
    """The five basis tensors E0..E4 generated by a frame.

    E0 = nn - I/3, E1 = nl + ln, E2 = nm + mn, E3 = ml + lm, E4 = ll - mm;
    mutually orthogonal with E0:E0 = 2/3 and Ei:Ei = 2 for i >= 1.
    Returns an array of shape (5, 5) (basis index, components).
    """
    n, l, m = frame.n, frame.l, frame.m
    E0 = outer_dev(n, n)
    E1 = _dev5(np.outer(n, l) + np.outer(l, n))
    E2 = _dev5(np.outer(n, m) + np.outer(m, n))
    E3 = _dev5(np.outer(m, l) + np.outer(l, m))
    E4 = _dev5(np.outer(l, l) - np.outer(m, m))
    return np.stack([E0, E1, E2, E3, E4])


def decompose(q, frame):
    """Coefficients (q0..q4) of Q in the E-basis of `frame`.

    q0 = (3/2) Q:E0 and qi = (1/2) Q:Ei for i >= 1, the weights dual to
    the basis normalization.
    """
    E = basis_from_frame(frame)
    w = np.array([1.5, 0.5, 0.5, 0.5, 0.5])
    return np.stack([w[i] * dot(q, E[i]) for i in range(5)], axis=-1)


def reconstruct(coeffs, frame):
    """Inverse of decompose: sum_i q_i E^i."""
    E = basis_from_frame(frame)
    coeffs = np.asarray(coeffs, float)
    return np.tensordot(coeffs, E, axes=([-1], [0]))


# ---------------------------------------------------------------------------
# Bulk potential, force, and multilinear Taylor operators
# ---------------------------------------------------------------------------

def bulk_potential(q, params=None):
    """Equal-well bulk energy density F(Q) = Tr Q^2 / 2 - 3 Tr Q^3 + (3/4)(Tr Q^2)^2.

    Vanishes at Q = 0 and on the uniaxial minimum nn - I/3, and restricted
    to the segment s E0 equals s^2 (1-s)^2 / 3.
    """
    M = to_matrix(q)
    tr2 = norm2(q)
    tr3 = np.einsum("...ij,...jk,...ki->...", M, M, M)
    return 0.5 * A_COEFF * tr2 - (B_COEFF / 3.0) * tr3 + 0.25 * C_COEFF * tr2**2


def bulk_force(q, params=None):
    """f(Q) = -F'(Q) = -(Q - 9(Q^2 - |Q|^2 I/3) + 3 |Q|^2 Q)."""
    q = np.asarray(q, float)
    M = to_matrix(q)
    M2 = np.einsum("...ij,...jk->...ik", M, M)
    q2 = _dev5(M2)
    n2 = norm2(q)[..., None]
    return -(A_COEFF * q - B_COEFF * q2 + C_COEFF * n2 * q)


def taylor_B(q, p):
    """Bilinear operator B(Q,P) = -9( (2/3) I (Q:P) - QP - PQ ).

    The result is traceless as a whole (the I-part cancels the trace of
    QP + PQ), so the deviatoric projection at the end is exact.
    """
    Mq, Mp = to_matrix(q), to_matrix(p)
    anti = np.einsum("...ij,...jk->...ik", Mq, Mp) + np.einsum("...ij,...jk->...ik", Mp, Mq)
    M = -B_COEFF * ((2.0 / 3.0) * dot(q, p)[..., None, None] * _I3 - anti)
    return _dev5(M)


def taylor_C(q, p, r):
    """Trilinear operator C(Q,P,R) = -3( Q(P:R) + R(Q:P) + P(Q:R) )."""
    q = np.asarray(q, float)
    p = np.asarray(p, float)
    r = np.asarray(r, float)
    return -C_COEFF * (q * dot(p, r)[..., None] + r * dot(q, p)[..., None] + p * dot(q, r)[..., None])


def hessian_apply(p, q, params=None):
    """Linearization of the bulk force: H_P Q = -Q + B(Q,P) + C(Q,P,P).

    Equals the directional derivative of bulk_force at P in direction Q.
    On P = s E0 it acts diagonally on the E-basis with coefficients
    -theta(s) on E0, -kappa(s) on E1, E2 and -iota(s) on E3, E4.
    """
    q = np.asarray(q, float)
    return -q + taylor_B(q, p) + taylor_C(q, p, p)


def f_second(p, q):
    """Second directional derivative of the bulk force: B(Q,Q) + 2 C(Q,Q,P)."""
    return taylor_B(q, q) + 2.0 * taylor_C(q, q, p)


def hplus_inverse(q, frame):
    """Invert the nematic-well linearization on span{E0, E3, E4}.

    Implements the closed form (1/9)(Q - nnQ - Qnn + (2/3)(nn:Q) I)
    + (14/9)(nn - I/3)(nn:Q).  The kernel of the linearization is
    span{E1, E2}; inputs with components there are rejected.  Composition
    with hessian_apply(E0, .) gives minus the identity on the admissible
    span (the Jacobian of f carries the opposite sign convention).
    """
    q = np.asarray(q, float)
    E = basis_from_frame(frame)
    scale = 1.0 + np.sqrt(np.max(norm2(q)))
    for i in (1, 2):
        if np.any(np.abs(dot(q, E[i])) > 1e-10 * scale):
            raise DomainError("input has components in Ker H+ (E1/E2 directions)")
    n = frame.n
    M = to_matrix(q)
    nn = np.outer(n, n)
    nnq = np.einsum("...ij,ji->...", M, nn)
    part1 = M - np.einsum("ij,...jk->...ik", nn, M) - np.einsum("...ij,jk->...ik", M, nn) \
        + (2.0 / 3.0) * nnq[..., None, None] * _I3
    return (1.0 / 9.0) * _dev5(part1) + (14.0 / 9.0) * nnq[..., None] * E[0]
