import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nemlab import fields as F
from nemlab import io, tensors
from nemlab.layer import LayerContext
from nemlab.tensors import ModelParams, ValidationError


def params(L=-0.5, eps=0.05):
    return ModelParams(L=L, epsilon=eps)


def random_bandlimited(grid, rng, kmax=4, scale=0.3):
    """Random real band-limited symmetric traceless field."""
    data = np.zeros(grid.shape + (5,))
    xs = grid.meshgrid()
    for _ in range(6):
        k = rng.integers(-kmax, kmax + 1, size=grid.dim)
        phase = sum(2 * np.pi * k[a] * xs[a] / grid.box[a] for a in range(grid.dim))
        data += np.cos(phase + rng.uniform(0, 2 * np.pi))[..., None] * \
            tensors.random_tensor(rng, scale)
    return F.QField(grid, data, params())


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValidationError):
        F.PeriodicGrid(2, 15, 1.0)
    with pytest.raises(ValidationError):
        F.PeriodicGrid(2, 33, 1.0)
    g = F.PeriodicGrid(2, (32, 64), (1.0, 2.0))
    assert g.h == (1.0 / 32, 2.0 / 64)


def test_qfield_range_guard():
    g = F.PeriodicGrid(1, 16, 1.0)
    f = F.uniform_field(g, 3.0 * np.array([1.0, 1.0, 0, 0, 0]), params())
    with pytest.raises(ValidationError):
        f.validate()


# ---------------------------------------------------------------------------
# elastic operator
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("dim", [1, 2, 3])
def test_elastic_plane_wave_oracle(dim):
    p = params()
    g = F.PeriodicGrid(dim, 32, 1.0)
    rng = np.random.default_rng(dim)
    M = tensors.random_tensor(rng)
    kint = np.array([3, -2, 1][:dim])
    xs = g.meshgrid()
    phase = sum(2 * np.pi * kint[a] * xs[a] for a in range(dim))
    f = F.QField(g, np.cos(phase)[..., None] * M, p)
    kvec = np.zeros(3)
    kvec[:dim] = 2 * np.pi * kint
    k2 = float(kvec @ kvec)
    khat = kvec / np.sqrt(k2)
    Mm = tensors.to_matrix(M)
    nMn = khat @ Mm @ khat
    nM = khat @ Mm
    S = np.outer(khat, nM) + np.outer(nM, khat) - (2 / 3) * nMn * np.eye(3)
    want = -k2 * (Mm + 0.5 * p.L * S)
    want5 = np.cos(phase)[..., None] * tensors.from_matrix(want)
    out = F.elastic_apply(f, "spectral")
    assert np.max(np.abs(out - want5)) < 1e-10
    out4 = F.elastic_apply(f, "fd4")
    h = g.h[0]
    assert np.max(np.abs(out4 - want5)) < 50.0 * (2 * np.pi * 3 * h) ** 4 * k2


def test_elastic_constant_field_zero():
    g = F.PeriodicGrid(2, 16, 1.0)
    f = F.uniform_field(g, 0.4 * np.array([2 / 3, -1 / 3, 0, 0, 0]), params())
    assert np.max(np.abs(F.elastic_apply(f, "spectral"))) < 1e-13
    assert np.max(np.abs(F.elastic_apply(f, "fd4"))) < 1e-13


def test_elastic_L_to_zero_is_laplacian():
    # vanishing anisotropy: the operator reduces to the componentwise Laplacian
    g = F.PeriodicGrid(1, 64, 1.0)
    x = g.axes()[0]
    rng = np.random.default_rng(7)
    M = tensors.random_tensor(rng)
    data = np.sin(2 * np.pi * x)[..., None] * M
    f = F.QField(g, data, ModelParams(L=-1e-11, epsilon=0.05))
    want = -(2 * np.pi) ** 2 * data
    assert np.max(np.abs(F.elastic_apply(f, "spectral") - want)) < 1e-8


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def test_energy_zero_and_equal_well():
    g = F.PeriodicGrid(2, 16, 1.0)
    p = params()
    assert F.energy(F.uniform_field(g, np.zeros(5), p)) == 0.0
    n = np.array([0.6, 0.8, 0.0])
    e0 = tensors.outer_dev(n, n)
    assert abs(F.energy(F.uniform_field(g, e0, p))) < 1e-12


def test_energy_parseval_matches_quadrature():
    # gradient/divergence parts from Parseval agree with real-space stencils
    g = F.PeriodicGrid(2, 32, (1.0, 2.0))
    f = random_bandlimited(g, np.random.default_rng(3))
    _, parts = F.energy(f, parts=True)
    g5 = F.gradient_spectral(f.data, g)
    dQ = np.zeros(g.shape + (3, 3, 3))
    dQ[..., : g.dim, :, :] = F._to33(g5)
    grad2 = np.einsum("...klj,...klj->...", dQ, dQ)
    divQ = np.einsum("...kkj->...j", dQ)
    div2 = np.einsum("...j,...j->...", divQ, divQ)
    vol = g.cell_volume
    assert abs(parts["gradient"] - 0.5 * np.sum(grad2) * vol) < 1e-9 * (1 + abs(parts["gradient"]))
    want_div = 0.5 * f.params.L * np.sum(div2) * vol
    assert abs(parts["divergence"] - want_div) < 1e-9 * (1 + abs(want_div))


@pytest.mark.parametrize("L", [-1.4, -1.0, -0.5, -0.1])
def test_flat_layer_surface_tension(L):
    # criterion-grade: eps * (energy per unit interface area) = sqrt(1+2L/3)/9
    eps = 0.02
    p = ModelParams(L=L, epsilon=eps)
    g = F.PeriodicGrid(1, 4096, 1.0)
    f = F.flat_layer_field(g, p)
    e = F.energy(f)
    per_area = e / 2.0  # two interfaces
    want = np.sqrt(1 + 2 * L / 3) / 9.0
    assert abs(eps * per_area - want) < 1e-6


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def test_step_zero_stays_zero():
    g = F.PeriodicGrid(1, 32, 1.0)
    p = params()
    f = F.uniform_field(g, np.zeros(5), p)
    cfg = F.SimConfig(dt=1e-4, t_end=1e-3)
    out, _ = F.run(f, cfg)
    assert np.max(np.abs(out.data)) == 0.0


def test_uniform_relaxation_matches_scalar_ode():
    # Q(0) = 0.8 E0 relaxes along the uniaxial ray; oracle: high-order ODE
    p = params(eps=0.05)
    g = F.PeriodicGrid(1, 16, 1.0)
    e0 = tensors.outer_dev(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))
    dt = 1e-3 * p.epsilon**2
    t_end = 5.0 * p.epsilon**2
    cfg = F.SimConfig(dt=dt, t_end=t_end, record_every=100)
    out, log = F.run(F.uniform_field(g, 0.8 * e0, p), cfg,
                     recorder=lambda fld: float(1.5 * tensors.dot(fld.data[0], e0)))
    times = np.asarray(log.times)
    sol = solve_ivp(lambda t, s: (-2 * s**3 + 3 * s**2 - s) / p.epsilon**2,
                    (0.0, times[-1]), [0.8], method="DOP853", rtol=1e-12, atol=1e-14,
                    t_eval=times)
    err = np.max(np.abs(np.asarray(log.records) - sol.y[0]))
    assert err < 1e-4


def test_uniform_relaxation_explicit_scheme():
    p = params(eps=0.1)
    g = F.PeriodicGrid(1, 16, 1.0)
    e0 = tensors.outer_dev(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))
    f = F.uniform_field(g, 0.8 * e0, p)
    dt = 0.5 * F.explicit_dt_bound(f)
    cfg = F.SimConfig(dt=dt, t_end=50 * dt, scheme="explicit")
    out, log = F.run(f, cfg)
    assert log.violations == 0
    with pytest.raises(F.IntegrationError):
        F.step(f, F.SimConfig(dt=10 * F.explicit_dt_bound(f), t_end=1.0, scheme="explicit"))


def test_stationary_flat_layer_drift_and_energy():
    # criterion-grade (reduced horizon in the unit test; acceptance runs t=0.1)
    p = params(L=-0.5, eps=0.05)
    g = F.PeriodicGrid(1, 512, 1.0)
    f = F.flat_layer_field(g, p)
    pos0, _ = F.interface_locate(f, normal_axis=0)
    cfg = F.SimConfig(dt=0.1 * p.epsilon**2, t_end=0.02, record_every=50)
    out, log = F.run(f, cfg)
    pos1, _ = F.interface_locate(out, normal_axis=0)
    assert abs(pos1 - pos0) < g.h[0]
    assert log.violations == 0
    assert np.all(np.diff(log.energies) <= 1e-9 * (1 + np.abs(log.energies[:-1])))


def test_symmetry_trace_preserved_after_steps():
    p = params(eps=0.1)
    g = F.PeriodicGrid(2, 32, 1.0)
    f = random_bandlimited(g, np.random.default_rng(11), scale=0.1)
    cfg = F.SimConfig(dt=1e-4, t_end=2e-3)
    out, _ = F.run(f, cfg)
    M = tensors.to_matrix(out.data)
    assert np.max(np.abs(np.trace(M, axis1=-2, axis2=-1))) < 1e-12
    assert np.max(np.abs(M - np.swapaxes(M, -1, -2))) == 0.0  # by construction


def test_translation_equivariance_spectral():
    p = params(eps=0.1)
    g = F.PeriodicGrid(1, 64, 1.0)
    f = random_bandlimited(g, np.random.default_rng(13), scale=0.1)
    cfg = F.SimConfig(dt=1e-4, t_end=1e-3)
    out1, _ = F.run(f, cfg)
    shifted = F.QField(g, np.roll(f.data, 5, axis=0), f.params)
    out2, _ = F.run(shifted, cfg)
    assert np.max(np.abs(np.roll(out1.data, 5, axis=0) - out2.data)) < 1e-12


# ---------------------------------------------------------------------------
# T-operator and div-curl identity
# ---------------------------------------------------------------------------

def test_t_operator_constant_field():
    g = F.PeriodicGrid(2, 16, 1.0)
    f = F.uniform_field(g, np.array([0.1, -0.2, 0.3, 0.0, 0.05]), params())
    assert np.max(np.abs(F.t_operator(f))) < 1e-13
    rep = F.divcurl_check(f)
    assert rep.pointwise_defect < 1e-13 and abs(rep.integrated_defect) < 1e-13


def test_t_operator_symmetric_traceless():
    g = F.PeriodicGrid(2, 32, 1.0)
    f = random_bandlimited(g, np.random.default_rng(17))
    T = F.t_operator(f)
    assert np.max(np.abs(T - np.swapaxes(T, -1, -2))) < 1e-12
    assert np.max(np.abs(np.trace(T, axis1=-2, axis2=-1))) < 1e-12


@pytest.mark.parametrize("dim,n", [(2, 64), (3, 24)])
def test_divcurl_identity_random_fields(dim, n):
    rng = np.random.default_rng(100 + dim)
    for _ in range(3):
        g = F.PeriodicGrid(dim, n, 1.0)
        f = random_bandlimited(g, rng, kmax=4)
        rep = F.divcurl_check(f)
        assert rep.pointwise_defect < 1e-10 * (1 + rep.grad2_mean)
        assert abs(rep.integrated_defect) < 1e-10 * (1 + rep.grad2_mean)


# ---------------------------------------------------------------------------
# interface location and error energy
# ---------------------------------------------------------------------------

def test_interface_locate_flat():
    p = params(eps=0.02)
    g = F.PeriodicGrid(1, 512, 1.0)
    f = F.flat_layer_field(g, p, offset=0.3)
    pos, spread = F.interface_locate(f, normal_axis=0)
    assert abs(pos - 0.3) < g.h[0] ** 2 * 10 + 1e-6
    assert spread < 1e-12


def test_interface_locate_radial():
    from nemlab import approx
    p = params(eps=0.02)
    g = F.PeriodicGrid(2, 256, 1.0)
    geom = approx.Geometry(kind="radial", center=(0.5, 0.5), R0=0.25, motion="static")
    f = approx.build_Q0(geom, p, g)
    R, spread = F.interface_locate(f, center=(0.5, 0.5))
    assert abs(R - 0.25) < max(g.h)
    assert spread < max(g.h)


def test_interface_locate_not_layered():
    g = F.PeriodicGrid(1, 32, 1.0)
    f = F.uniform_field(g, np.zeros(5), params())
    with pytest.raises(F.NotLayeredError):
        F.interface_locate(f, normal_axis=0)


def test_error_energy_closed_forms():
    p = params(eps=0.1)
    g = F.PeriodicGrid(1, 64, 1.0)
    f0 = F.uniform_field(g, np.zeros(5), p)
    assert F.error_energy(f0, f0, p.epsilon) == 0.0
    # constant difference: eps^0 |C|^2 |Omega|
    rng = np.random.default_rng(23)
    C = tensors.random_tensor(rng)
    f1 = F.uniform_field(g, C, p)
    want = tensors.norm2(C) * np.prod(g.box)
    assert abs(F.error_energy(f1, f0, p.epsilon) - want) < 1e-12 * (1 + want)
    # cos(2 pi x) M: closed form with the derivative weights
    M = tensors.random_tensor(rng)
    x = g.axes()[0]
    f2 = F.QField(g, np.cos(2 * np.pi * x)[:, None] * M, p)
    eps = p.epsilon
    want2 = tensors.norm2(M) * np.prod(g.box) * 0.5 * (
        1 + eps**6 * (2 * np.pi) ** 2 + eps**12 * (2 * np.pi) ** 4)
    got2 = F.error_energy(f2, f0, eps)
    assert abs(got2 - want2) < 1e-10 * (1 + want2)


def test_error_energy_grid_mismatch():
    p = params()
    f1 = F.uniform_field(F.PeriodicGrid(1, 32, 1.0), np.zeros(5), p)
    f2 = F.uniform_field(F.PeriodicGrid(1, 64, 1.0), np.zeros(5), p)
    with pytest.raises(ValidationError):
        F.error_energy(f1, f2, 0.1)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def test_snapshot_roundtrip(tmp_path):
    g = F.PeriodicGrid(2, (32, 16), (1.0, 0.5))
    f = random_bandlimited(g, np.random.default_rng(31))
    f.time = 0.125
    path = tmp_path / "snap.nlqf"
    io.write_snapshot(path, f)
    back = io.read_snapshot(path)
    assert back.grid == f.grid
    assert back.time == f.time
    assert back.params.L == f.params.L and back.params.epsilon == f.params.epsilon
    assert np.array_equal(back.data, f.data)
