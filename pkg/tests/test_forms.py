import numpy as np
import pytest

from nemlab import forms
from nemlab.layer import LayerContext, s_profile
from nemlab.tensors import ValidationError


def test_formspec_validation():
    with pytest.raises(ValidationError):
        forms.FormSpec(3, 0.1, -0.5, 256)
    with pytest.raises(ValidationError):
        forms.FormSpec(0, 0.6, -0.5, 256)
    with pytest.raises(ValidationError):
        forms.FormSpec(0, 0.1, -0.5, 32)
    with pytest.raises(ValidationError):
        forms.FormSpec(0, 0.1, -1.6, 256)


def test_eigen_smallest_identity():
    rep = forms.eigen_smallest((np.ones(2), np.zeros(1)), 2)
    assert np.allclose(rep.eigenvalues, [1.0, 1.0])


def test_eigen_smallest_neumann_laplacian():
    # free Laplacian on [-1, 1] with prefactor sigma: lambda1 = 0,
    # lambda2 = sigma (pi/2)^2 (analytic oracle)
    N = 513
    sigma = 2.0 / 3.0
    h = 2.0 / (N - 1)
    w = np.full(N, h)
    w[0] = w[-1] = h / 2
    kd = np.full(N, 2 * sigma / h)
    kd[0] = kd[-1] = sigma / h
    ke = np.full(N - 1, -sigma / h)
    rep = forms.eigen_smallest((kd / w, ke / np.sqrt(w[:-1] * w[1:])), 2)
    assert abs(rep.eigenvalues[0]) < 1e-6
    assert abs(rep.eigenvalues[1] - sigma * np.pi**2 / 4) < 0.01 * sigma * np.pi**2 / 4
    assert np.all(rep.residuals < 1e-8)


def test_assembled_matrix_symmetric_and_value():
    spec = forms.FormSpec(0, 0.1, -0.5, 257)
    form = forms.assemble_form(spec)
    A = form.as_dense()
    assert np.max(np.abs(A - A.T)) < 1e-13
    # constant test vector: G0(1) = eps^-2 int theta, finite and computable
    ctx = LayerContext(-0.5)
    ones = np.ones(spec.N)
    got = form.form_value(ones)
    from nemlab._numerics import integral
    want = integral(spec.grid, forms.potential("theta", s_profile(spec.grid / 0.1, ctx))) / 0.01
    assert abs(got - want) < 1e-4 * abs(want)


def test_G2_strictly_positive():
    for eps, N in ((0.1, 257), (0.05, 513)):
        spec = forms.FormSpec(2, eps, -0.5, N)
        rep = forms.eigen_smallest(forms.assemble_form(spec), 1)
        assert rep.eigenvalues[0] >= 0.9 / eps**2


def test_G0_rayleigh_quotient_of_layer_mode_tiny():
    # p = s'(r/eps) nearly annihilates G0 (boundary terms only)
    ctx = LayerContext(-0.5)
    for eps in (0.1, 0.05):
        spec = forms.FormSpec(0, eps, -0.5, 2049)
        form = forms.assemble_form(spec)
        p = s_profile(spec.grid / eps, ctx, 1)
        rq = form.form_value(p) / form.l2_norm2(p)
        assert abs(rq) < 1e-2


def test_grid_refinement_convergence():
    spec = forms.FormSpec(0, 0.05, -0.5, 1024)
    spec2 = forms.FormSpec(0, 0.05, -0.5, 2048)
    l2a = forms.eigen_smallest(forms.assemble_form(spec), 2).eigenvalues[1]
    l2b = forms.eigen_smallest(forms.assemble_form(spec2), 2).eigenvalues[1]
    assert abs(l2a - l2b) < 0.01 * abs(l2b)


@pytest.mark.parametrize("kind", [0, 1])
def test_spectral_gap_sweep(kind):
    sw = forms.spectral_gap_sweep(kind, -0.5, [0.1, 0.05, 0.025])
    l1 = [abs(r[2]) for r in sw.rows]
    assert all(l1[i + 1] < l1[i] for i in range(len(l1) - 1))
    assert sw.c0 > 0
    assert sw.ratio < 3.0


def test_sweep_resolution_guard():
    with pytest.raises(ValidationError):
        forms.spectral_gap_sweep(0, -0.5, [0.1, 0.05])


def test_endpoint_ratio():
    spec = forms.FormSpec(0, 0.1, -0.5, 513)
    # constant 1: computable, finite
    r1 = forms.endpoint_ratio(np.ones(spec.N), spec)
    assert np.isfinite(r1) and r1 > 0
    # supported away from the endpoints -> 0
    p = np.exp(-((spec.grid) / 0.2) ** 2)
    p[: spec.N // 4] = 0.0
    p[-spec.N // 4:] = 0.0
    assert forms.endpoint_ratio(p, spec) == 0.0
    # ground eigenvector ratio bounded across a sweep
    ratios = []
    for eps in (0.1, 0.05):
        s2 = forms.FormSpec(0, eps, -0.5, 2049)
        rep = forms.eigen_smallest(forms.assemble_form(s2), 1)
        ratios.append(forms.endpoint_ratio(rep.eigenvectors[:, 0], s2))
    assert max(ratios) < 10.0


def test_theoremA_block_structure_and_elastic_sign():
    res = forms.theoremA_maxeig(0.05, -0.5, 1024)
    assert res.block_offdiag_max < 1e-12
    res0 = forms.theoremA_maxeig(0.05, -0.5, 1024, include_bulk=False)
    assert res0.max_eig <= 1e-9


def test_theoremA_sweep_bounded():
    eps_list = (0.1, 0.05, 0.025)
    vals = []
    for eps in eps_list:
        N = forms._sweep_nodes(eps, eps_list[0])
        vals.append(forms.theoremA_maxeig(eps, -0.5, N).max_eig)
    for a, b in zip(vals, vals[1:]):
        assert b <= a + 0.1 * (1.0 + abs(a))
    assert max(vals) < 1.0


def test_theoremA_resolution_guard():
    with pytest.raises(forms.ResolutionError):
        forms.theoremA_maxeig(0.01, -0.5, 128)
