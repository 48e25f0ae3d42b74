import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hklab import cones
from hklab import quatlin as ql
from hklab.cones import QMA, HessianK, NMinus1
from hklab.errors import NotAdmissible, OutsideCone, PreconditionViolated

FAMILIES = [
    ("qma", 1),
    ("qma", 3),
    ("hessian:1", 3),
    ("hessian:2", 3),
    ("hessian:2:root", 3),
    ("nminus1", 2),
    ("nminus1", 3),
]


def fam(family, n):
    return cones.make_family(family, n)


def test_eval_examples():
    assert cones.eval_f(QMA(2), [1.0, 1.0]) == 0.0
    assert cones.eval_f(QMA(2), [2.0, 8.0]) == pytest.approx(math.log(16.0), abs=1e-12)
    assert cones.eval_f(NMinus1(3), [1.0, 1.0, 1.0]) == pytest.approx(3 * math.log(2.0), abs=1e-12)


def test_grad_examples():
    np.testing.assert_allclose(cones.grad_f(QMA(2), [2.0, 8.0]), [0.5, 0.125])
    np.testing.assert_allclose(cones.grad_f(QMA(4), np.ones(4)), np.ones(4))


def test_outside_cone():
    with pytest.raises(OutsideCone):
        cones.eval_f(QMA(2), [1.0, -1.0])
    with pytest.raises(OutsideCone):
        cones.grad_f(HessianK(3, 2), [1.0, -5.0, -5.0])


def test_make_family_rejects_unknown():
    for bad in ("foo", "hessian", "hessian:x", "qma:2"):
        with pytest.raises(ValueError):
            fam(bad, 2)
    with pytest.raises(ValueError):
        fam("hessian:4", 3)


def test_hessian_margin_is_garding():
    f = HessianK(3, 2)
    # sigma_1 > 0 and sigma_2 > 0 but a negative entry
    lam = np.array([3.0, 2.0, -1.0])
    assert f.margin(lam) > 0
    assert not QMA(3).margin(lam) > 0


@pytest.mark.parametrize("family,n", FAMILIES)
def test_gradient_matches_central_differences(family, n, rng):
    f = fam(family, n)
    lam = cones.sample_interior(f, 100, rng)
    g = f.gradient(lam)
    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd = (f.value(lam + e) - f.value(lam - e)) / (2 * h)
        np.testing.assert_allclose(g[:, i], fd, rtol=1e-6, atol=1e-8)
    assert np.all(g > 0)


@pytest.mark.parametrize("family,n", FAMILIES)
def test_symmetric_under_permutation(family, n, rng):
    f = fam(family, n)
    lam = cones.sample_interior(f, 50, rng)
    perm = rng.permutation(n)
    np.testing.assert_allclose(f.value(lam[:, perm]), f.value(lam), rtol=1e-13)


@pytest.mark.parametrize("family", ["qma", "hessian:1", "hessian:2", "hessian:3", "nminus1"])
def test_structure_log_families(family):
    rep = cones.check_structure(fam(family, 3), 100)
    assert rep.all_pass, rep.to_dict()


def test_structure_qma_boundary_is_minus_infinity():
    rep = cones.check_structure(QMA(2), 50)
    assert rep.sup_boundary == -math.inf


def test_structure_hessian_k1_root_is_linear():
    f = HessianK(3, 1, "root")
    rep = cones.check_structure(f, 50, h_range=(1.0, 2.0))
    assert abs(rep.max_hessian_eig) <= 1e-6
    assert rep.all_pass
    lam = np.array([[1.0, 2.0, 3.0]])
    H = cones.numerical_hessian(f, lam)
    np.testing.assert_allclose(H, 0.0, atol=1e-6)


def test_structure_root_fails_condition3_at_zero_level():
    rep = cones.check_structure(HessianK(3, 2, "root"), 50, h_range=(0.0, 1.0))
    assert rep.sup_boundary == pytest.approx(0.0, abs=1e-8)
    assert not rep.cond3


def test_nminus1_n2_coincides_with_qma():
    a = cones.check_structure(NMinus1(2), 64, seed=3).to_dict()
    b = cones.check_structure(QMA(2), 64, seed=3).to_dict()
    for k in a:
        if k == "family":
            continue
        if isinstance(a[k], float):
            assert a[k] == pytest.approx(b[k], rel=1e-12), k
        else:
            assert a[k] == b[k], k


def test_ladder_limit_detects_saturation_and_divergence():
    t = cones.LADDER
    lim, div = cones.ladder_limit(np.log(t))
    assert div and lim == math.inf
    lim, div = cones.ladder_limit(2.0 - 1.0 / t)
    assert not div and lim == pytest.approx(2.0, abs=1e-8)
    lim, div = cones.ladder_limit(np.full_like(t, 3.5))
    assert not div and lim == 3.5


def test_linearized_coeffs_examples():
    lc = cones.linearized_coeffs(QMA(2), np.eye(4))
    np.testing.assert_allclose(lc.F, np.eye(4), atol=1e-14)
    assert lc.trace_F == pytest.approx(4.0)
    H = np.diag([2.0, 2.0, 1.0, 1.0])
    lc = cones.linearized_coeffs(QMA(2), H)
    np.testing.assert_allclose(lc.F, np.diag([0.5, 0.5, 1.0, 1.0]), atol=1e-14)
    assert lc.trace_F == pytest.approx(3.0)
    assert ql.contract(lc.F, H) == pytest.approx(4.0)


def test_linearized_coeffs_rejects_outside():
    with pytest.raises(OutsideCone):
        cones.linearized_coeffs(QMA(2), -np.eye(4))


@given(st.integers(0, 2**32 - 1), st.sampled_from(FAMILIES))
@settings(max_examples=60, deadline=None)
def test_directional_derivative_is_half_trace(seed, fam_spec):
    family, n = fam_spec
    f = fam(family, n)
    rng = np.random.default_rng(seed)
    lam = cones.sample_interior(f, 1, rng)[0]
    H = ql.with_spectrum(ql.random_hyperhermitian(n, rng), lam)
    D = ql.random_hyperhermitian(n, rng)
    lc = cones.linearized_coeffs(f, H)
    assert ql.is_hyperhermitian(lc.F, tol=1e-10)
    assert np.linalg.eigvalsh(lc.F).min() > -1e-12
    assert lc.trace_F == pytest.approx(2 * f.gradient(lam).sum())
    h = 1e-6 * max(1.0, np.abs(lam).min())
    fx = lambda t: f.value(ql.quaternionic_eigenvalues(H + t * D).values)
    fd = (fx(h) - fx(-h)) / (2 * h)
    assert 0.5 * ql.contract(lc.F, D) == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_linearized_coeffs_with_repeated_eigenvalues(rng):
    f = NMinus1(3)
    H = ql.with_spectrum(ql.random_hyperhermitian(3, rng), [2.0, 2.0, 1.0])
    lc = cones.linearized_coeffs(f, H)
    g = f.gradient(np.array([2.0, 2.0, 1.0]))
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(lc.F)), np.sort(np.repeat(g, 2)), atol=1e-10)


def test_concavity_gap_examples():
    assert cones.concavity_trace_gap(QMA(2), [2.0, 8.0]) == pytest.approx(2.7951774, abs=1e-7)
    for family, n in FAMILIES:
        assert cones.concavity_trace_gap(fam(family, n), np.ones(n)) == 0.0


@pytest.mark.parametrize("family,n", FAMILIES)
def test_concavity_gap_nonnegative(family, n, rng):
    f = fam(family, n)
    lam = cones.sample_interior(f, 1000, rng)
    assert np.all(cones.concavity_trace_gap(f, lam) >= -1e-12)


def test_subsolution_qma_identity_accepted():
    cert = cones.subsolution_check(QMA(2), np.ones(2), 0.0)
    assert isinstance(cert, cones.SubsolutionCertificate)
    assert cert.delta == 0.5
    assert math.isfinite(cert.R) and cert.R > 0
    assert cert.verified and cert.dense_sample_max <= cert.R


def test_subsolution_not_admissible():
    with pytest.raises(NotAdmissible):
        cones.subsolution_check(QMA(2), np.array([-1.0, 1.0]), 0.0)


def test_subsolution_saturating_rejected_with_witness(saturating):
    f = saturating(2)
    # limit along e_i is 1 + (1 - e^{-1}) < 1.8
    rej = cones.subsolution_check(f, np.ones(2), 1.8)
    assert isinstance(rej, cones.Rejection)
    assert rej.limit == pytest.approx(2.0 - math.exp(-1.0), abs=1e-9)
    assert isinstance(cones.subsolution_check(f, np.ones(2), 1.2), cones.SubsolutionCertificate)


def test_subsolution_field_witness_point(saturating):
    f = saturating(2)
    lam = np.array([[3.0, 3.0], [3.0, 3.0], [0.2, 0.2], [3.0, 3.0]])
    rej = cones.subsolution_check(f, lam, np.full(4, 1.5))
    assert isinstance(rej, cones.Rejection) and rej.point == 2


def test_subsolution_monotone_under_enlargement(saturating, rng):
    f = saturating(2)
    for _ in range(40):
        lam = rng.uniform(0.1, 3.0, 2)
        h = rng.uniform(0.5, 1.9)
        bigger = lam + rng.uniform(0.0, 2.0, 2)
        a = isinstance(cones.subsolution_check(f, lam, h, set_samples=16), cones.SubsolutionCertificate)
        b = isinstance(cones.subsolution_check(f, bigger, h, set_samples=16), cones.SubsolutionCertificate)
        assert b or not a


def test_dichotomy_probe_equal_matrices(rng):
    f = QMA(2)
    A = ql.with_spectrum(ql.random_hyperhermitian(2, rng), [100.0, 0.01])
    k = cones.dichotomy_probe(f, A, A, 0.0, 0.5, 10.0)
    lc = cones.linearized_coeffs(f, A)
    assert k == np.diagonal(lc.F).real.min() / lc.trace_F
    assert k > 0


def test_dichotomy_probe_example():
    f = QMA(2)
    vals = []
    for t in (10.0, 100.0, 1000.0):
        A = np.diag([t, t, 1 / t, 1 / t])
        vals.append(cones.dichotomy_probe(f, A, 2 * np.eye(4), 0.0, 0.5, 5.0))
    assert min(vals) > 0
    # first alternative: (0.5/t^2 ... ) evaluated by hand at t = 100
    A = np.diag([100.0, 100.0, 0.01, 0.01])
    F = np.diag([0.01, 0.01, 100.0, 100.0])
    first = ql.contract(F, 2 * np.eye(4) - A) / np.trace(F)
    assert cones.dichotomy_probe(f, A, 2 * np.eye(4), 0.0, 0.5, 10.0) == pytest.approx(max(first, 0.01 / 200.02))


def test_dichotomy_probe_preconditions():
    f = QMA(2)
    A = np.diag([100.0, 100.0, 0.01, 0.01])
    with pytest.raises(PreconditionViolated):
        cones.dichotomy_probe(f, A, A, 1.0, 0.5, 10.0)
    with pytest.raises(PreconditionViolated):
        cones.dichotomy_probe(f, A, A, 0.0, 0.5, 1e4)
