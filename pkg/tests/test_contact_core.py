import math

import numpy as np
import pytest

from chlab.contact_core import (
    CompatibleMetricParams,
    ContactStructure,
    anosov_frame_check,
    bicontact_from_h,
    calibration_check,
    check_compatible,
    covariant_reeb_check,
    energy,
    energy_report,
    exterior_derivative,
    h_identities,
    h_tensor,
    lambda_sq,
    levi_civita,
    metric_from_params,
    phi_from_metric,
    phi_identities,
    reeb_derivative,
    reeb_field,
    rescale_theta,
    sectional_curvature,
    tanno_residual,
    torsion,
    torsion_norm_sq,
)
from chlab.lie_models import HomogeneousBackend, ModelSpec, StructureConstants, build_model
from chlab.torus_grid import TorusContactSpec, build_torus_model, d_alpha_exact

from conftest import sl2

S = 1 / math.sqrt(2)
E_S = np.array([0.0, S, S])
E_U = np.array([0.0, S, -S])


def site(x):
    return np.asarray(x)[0, 0, 0]


def abelian():
    return HomogeneousBackend(StructureConstants.from_brackets({}))


def model(name, **params):
    return build_model(ModelSpec(name, params))


def perturbed(m, u=0.2, r=0.3):
    p = math.exp(u)
    return metric_from_params(CompatibleMetricParams(m.coframe, p, (1 + r * r) / p, r))


# exterior derivative ------------------------------------------------------------

def test_d_alpha_on_sl2(sl2_1):
    d = site(exterior_derivative(sl2_1.contact.alpha, sl2_1.backend))
    expected = np.zeros((3, 3))
    expected[1, 2], expected[2, 1] = 2.0, -2.0
    np.testing.assert_array_equal(d, expected)


def test_d_of_constant_form_on_abelian_frame():
    eta = np.broadcast_to([0.3, -1.0, 2.0], (1, 1, 1, 3))
    assert np.max(np.abs(exterior_derivative(eta, abelian()))) == 0.0


def test_d_alpha_on_torus_matches_closed_form(torus32):
    b = torus32.backend
    d = exterior_derivative(torus32.contact.alpha, b)
    err = np.max(np.abs(d - d_alpha_exact(b, 1)))
    # amplitude 1/2 times the h^4/30 truncation constant of the stencil
    assert err <= 1.01 * 0.5 * b.spacing ** 4 / 30


def test_exterior_derivative_is_antisymmetric(torus16):
    rng = np.random.default_rng(0)
    eta = rng.normal(size=torus16.backend.site_shape + (3,))
    d = exterior_derivative(eta, torus16.backend)
    assert np.max(np.abs(d + np.swapaxes(d, -1, -2))) == 0.0


def test_exterior_derivative_rejects_wrong_shape(sl2_1):
    with pytest.raises(ValueError):
        exterior_derivative(np.zeros((2, 2, 2, 3)), sl2_1.backend)


# Reeb field ------------------------------------------------------------------

def test_reeb_on_sl2_is_first_frame_vector(sl2_1):
    np.testing.assert_array_equal(site(sl2_1.contact.reeb), [1.0, 0.0, 0.0])


def test_reeb_degenerate_d_alpha():
    b = abelian()
    alpha = np.broadcast_to([1.0, 0.0, 0.0], (1, 1, 1, 3))
    with pytest.raises(ValueError, match="degenerate d\\(alpha\\).*site"):
        ContactStructure.from_alpha(alpha, b)


def test_reeb_on_torus(torus32):
    _, _, x3 = torus32.backend.coords()
    R = torus32.contact.reeb
    expected = np.stack([2 * np.sin(x3), 2 * np.cos(x3), 0 * x3], axis=-1)
    assert np.max(np.abs(R - expected)) <= 1e-12
    a, d = torus32.contact.alpha, torus32.contact.d_alpha
    assert np.max(np.abs(np.sum(a * R, -1) - 1)) <= 1e-12
    assert np.max(np.abs(np.einsum("...i,...ij->...j", R, d))) <= 1e-12


def test_reeb_field_direct_call(torus16):
    c = torus16.contact
    R = reeb_field(c.alpha, c.d_alpha, torus16.backend)
    np.testing.assert_array_equal(R, c.reeb)


# metrics ---------------------------------------------------------------------

def test_reference_metric_on_sl2_is_identity(sl2_1):
    np.testing.assert_allclose(site(sl2_1.metric), np.eye(3), atol=1e-15)


def test_reference_metric_on_torus_is_flat(torus32):
    np.testing.assert_allclose(torus32.metric, np.broadcast_to(0.25 * np.eye(3),
                                                               torus32.metric.shape), atol=1e-15)
    params = torus32.params()
    np.testing.assert_allclose(metric_from_params(params), torus32.metric, atol=1e-15)


def test_diagonal_metric_passes_compatibility(sl2_1):
    params = CompatibleMetricParams(sl2_1.coframe, 2.0, 0.5, 0.0)
    g = site(metric_from_params(params))
    # diag(1, 2, 1/2) in the (alpha, eta_u, eta_s) coframe
    C = site(sl2_1.coframe)
    np.testing.assert_allclose(np.linalg.inv(C).T @ g @ np.linalg.inv(C),
                               np.diag([1.0, 2.0, 0.5]), atol=1e-14)
    d = check_compatible(metric_from_params(params), sl2_1.contact)
    assert max(d.values()) <= 1e-14


@pytest.mark.parametrize("p,q,r", [(1.0, 1.0, 0.1), (-1.0, -1.0, 0.0), (2.0, 0.0, 0.0)])
def test_metric_from_params_rejects_bad_params(sl2_1, p, q, r):
    with pytest.raises(ValueError):
        metric_from_params(CompatibleMetricParams(sl2_1.coframe, p, q, r))


def test_check_compatible_sl2(sl2_1):
    assert max(check_compatible(sl2_1.metric, sl2_1.contact).values()) <= 1e-14


def test_check_compatible_detects_scaled_planes(sl2_1):
    aa = np.einsum("...i,...j->...ij", sl2_1.contact.alpha, sl2_1.contact.alpha)
    g = 4.0 * (sl2_1.metric - aa) + aa
    d = check_compatible(g, sl2_1.contact)
    assert d["hodge"] > 1e-3 and d["volume"] > 1e-3


def test_check_compatible_torus(torus32):
    assert max(check_compatible(torus32.metric, torus32.contact).values()) <= 1e-10


def test_rescale_identity(sl2_1):
    g = sl2_1.metric
    np.testing.assert_array_equal(rescale_theta(g, sl2_1.contact.alpha, 2.0, 2.0), g)


def test_rescale_rejects_nonpositive(sl2_1):
    with pytest.raises(ValueError):
        rescale_theta(sl2_1.metric, sl2_1.contact.alpha, 2.0, 0.0)


def _rescaled(m, theta_new):
    c = m.contact
    g2 = rescale_theta(m.metric, c.alpha, c.theta, theta_new)
    return g2, ContactStructure(c.alpha, c.d_alpha, c.reeb, theta_new)


def test_rescale_sl2_to_four_halves_energy(sl2_1):
    g2, c2 = _rescaled(sl2_1, 4.0)
    assert energy(g2, c2, sl2_1.backend) == pytest.approx(4.0, abs=1e-12)
    assert max(check_compatible(g2, c2).values()) <= 1e-14


def test_rescale_torus_to_one(torus32):
    g2, c2 = _rescaled(torus32, 1.0)
    assert max(check_compatible(g2, c2).values()) <= 1e-10
    e0 = energy(torus32.metric, torus32.contact, torus32.backend)
    assert abs(1.0 * energy(g2, c2, torus32.backend) - 2.0 * e0) <= 1e-10 * e0


# phi, h, torsion ---------------------------------------------------------------

def test_phi_on_sl2(sl2_1):
    phi = site(phi_from_metric(sl2_1.metric, sl2_1.contact))
    np.testing.assert_allclose(phi @ [1, 0, 0], 0, atol=1e-15)
    np.testing.assert_allclose(phi @ [0, 1, 0], [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(phi @ [0, 0, 1], [0, 1, 0], atol=1e-15)


@pytest.mark.parametrize("name", ["su2", "nil"])
def test_phi_square_defect_is_alpha_tensor_reeb(name):
    m = model(name)
    phi = site(phi_from_metric(m.metric, m.contact))
    a, R = site(m.contact.alpha), site(m.contact.reeb)
    defect = phi @ phi + np.eye(3)
    np.testing.assert_allclose(defect, np.outer(R, a), atol=1e-15)
    assert np.linalg.matrix_rank(defect) == 1


def test_phi_on_torus_matches_hand_formula(torus32):
    phi = phi_from_metric(torus32.metric, torus32.contact)
    # G = I/4, so phi = D/2 * 4 = 2 D with D the closed-form d alpha
    np.testing.assert_allclose(phi, 2.0 * d_alpha_exact(torus32.backend, 1), atol=1e-14)
    assert max(phi_identities(phi, torus32.metric, torus32.contact).values()) <= 1e-14


@pytest.mark.parametrize("name", ["su2", "nil"])
def test_sasakian_torsion_vanishes(name):
    m = model(name)
    assert np.max(np.abs(torsion(m.metric, m.contact.reeb, m.backend))) == 0.0
    h = h_tensor(phi_from_metric(m.metric, m.contact), m.contact.reeb, m.backend)
    assert np.max(np.abs(h)) == 0.0


def test_sl2_torsion_norm(sl2_1):
    tau = torsion(sl2_1.metric, sl2_1.contact.reeb, sl2_1.backend)
    assert site(torsion_norm_sq(tau, sl2_1.metric)) == pytest.approx(8.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.5, 1, 2])
def test_h_eigenvalues_on_sl2(lam):
    m = sl2(lam)
    h = site(h_tensor(phi_from_metric(m.metric, m.contact), m.contact.reeb, m.backend))
    np.testing.assert_allclose(h @ [0, 1, 0], [0, -lam, 0], atol=1e-14)
    np.testing.assert_allclose(h @ [0, 0, 1], [0, 0, lam], atol=1e-14)


def test_h_eigenvalues_family_one_zero():
    m = model("family", a=1, b=0)
    phi = phi_from_metric(m.metric, m.contact)
    h = h_tensor(phi, m.contact.reeb, m.backend)
    ev = np.sort(np.linalg.eigvals(site(h)).real)
    np.testing.assert_allclose(ev, [-0.5, 0.0, 0.5], atol=1e-14)
    tau = torsion(m.metric, m.contact.reeb, m.backend)
    assert max(h_identities(h, phi, m.metric, m.contact, tau).values()) <= 1e-14


def test_h_identities_on_perturbed_metric(sl2_1):
    g = perturbed(sl2_1)
    phi = phi_from_metric(g, sl2_1.contact)
    h = h_tensor(phi, sl2_1.contact.reeb, sl2_1.backend)
    tau = torsion(g, sl2_1.contact.reeb, sl2_1.backend)
    assert max(h_identities(h, phi, g, sl2_1.contact, tau).values()) <= 1e-12


def test_lambda_sq_values():
    m = sl2(2)
    h = h_tensor(phi_from_metric(m.metric, m.contact), m.contact.reeb, m.backend)
    assert site(lambda_sq(h, m.metric)) == pytest.approx(4.0, abs=1e-12)
    n = model("nil")
    h = h_tensor(phi_from_metric(n.metric, n.contact), n.contact.reeb, n.backend)
    assert site(lambda_sq(h, n.metric)) == 0.0


def test_torus_lambda_sq_near_one(torus32):
    g, c, b = torus32.metric, torus32.contact, torus32.backend
    lsq = lambda_sq(h_tensor(phi_from_metric(g, c), c.reeb, b), g)
    assert np.max(np.abs(lsq - 1.0)) <= b.tolerance
    tn = torsion_norm_sq(torsion(g, c.reeb, b), g)
    assert np.max(np.abs(8 * lsq - tn)) <= 1e-12


# energy ------------------------------------------------------------------------

def test_energy_values(sl2_1):
    assert energy(sl2_1.metric, sl2_1.contact, sl2_1.backend) == pytest.approx(8.0, abs=1e-12)
    for name in ("su2", "nil"):
        m = model(name)
        assert energy(m.metric, m.contact, m.backend) == 0.0


def test_energy_scales_with_normalized_volume():
    m = sl2(1, vol=3.5)
    assert energy(m.metric, m.contact, m.backend) == pytest.approx(28.0, abs=1e-12)


def test_torus_energy_close_to_closed_form(torus32):
    E = energy(torus32.metric, torus32.contact, torus32.backend)
    assert abs(E / (2 * math.pi) ** 3 - 1) <= torus32.backend.tolerance


# connection and curvature ------------------------------------------------------

def test_levi_civita_flat_abelian():
    b = abelian()
    g = np.broadcast_to(np.eye(3), (1, 1, 1, 3, 3))
    assert np.max(np.abs(levi_civita(g, b))) == 0.0


@pytest.mark.parametrize("lam", [0.5, 1, 2])
def test_levi_civita_sl2(lam):
    m = sl2(lam)
    Gam = site(levi_civita(m.metric, m.backend))
    np.testing.assert_allclose(Gam[:, 0, 1], [0, 0, 1], atol=1e-14)          # nabla_R e1 = e2
    np.testing.assert_allclose(Gam[:, 0, 2], [0, -1, 0], atol=1e-14)         # nabla_R e2 = -e1
    np.testing.assert_allclose(Gam[:, 1, 0], [0, 0, 1 - lam], atol=1e-14)    # nabla_e1 R
    np.testing.assert_allclose(Gam[:, 2, 0], [0, -(1 + lam), 0], atol=1e-14)  # nabla_e2 R
    np.testing.assert_allclose(Gam[:, 0, 0], 0, atol=1e-14)                  # R geodesic


@pytest.mark.parametrize("name", ["sl2", "su2", "nil"])
def test_covariant_reeb_homogeneous(name, sl2_1):
    m = sl2_1 if name == "sl2" else model(name)
    assert covariant_reeb_check(m.metric, m.contact, m.backend) <= 1e-12
    assert covariant_reeb_check(perturbed(m), m.contact, m.backend) <= 1e-12


def test_covariant_reeb_torus_converges(torus16, torus32):
    d16 = covariant_reeb_check(torus16.metric, torus16.contact, torus16.backend)
    d32 = covariant_reeb_check(torus32.metric, torus32.contact, torus32.backend)
    assert d32 <= torus32.backend.tolerance
    assert d16 / d32 >= 0.75 * 16


@pytest.mark.parametrize("lam", [0.5, 1, 2])
def test_sectional_curvature_sl2(lam):
    m = sl2(lam)
    R = np.array([1.0, 0, 0])
    for e in (E_S, E_U):
        K = site(sectional_curvature(m.metric, R, e, m.backend))
        assert K == pytest.approx(1 - lam * lam, abs=1e-12)


def test_su2_is_round():
    m = model("su2")
    rng = np.random.default_rng(7)
    for _ in range(5):
        X, Y = rng.normal(size=(2, 3))
        assert site(sectional_curvature(m.metric, X, Y, m.backend)) == pytest.approx(1.0, abs=1e-12)


def test_sectional_curvature_degenerate_plane(sl2_1):
    with pytest.raises(ValueError, match="degenerate plane"):
        sectional_curvature(sl2_1.metric, E_S, 2 * E_S, sl2_1.backend)


# Tanno residual ----------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.5, 1, 2, 3.7])
def test_tanno_residual_sl2(lam):
    m = sl2(lam)
    assert tanno_residual(m.metric, m.contact, m.backend)[1] <= 1e-10


@pytest.mark.parametrize("name", ["su2", "nil"])
def test_tanno_residual_sasakian(name):
    m = model(name)
    pw, l2 = tanno_residual(m.metric, m.contact, m.backend)
    assert l2 == 0.0 and np.max(pw) == 0.0


def test_tanno_residual_torus_positive(torus32):
    _, l2 = tanno_residual(torus32.metric, torus32.contact, torus32.backend)
    assert l2 > 1.0


def test_reeb_derivative(sl2_1, torus32):
    h = h_tensor(phi_from_metric(sl2_1.metric, sl2_1.contact), sl2_1.contact.reeb,
                 sl2_1.backend)
    lsq = lambda_sq(h, sl2_1.metric)
    assert np.max(np.abs(reeb_derivative(lsq, sl2_1.contact, sl2_1.backend))) == 0.0
    assert np.max(np.abs(reeb_derivative(3.0, torus32.contact, torus32.backend))) == 0.0
    _, _, x3 = torus32.backend.coords()
    assert np.max(np.abs(reeb_derivative(np.sin(x3), torus32.contact,
                                         torus32.backend))) <= 1e-10


# bi-contact structures ---------------------------------------------------------

@pytest.mark.parametrize("lam", [0.5, 1, 2])
def test_bicontact_recovers_model_coframe(lam):
    m = sl2(lam)
    eta1, eta2, L = bicontact_from_h(m.metric, m.contact, m.backend)
    np.testing.assert_allclose(np.abs(site(eta1)), [0, 1, 0], atol=1e-14)
    np.testing.assert_allclose(np.abs(site(eta2)), [0, 0, 1], atol=1e-14)
    assert site(L) == pytest.approx(lam, abs=1e-14)
    cal = calibration_check(m.contact, eta1, eta2, m.backend, 1e-12)
    assert cal["calibrated"] and cal["kappa"] == pytest.approx(lam, abs=1e-12)


def test_bicontact_refuses_sasakian():
    m = model("nil")
    with pytest.raises(ValueError, match="degenerate torsion; bi-contact extraction undefined"):
        bicontact_from_h(m.metric, m.contact, m.backend)


def test_bicontact_on_perturbed_metric_not_calibrated(sl2_1):
    g = perturbed(sl2_1)
    eta1, eta2, _ = bicontact_from_h(g, sl2_1.contact, sl2_1.backend)
    cal = calibration_check(sl2_1.contact, eta1, eta2, sl2_1.backend)
    assert not cal["calibrated"]
    assert max(cal["defects"].values()) > 1e-3


def test_calibration_model_coframe_exact(sl2_1):
    eta1 = np.broadcast_to([0.0, 1, 0], (1, 1, 1, 3))
    eta2 = np.broadcast_to([0.0, 0, 1], (1, 1, 1, 3))
    cal = calibration_check(sl2_1.contact, eta1, eta2, sl2_1.backend)
    assert cal["kappa"] == 1.0
    assert max(cal["defects"].values()) <= 1e-12
    swapped = calibration_check(sl2_1.contact, eta2, eta1, sl2_1.backend)
    assert swapped["kappa"] == pytest.approx(-1.0)
    assert not swapped["sign_consistent"] and not swapped["calibrated"]


def test_torus_dx3_frame_not_calibrated(torus32):
    b, c = torus32.backend, torus32.contact
    eta1 = torus32.coframe[..., 1, :]
    eta2 = torus32.coframe[..., 2, :]
    cal = calibration_check(c, eta1, eta2, b)
    assert not cal["calibrated"]
    # the mixed products vanish identically in this gauge; the failure sits
    # in eta2 ^ d eta2 = -kappa Omega and in the Reeb-flow relations
    assert cal["defects"]["eta2_deta2"] > 0.1


@pytest.mark.parametrize("lam", [1, 2])
def test_anosov_frame_sl2(lam):
    m = sl2(lam)
    eta1, eta2, _ = bicontact_from_h(m.metric, m.contact, m.backend)
    out = anosov_frame_check(m.contact, eta1, eta2, m.metric, m.backend)
    assert out["lambda"] == pytest.approx(lam, abs=1e-12)
    assert max(out["stable"], out["unstable"], out["reeb"]) <= 1e-12


def test_anosov_frame_fails_on_su2():
    m = model("su2")
    eta1 = np.broadcast_to([0.0, 1, 0], (1, 1, 1, 3))
    eta2 = np.broadcast_to([0.0, 0, 1], (1, 1, 1, 3))
    out = anosov_frame_check(m.contact, eta1, eta2, m.metric, m.backend)
    assert max(out["stable"], out["unstable"]) > 1.0


# report ------------------------------------------------------------------------

def test_energy_report_sl2(sl2_1):
    rep = energy_report(sl2_1.metric, sl2_1.contact, sl2_1.backend)
    d = rep.to_dict()
    assert d["ok"] and d["critical"]
    assert d["energy"] == pytest.approx(8.0, abs=1e-12)
    assert d["curvature"]["reeb_stable"] == pytest.approx(0.0, abs=1e-12)
    assert d["calibration"]["calibrated"]


def test_energy_report_torus(torus32):
    rep = energy_report(torus32.metric, torus32.contact, torus32.backend)
    assert not rep.critical and not rep.failures
    assert abs(rep.lambda_sq_mean - 1.0) <= torus32.backend.tolerance
    assert rep.energy >= 0 and rep.lambda_sq_min >= -rep.tolerance


def test_energy_report_flags_incompatible_metric(sl2_1):
    g = 2.0 * sl2_1.metric
    rep = energy_report(g, sl2_1.contact, sl2_1.backend, curvature=False)
    assert "alpha_norm" in rep.failures


def test_torus_model_m2_coframe():
    m = build_torus_model(TorusContactSpec(2), n=32)
    D = m.contact.d_alpha
    Ci = np.linalg.inv(m.coframe)
    # d alpha (e_1, e_2) on the dual frame of the adapted coframe
    e1, e2 = Ci[..., :, 1], Ci[..., :, 2]
    val = np.einsum("...i,...ij,...j->...", e1, D, e2)
    assert np.max(np.abs(val - 2.0)) <= 1e-10
