import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from chlab.contact_core import (
    lambda_sq,
    h_tensor,
    levi_civita,
    phi_from_metric,
    sectional_curvature,
    tanno_residual,
    torsion,
    torsion_norm_sq,
)
from chlab.lie_models import (
    HomogeneousBackend,
    ModelSpec,
    StructureConstants,
    build_model,
    family_constants,
    integrate_homogeneous,
    koszul_connection,
    structure_equations,
)

from _oracles import FAMILY

S = 1 / math.sqrt(2)


def family(a, b):
    return build_model(ModelSpec("family", {"a": a, "b": b}))


def site(x):
    return np.asarray(x)[0, 0, 0]


def test_constants_are_exact_rationals():
    c = family_constants(Fraction(1, 3), 2)
    assert c.c[2][0][1] == Fraction(1, 3) and isinstance(c.c[1][0][2], Fraction)
    assert c.jacobi_defect() == 0.0


@pytest.mark.parametrize("a,b", list(itertools.product(range(-2, 3), repeat=2)))
def test_family_constants_valid(a, b):
    c = family_constants(a, b)
    assert c.antisymmetry_defect() == 0.0
    assert c.jacobi_defect() == 0.0
    assert c.unimodularity_defect() == 0.0


def test_non_unimodular_rejected():
    c = StructureConstants.from_brackets({(0, 1): (0, 1, 0)})
    with pytest.raises(ValueError, match="unimodularity"):
        HomogeneousBackend(c)


def test_jacobi_failure_rejected():
    # [X0,X1] = X1 and [X1,X2] = X0 break Jacobi
    c = StructureConstants.from_brackets({(0, 1): (0, 0, 1), (1, 2): (1, 0, 0),
                                          (0, 2): (0, 0, 1)})
    assert c.jacobi_defect() > 0
    with pytest.raises(ValueError):
        HomogeneousBackend(c)


def test_presets_are_family_members():
    for name, params, ab in (("sl2", {"lambda": 0.5}, (0.5, 0.5)), ("nil", {}, (0, 0)),
                             ("su2", {}, (-2, 2))):
        m = build_model(ModelSpec(name, params))
        ref = family_constants(*ab).as_array()
        np.testing.assert_array_equal(site(m.backend.brackets()), ref)


@pytest.mark.parametrize("bad", [ModelSpec("sl2", {"lambda": 0}), ModelSpec("sl2", {"lambda": -1}),
                                 ModelSpec("sol"), ModelSpec("nil", {}, 0.0)])
def test_invalid_specs(bad):
    with pytest.raises(ValueError):
        build_model(bad)


def test_sl2_structure_equations():
    m = build_model(ModelSpec("sl2", {"lambda": 1}))
    eq = structure_equations(m)
    # d alpha = 2 eta1^eta2, d eta1 = -alpha^eta2, d eta2 = -alpha^eta1
    assert eq["alpha"][1, 2] == 2.0 and eq["alpha"][0, 1] == eq["alpha"][0, 2] == 0.0
    assert eq["eta1"][0, 2] == -1.0 and np.count_nonzero(eq["eta1"]) == 2
    assert eq["eta2"][0, 1] == -1.0 and np.count_nonzero(eq["eta2"]) == 2


def test_nil_structure_equations():
    eq = structure_equations(build_model(ModelSpec("nil")))
    assert np.count_nonzero(eq["eta1"]) == 0 and np.count_nonzero(eq["eta2"]) == 0
    assert eq["alpha"][1, 2] == 2.0


def test_family_one_zero_torsion():
    m = family(1, 0)
    tau = site(torsion(m.metric, m.contact.reeb, m.backend))
    assert tau[1, 2] == pytest.approx(-1.0, abs=1e-15)
    assert site(torsion_norm_sq(tau[None, None, None], m.metric)) == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("a,b", list(itertools.product(range(-2, 3), repeat=2)))
def test_family_closed_forms(a, b):
    m = family(a, b)
    g, c, bk = m.metric, m.contact, m.backend
    tn = site(torsion_norm_sq(torsion(g, c.reeb, bk), g))
    lsq = site(lambda_sq(h_tensor(phi_from_metric(g, c), c.reeb, bk), g))
    res = tanno_residual(g, c, bk)[1]
    assert tn == pytest.approx(2 * (a + b) ** 2, abs=1e-12)
    assert lsq == pytest.approx((a + b) ** 2 / 4, abs=1e-12)
    assert res == pytest.approx(abs(a - b) * abs(a + b) / math.sqrt(2), abs=1e-12)


@pytest.mark.parametrize("ab", sorted(FAMILY))
def test_family_against_sympy_oracle(ab):
    ref = FAMILY[ab]
    m = family(*ab)
    g, c, bk = m.metric, m.contact, m.backend
    assert site(torsion_norm_sq(torsion(g, c.reeb, bk), g)) == pytest.approx(ref["tau2"], abs=1e-12)
    assert tanno_residual(g, c, bk)[1] == pytest.approx(ref["residual"], abs=1e-12)
    eye = np.eye(3)
    planes = {"K01": (eye[0], eye[1]), "K02": (eye[0], eye[2]), "K12": (eye[1], eye[2]),
              "K_Res": (eye[0], np.array([0, S, S])), "K_Reu": (eye[0], np.array([0, S, -S]))}
    for key, (X, Y) in planes.items():
        assert site(sectional_curvature(g, X, Y, bk)) == pytest.approx(ref[key], abs=1e-12), key


def test_tanno_residual_zero_on_presets():
    for a in (-2, -1, 0, 1, 2):
        m = family(a, -a)
        assert tanno_residual(m.metric, m.contact, m.backend)[1] <= 1e-12
    for lam in (0.25, 1, 3):
        m = build_model(ModelSpec("sl2", {"lambda": lam}))
        assert tanno_residual(m.metric, m.contact, m.backend)[1] <= 1e-10


def _brute_koszul(g, c):
    """Textbook loops: Gamma^k_ij from 2 g(nabla_i X_j, X_l)."""
    gi = np.linalg.inv(g)
    out = np.zeros((3, 3, 3))
    for i, j, l in itertools.product(range(3), repeat=3):
        v = 0.0
        for k in range(3):
            v += c[k, i, j] * g[k, l] - c[k, j, l] * g[k, i] + c[k, l, i] * g[k, j]
        for k in range(3):
            out[k, i, j] += 0.5 * gi[k, l] * v
    return out


@pytest.mark.parametrize("ab", [(1, 1), (2, -1), (-2, 2), (0.5, 1.5)])
def test_koszul_connection_matches_brute_force(ab):
    rng = np.random.default_rng(3)
    M = rng.normal(size=(3, 3))
    g = M @ M.T + np.eye(3)
    const = family_constants(*ab)
    got = koszul_connection(g, const)
    np.testing.assert_allclose(got, _brute_koszul(g, const.as_array()), atol=1e-13)
    bk = HomogeneousBackend(const)
    np.testing.assert_allclose(site(levi_civita(g[None, None, None], bk)), got, atol=1e-13)


def test_koszul_sl2_examples():
    g = np.eye(3)
    Gam1 = koszul_connection(g, family_constants(1, 1))
    np.testing.assert_allclose(Gam1[:, 0, 0], 0, atol=1e-15)
    Gam2 = koszul_connection(g, family_constants(2, 2))
    np.testing.assert_allclose(Gam2[:, 2, 0], [0, -3, 0], atol=1e-15)


def test_koszul_nil_reduces_to_minus_phi():
    m = build_model(ModelSpec("nil"))
    phi = site(phi_from_metric(m.metric, m.contact))
    Gam = koszul_connection(site(m.metric), m.backend.constants)
    np.testing.assert_allclose(Gam[:, 1, 0], -phi @ [0, 1, 0], atol=1e-15)


def test_koszul_singular_metric():
    with pytest.raises(ValueError):
        koszul_connection(np.zeros((3, 3)), family_constants(1, 1))


def test_integrate_homogeneous():
    assert integrate_homogeneous(8.0) == 8.0
    assert integrate_homogeneous(32.0, 1.0) == 32.0
    assert integrate_homogeneous(0.0, 5.0) == 0.0
    assert integrate_homogeneous(np.full((1, 1, 1), 2.0), 2.5) == 5.0


def test_divergence_free_reeb():
    # unimodularity: trace of ad_R vanishes, so R preserves the reference volume
    for a, b in itertools.product(range(-2, 3), repeat=2):
        c = family_constants(a, b).as_array()
        assert np.trace(c[:, 0, :]) == 0.0


def test_model_info_brackets():
    m = build_model(ModelSpec("sl2", {"lambda": 2}))
    assert m.info["brackets"]["[R,e1]"] == "2 e2"
    assert m.info["brackets"]["[e1,e2]"] == "-2 R"
