"""Unimodular three-dimensional Lie algebras as homogeneous contact models.

A left-invariant frame turns every left-invariant tensor into a constant, so a
single site carries the whole geometry; compact quotients only enter through
the normalized volume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from .contact_core import (
    ContactStructure,
    GeometryBackend,
    Model,
    exterior_derivative,
    metric_from_params,
)

SITE_SHAPE = (1, 1, 1)
PRESETS = ("sl2", "su2", "nil", "family")


def _exact(x):
    """Keep ints and rationals exact; everything else becomes float."""
    if isinstance(x, (int, Rational)) and not isinstance(x, bool):
        return Fraction(x)
    return float(x)


@dataclass(frozen=True)
class StructureConstants:
    """c[k][i][j] = k-th component of [X_i, X_j]."""

    c: tuple

    @classmethod
    def from_brackets(cls, brackets: dict) -> "StructureConstants":
        """Build from ``{(i, j): (c0, c1, c2)}`` for i < j; the rest follows by
        antisymmetry."""
        c = [[[Fraction(0)] * 3 for _ in range(3)] for _ in range(3)]
        for (i, j), comps in brackets.items():
            for k, v in enumerate(comps):
                c[k][i][j] = _exact(v)
                c[k][j][i] = -_exact(v)
        return cls(tuple(tuple(tuple(row) for row in ck) for ck in c))

    def as_array(self) -> np.ndarray:
        return np.array([[[float(v) for v in row] for row in ck] for ck in self.c])

    def antisymmetry_defect(self) -> float:
        return max(abs(float(self.c[k][i][j] + self.c[k][j][i]))
                   for k in range(3) for i in range(3) for j in range(3))

    def jacobi_defect(self) -> float:
        c = self.c
        worst = 0.0
        for i in range(3):
            for j in range(3):
                for l in range(3):
                    for m in range(3):
                        s = 0
                        for a, b, d in ((i, j, l), (j, l, i), (l, i, j)):
                            s += sum(c[k][a][b] * c[m][k][d] for k in range(3))
                        worst = max(worst, abs(float(s)))
        return worst

    def unimodularity_defect(self) -> float:
        """max over i of |tr ad_{X_i}|."""
        return max(abs(float(sum(self.c[k][i][k] for k in range(3)))) for i in range(3))

    def validate(self, tol: float = 1e-12) -> None:
        for name, d in (("antisymmetry", self.antisymmetry_defect()),
                        ("Jacobi identity", self.jacobi_defect()),
                        ("unimodularity", self.unimodularity_defect())):
            if d > tol:
                raise ValueError(f"structure constants fail {name} (defect {d:.3e})")


def family_constants(a, b) -> StructureConstants:
    """Frame (R, e1, e2) with [R, e1] = a e2, [R, e2] = b e1, [e1, e2] = -2R."""
    return StructureConstants.from_brackets({
        (0, 1): (0, 0, a),
        (0, 2): (0, b, 0),
        (1, 2): (-2, 0, 0),
    })


@dataclass(frozen=True)
class ModelSpec:
    name: str
    parameters: dict = field(default_factory=dict)
    normalized_volume: float = 1.0

    def family_parameters(self):
        n, p = self.name, self.parameters
        if n == "sl2":
            lam = _exact(p.get("lambda", 1))
            if lam <= 0:
                raise ValueError("sl2 needs lambda > 0")
            return lam, lam
        if n == "nil":
            return Fraction(0), Fraction(0)
        if n == "su2":
            return Fraction(-2), Fraction(2)
        if n == "family":
            return _exact(p.get("a", 0)), _exact(p.get("b", 0))
        raise ValueError(f"unknown homogeneous model {n!r}; expected one of {PRESETS}")


class HomogeneousBackend(GeometryBackend):
    """Constant frame on a Lie group; one site, zero directional derivatives."""

    site_shape = SITE_SHAPE

    def __init__(self, constants: StructureConstants, normalized_volume: float = 1.0):
        constants.validate()
        if normalized_volume <= 0:
            raise ValueError("normalized_volume must be positive")
        self.constants = constants
        self.cell_volume = float(normalized_volume)
        self.volume_density = 1.0
        self._c = np.broadcast_to(constants.as_array(), SITE_SHAPE + (3, 3, 3))

    def brackets(self):
        return self._c

    def frame_derivatives(self, f):
        f = np.asarray(f, dtype=float)
        return np.zeros(SITE_SHAPE + (3,) + f.shape[3:])

    def derive_adjoint(self, y, v):
        return np.zeros_like(np.asarray(y, dtype=float))


def integrate_homogeneous(f, normalized_volume: float = 1.0) -> float:
    """Integral of a left-invariant (constant) density."""
    f = np.asarray(f, dtype=float)
    if f.size != 1 and np.ptp(f) != 0:
        raise ValueError("homogeneous integrand must be constant")
    return float(f.ravel()[0]) * normalized_volume


def build_model(spec: ModelSpec) -> Model:
    """Backend, contact form alpha = R^*, and the adapted coframe.

    The adapted coframe is (alpha, eta_u, eta_s) with eta_u = (eta1 - eta2)/sqrt2
    and eta_s = (eta1 + eta2)/sqrt2, the duals of e_u, e_s; d alpha = 2 eta_u ^ eta_s.
    """
    a, b = spec.family_parameters()
    constants = family_constants(a, b)
    backend = HomogeneousBackend(constants, spec.normalized_volume)
    alpha = np.broadcast_to(np.array([1.0, 0.0, 0.0]), SITE_SHAPE + (3,)).copy()
    contact = ContactStructure.from_alpha(alpha, backend)
    d = contact.d_alpha[0, 0, 0]
    if abs(d[1, 2] - 2.0) > 1e-12 or abs(d[0, 1]) > 1e-12 or abs(d[0, 2]) > 1e-12:
        raise ValueError("model coframe violates d alpha = 2 eta1 ^ eta2")
    s = 1.0 / math.sqrt(2.0)
    coframe = np.broadcast_to(np.array([[1.0, 0.0, 0.0],
                                        [0.0, s, -s],
                                        [0.0, s, s]]), SITE_SHAPE + (3, 3)).copy()
    model = Model(spec.name, backend, contact, coframe, metric=np.zeros(SITE_SHAPE + (3, 3)))
    model.metric = metric_from_params(model.params())
    model.info = {
        "kind": "homogeneous",
        "a": float(a),
        "b": float(b),
        "normalized_volume": spec.normalized_volume,
        "brackets": {"[R,e1]": f"{float(a):g} e2", "[R,e2]": f"{float(b):g} e1",
                     "[e1,e2]": "-2 R"},
    }
    return model


def model_coframe(model: Model):
    """The dual coframe (alpha, eta1, eta2) of the model frame (R, e1, e2)."""
    eye = np.eye(3)
    return tuple(np.broadcast_to(eye[i], SITE_SHAPE + (3,)).copy() for i in range(3))


def structure_equations(model: Model) -> dict:
    """d alpha, d eta1, d eta2 of the model coframe."""
    alpha, eta1, eta2 = model_coframe(model)
    return {name: exterior_derivative(f, model.backend)[0, 0, 0]
            for name, f in (("alpha", alpha), ("eta1", eta1), ("eta2", eta2))}


def koszul_connection(g, constants: StructureConstants) -> np.ndarray:
    """Gamma[k, i, j] (k-th component of nabla_{X_i} X_j) for a constant metric,
    from 2 g(nabla_X Y, Z) = g([X,Y],Z) - g([Y,Z],X) + g([Z,X],Y)."""
    g = np.asarray(g, dtype=float).reshape(3, 3)
    try:
        gi = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular metric") from exc
    c = constants.as_array()
    low = np.zeros((3, 3, 3))
    for i in range(3):
        for j in range(3):
            for l in range(3):
                low[i, j, l] = 0.5 * (c[:, i, j] @ g[:, l] - c[:, j, l] @ g[:, i]
                                      + c[:, l, i] @ g[:, j])
    return np.einsum("kl,ijl->kij", gi, low)
