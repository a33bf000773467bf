"""Tensor algebra for contact 3-manifolds on a frame-based geometry backend.

Every field lives on a backend's sites and is expressed in the backend frame
``X_0, X_1, X_2``:

* scalar fields have shape ``site_shape``;
* vector fields and one-forms have shape ``site_shape + (3,)``;
* bilinear forms (metrics, two-forms, torsion) have ``B[..., i, j] = B(X_i, X_j)``;
* endomorphisms have ``E[..., k, j]`` = k-th component of ``E(X_j)``;
* structure functions have ``c[..., k, i, j]`` = k-th component of ``[X_i, X_j]``.

The same formulas therefore serve left-invariant frames on Lie groups (constant
structure constants, trivial derivatives) and the coordinate frame of the flat
torus (vanishing brackets, stencil derivatives).
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ALGEBRAIC_TOL = 1e-10


class GeometryBackend(abc.ABC):
    """Sites, a global frame and the calculus on it.

    Subclasses provide ``site_shape``, ``brackets``, ``frame_derivatives`` and
    the measure used by ``integrate``.
    """

    site_shape: tuple
    cell_volume: float
    volume_density: float = 1.0

    @abc.abstractmethod
    def brackets(self) -> np.ndarray:
        """Structure functions ``c[..., k, i, j]`` of the frame."""

    @abc.abstractmethod
    def frame_derivatives(self, f: np.ndarray) -> np.ndarray:
        """``X_i(f)`` for every frame vector; output inserts an axis of length 3
        right after the site axes."""

    @abc.abstractmethod
    def derive_adjoint(self, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Adjoint of ``f -> derive(f, v)`` for the plain Euclidean pairing of
        site arrays."""

    @property
    def tolerance(self) -> float:
        return ALGEBRAIC_TOL

    @property
    def nsites(self) -> int:
        return int(np.prod(self.site_shape))

    def derive(self, f: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Directional derivative ``v(f)``; ``f`` may carry trailing tensor axes."""
        df = self.frame_derivatives(f)
        nd = len(self.site_shape)
        tail = df.ndim - nd - 1
        vv = v.reshape(v.shape + (1,) * tail)
        return np.sum(vv * df, axis=nd)

    def integrate(self, f: np.ndarray) -> float:
        """Integral of a scalar field against the reference volume.

        Summation is compensated (``math.fsum``) so it does not depend on
        how sites are traversed.
        """
        f = np.broadcast_to(np.asarray(f, dtype=float), self.site_shape)
        return math.fsum(f.ravel()) * self.volume_density * self.cell_volume

    def reference_volume(self) -> float:
        return self.integrate(np.ones(self.site_shape))

    def check_field(self, a: np.ndarray, tail: tuple, what: str = "field") -> np.ndarray:
        a = np.asarray(a, dtype=float)
        want = tuple(self.site_shape) + tuple(tail)
        if a.shape != want:
            raise ValueError(f"{what} has shape {a.shape}, backend expects {want}")
        return a

    def jacobi_defect(self) -> float:
        """Sup of the Jacobi identity defect of the frame brackets."""
        c = self.brackets()
        dc = self.frame_derivatives(c)  # [..., a, k, i, j] = X_a(c^k_ij)
        # [[X_i, X_j], X_l] = c^k_ij c^m_kl X_m - X_l(c^m_ij) X_m
        cc = np.einsum("...kij,...mkl->...mijl", c, c) - np.einsum("...lmij->...mijl", dc)
        jac = cc + np.einsum("...mjli->...mijl", cc) + np.einsum("...mlij->...mijl", cc)
        return float(np.max(np.abs(jac)))


# -- small per-site helpers ---------------------------------------------------

def _inv(G: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(G)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular metric") from exc


def _axial(w: np.ndarray) -> np.ndarray:
    """(w_12, w_20, w_01) of an antisymmetric matrix field."""
    return np.stack([w[..., 1, 2], w[..., 2, 0], w[..., 0, 1]], axis=-1)


def wedge_one_two(beta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """``(beta ^ omega)(X_0, X_1, X_2)`` for a one-form and a two-form."""
    return np.sum(beta * _axial(omega), axis=-1)


def wedge_three(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``(a ^ b ^ c)(X_0, X_1, X_2)`` for three one-forms."""
    return np.linalg.det(np.stack([a, b, c], axis=-2))


def bilinear_norm_sq(B: np.ndarray, Gi: np.ndarray) -> np.ndarray:
    """|B|^2_g = tr(B G^-1 B^T G^-1)."""
    BG = B @ Gi
    return np.einsum("...ij,...ji->...", BG, np.swapaxes(B, -1, -2) @ Gi)


def endo_norm_sq(E: np.ndarray, G: np.ndarray, Gi: np.ndarray) -> np.ndarray:
    """|E|^2_g = tr(E^T G E G^-1)."""
    return np.einsum("...ij,...ji->...", np.swapaxes(E, -1, -2) @ G @ E, Gi)


def one_form_norm(beta: np.ndarray, Gi: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(np.einsum("...i,...ij,...j->...", beta, Gi, beta)))


def vector_norm(v: np.ndarray, G: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(np.einsum("...i,...ij,...j->...", v, G, v)))


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


def _site_index(backend: GeometryBackend, flat: int) -> tuple:
    return tuple(int(i) for i in np.unravel_index(flat, backend.site_shape))


# -- contact data -------------------------------------------------------------

def exterior_derivative(eta: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    """d(eta)(X_i, X_j) = X_i eta_j - X_j eta_i - eta([X_i, X_j])."""
    eta = backend.check_field(eta, (3,), "one-form")
    dX = backend.frame_derivatives(eta)
    c = backend.brackets()
    return dX - np.swapaxes(dX, -1, -2) - np.einsum("...k,...kij->...ij", eta, c)


def reeb_field(alpha: np.ndarray, d_alpha: np.ndarray, backend: GeometryBackend,
               tol: float = 1e-12) -> np.ndarray:
    """Solve ``alpha(R) = 1``, ``i_R d(alpha) = 0`` site by site.

    The kernel of a nondegenerate-rank-2 antisymmetric 3x3 matrix is spanned by
    its axial vector, so the solve is closed form.
    """
    alpha = backend.check_field(alpha, (3,), "alpha")
    w = _axial(d_alpha)
    vol = np.sum(alpha * w, axis=-1)  # (alpha ^ d alpha)(X_0, X_1, X_2)
    scale = np.max(np.abs(alpha), axis=-1) * np.max(np.abs(w), axis=-1)
    bad = np.abs(vol) <= tol * np.maximum(scale, 1.0)
    if np.any(bad):
        site = _site_index(backend, int(np.flatnonzero(bad.ravel())[0]))
        raise ValueError(f"degenerate d(alpha): no Reeb field at site {site}")
    return w / vol[..., None]


@dataclass
class ContactStructure:
    """A contact form with its exterior derivative and Reeb field cached."""

    alpha: np.ndarray
    d_alpha: np.ndarray
    reeb: np.ndarray
    theta: float = 2.0

    @classmethod
    def from_alpha(cls, alpha, backend: GeometryBackend, theta: float = 2.0,
                   d_alpha=None) -> "ContactStructure":
        alpha = backend.check_field(alpha, (3,), "alpha")
        if d_alpha is None:
            d_alpha = exterior_derivative(alpha, backend)
        d_alpha = backend.check_field(d_alpha, (3, 3), "d_alpha")
        reeb = reeb_field(alpha, d_alpha, backend)
        out = cls(alpha, d_alpha, reeb, float(theta))
        s = np.sign(out.contact_volume)
        if not (np.all(s > 0) or np.all(s < 0)):
            raise ValueError("alpha ^ d(alpha) changes sign: not a contact form")
        return out

    @property
    def contact_volume(self) -> np.ndarray:
        """(alpha ^ d alpha)(X_0, X_1, X_2)."""
        return wedge_one_two(self.alpha, self.d_alpha)

    @property
    def orientation(self) -> float:
        """+1 when the frame is positive for the contact orientation."""
        return float(np.sign(self.contact_volume.ravel()[0]))

    @property
    def omega(self) -> np.ndarray:
        """Omega = alpha ^ d alpha / 2 on the frame, taken positive."""
        return 0.5 * np.abs(self.contact_volume)


@dataclass
class CompatibleMetricParams:
    """Adapted coframe rows (alpha, e^1, e^2) with d alpha = 2 e^1 ^ e^2, and
    fields p, q, r with pq - r^2 = 1."""

    coframe: np.ndarray
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray


def metric_from_params(params: CompatibleMetricParams, tol: float = 1e-12) -> np.ndarray:
    """g = alpha^2 + p e1^2 + r (e1 e2 + e2 e1) + q e2^2."""
    p, q, r = (np.asarray(x, dtype=float) for x in (params.p, params.q, params.r))
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("p and q must be positive")
    det = p * q - r * r
    if np.max(np.abs(det - 1.0)) > tol:
        raise ValueError(f"pq - r^2 = 1 violated by {np.max(np.abs(det - 1.0)):.3e}")
    cf = np.asarray(params.coframe, dtype=float)
    a, e1, e2 = cf[..., 0, :], cf[..., 1, :], cf[..., 2, :]

    def outer(x, y):
        return x[..., :, None] * y[..., None, :]

    p, q, r = (np.broadcast_to(x, a.shape[:-1])[..., None, None] for x in (p, q, r))
    return outer(a, a) + p * outer(e1, e1) + r * (outer(e1, e2) + outer(e2, e1)) + q * outer(e2, e2)


def volume_density(g: np.ndarray, contact: ContactStructure) -> np.ndarray:
    """vol_g(X_0, X_1, X_2) with the contact orientation."""
    return contact.orientation * np.sqrt(np.linalg.det(g))


def hodge_star_two_form(omega: np.ndarray, g: np.ndarray, contact: ContactStructure) -> np.ndarray:
    Gi = _inv(g)
    W = Gi @ omega @ Gi
    return volume_density(g, contact)[..., None] * _axial(W)


def check_compatible(g: np.ndarray, contact: ContactStructure,
                     theta: Optional[float] = None) -> dict:
    """Sup defects of |alpha|_g = 1, *d alpha = theta alpha, vol_g = alpha^d alpha / theta."""
    theta = contact.theta if theta is None else float(theta)
    Gi = _inv(g)
    star = hodge_star_two_form(contact.d_alpha, g, contact)
    return {
        "alpha_norm": _sup(one_form_norm(contact.alpha, Gi) - 1.0),
        "hodge": _sup(one_form_norm(star - theta * contact.alpha, Gi)),
        "volume": _sup(volume_density(g, contact) - contact.contact_volume / theta),
    }


def rescale_theta(g: np.ndarray, alpha: np.ndarray, theta: float, theta_new: float) -> np.ndarray:
    """g' = (theta / theta') g^zeta + alpha (x) alpha."""
    if theta_new <= 0:
        raise ValueError("theta_new must be positive")
    aa = alpha[..., :, None] * alpha[..., None, :]
    return (theta / theta_new) * (g - aa) + aa


def phi_from_metric(g: np.ndarray, contact: ContactStructure) -> np.ndarray:
    """The endomorphism with d alpha(X, Y) / theta = g(X, phi Y), i.e. G^-1 D / theta.

    For theta = 2 this is the classical G^-1 D / 2; dividing by theta keeps
    phi^2 = -I + alpha (x) R after a theta-rescaling of the metric.
    """
    return _inv(g) @ contact.d_alpha / contact.theta


def phi_identities(phi: np.ndarray, g: np.ndarray, contact: ContactStructure) -> dict:
    """Defects of phi^2 = -I + alpha (x) R, phi R = 0, g(phi., phi.) = g - alpha^2."""
    a, R = contact.alpha, contact.reeb
    eye = np.broadcast_to(np.eye(3), phi.shape)
    aR = R[..., :, None] * a[..., None, :]
    aa = a[..., :, None] * a[..., None, :]
    return {
        "phi_square": _sup(phi @ phi + eye - aR),
        "phi_reeb": _sup(np.einsum("...kj,...j->...k", phi, R)),
        "phi_isometry": _sup(np.swapaxes(phi, -1, -2) @ g @ phi - (g - aa)),
    }


def bracket_matrix(v: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    """A[..., k, j] = k-th component of [v, X_j]."""
    c = backend.brackets()
    dv = backend.frame_derivatives(v)  # [..., j, k] = X_j(v^k)
    return np.einsum("...i,...kij->...kj", v, c) - np.swapaxes(dv, -1, -2)


def vector_bracket(v: np.ndarray, w: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    c = backend.brackets()
    return (np.einsum("...i,...j,...kij->...k", v, w, c)
            + backend.derive(w, v) - backend.derive(v, w))


def lie_derivative_one_form(eta: np.ndarray, v: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    A = bracket_matrix(v, backend)
    return backend.derive(eta, v) - np.einsum("...kj,...k->...j", A, eta)


def torsion(g: np.ndarray, reeb: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    """tau = L_R g as a bilinear form in the frame."""
    A = bracket_matrix(reeb, backend)
    At = np.swapaxes(A, -1, -2)
    return backend.derive(g, reeb) - At @ g - g @ A


def h_tensor(phi: np.ndarray, reeb: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    """h = L_R phi / 2."""
    A = bracket_matrix(reeb, backend)
    return 0.5 * (backend.derive(phi, reeb) + A @ phi - phi @ A)


def h_identities(h: np.ndarray, phi: np.ndarray, g: np.ndarray, contact: ContactStructure,
                 tau: Optional[np.ndarray] = None) -> dict:
    """Defects of h phi + phi h = 0, hR = 0, g-symmetry, tr h = 0 and, when
    ``tau`` is given, tau = 2 g(h phi ., .)."""
    gh = g @ h
    out = {
        "anticommute": _sup(h @ phi + phi @ h),
        "h_reeb": _sup(np.einsum("...kj,...j->...k", h, contact.reeb)),
        "symmetric": _sup(gh - np.swapaxes(gh, -1, -2)),
        "trace": _sup(np.trace(h, axis1=-2, axis2=-1)),
    }
    if tau is not None:
        out["torsion_identity"] = _sup(tau - 2.0 * np.swapaxes(h @ phi, -1, -2) @ g)
    return out


def lambda_sq(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    """lambda^2 = |h|^2_g / 2."""
    return 0.5 * endo_norm_sq(h, g, _inv(g))


def torsion_norm_sq(tau: np.ndarray, g: np.ndarray) -> np.ndarray:
    return bilinear_norm_sq(tau, _inv(g))


def energy(g: np.ndarray, contact: ContactStructure, backend: GeometryBackend) -> float:
    """Chern-Hamilton energy: integral of |L_R g|^2_g against vol_g."""
    tau = torsion(g, contact.reeb, backend)
    dens = torsion_norm_sq(tau, g) * np.sqrt(np.linalg.det(g)) / backend.volume_density
    return backend.integrate(dens)


def levi_civita(g: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    """Connection coefficients ``Gamma[..., k, i, j]`` = k-th component of
    nabla_{X_i} X_j, from the Koszul formula in a non-holonomic frame."""
    Gi = _inv(g)
    c = backend.brackets()
    dG = backend.frame_derivatives(g)  # [..., a, j, l] = X_a g_jl
    cg = np.einsum("...kij,...kl->...ijl", c, g)  # g([X_i, X_j], X_l)
    low = 0.5 * (dG + np.swapaxes(dG, -3, -2) - np.moveaxis(dG, -3, -1)
                 + cg - np.swapaxes(cg, -2, -1) - np.moveaxis(cg, -1, -3))
    return np.einsum("...kl,...ijl->...kij", Gi, low)


def connection_defects(Gamma: np.ndarray, g: np.ndarray, backend: GeometryBackend) -> dict:
    """Torsion-freeness and metric compatibility of a connection."""
    c = backend.brackets()
    tf = Gamma - np.swapaxes(Gamma, -1, -2) - c
    dG = backend.frame_derivatives(g)
    low = np.einsum("...kij,...kl->...ijl", Gamma, g)  # g(nabla_i X_j, X_l)
    mc = dG - low - np.swapaxes(low, -1, -2)
    return {"torsion_free": _sup(tf), "metric": _sup(mc)}


def covariant_derivative(v: np.ndarray, Gamma: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    """N[..., k, i] = k-th component of nabla_{X_i} v."""
    dv = backend.frame_derivatives(v)  # [..., i, k]
    return np.swapaxes(dv, -1, -2) + np.einsum("...kij,...j->...ki", Gamma, v)


def covariant_reeb_check(g: np.ndarray, contact: ContactStructure,
                         backend: GeometryBackend) -> float:
    """sup over frame X of |nabla_X R + (theta/2) phi X + phi h X|_g."""
    phi = phi_from_metric(g, contact)
    h = h_tensor(phi, contact.reeb, backend)
    N = covariant_derivative(contact.reeb, levi_civita(g, backend), backend)
    D = N + 0.5 * contact.theta * phi + phi @ h
    return float(np.max(np.sqrt(np.abs(np.einsum("...ki,...kl,...li->...i", D, g, D)))))


def nabla_reeb_h(g: np.ndarray, contact: ContactStructure, backend: GeometryBackend,
                 h: Optional[np.ndarray] = None) -> np.ndarray:
    """(nabla_R h) as an endomorphism field."""
    if h is None:
        h = h_tensor(phi_from_metric(g, contact), contact.reeb, backend)
    Gamma = levi_civita(g, backend)
    GR = np.einsum("...kil,...i->...kl", Gamma, contact.reeb)
    return backend.derive(h, contact.reeb) + GR @ h - h @ GR


def tanno_residual(g: np.ndarray, contact: ContactStructure,
                   backend: GeometryBackend) -> tuple[np.ndarray, float]:
    """Pointwise |nabla_R h - theta h phi|_g and its L^2 norm over vol_g
    (theta = 2 gives the classical nabla_R h = 2 h phi)."""
    phi = phi_from_metric(g, contact)
    h = h_tensor(phi, contact.reeb, backend)
    res = nabla_reeb_h(g, contact, backend, h) - contact.theta * h @ phi
    n2 = endo_norm_sq(res, g, _inv(g))
    vol = np.sqrt(np.linalg.det(g)) / backend.volume_density
    return np.sqrt(np.abs(n2)), math.sqrt(max(backend.integrate(n2 * vol), 0.0))


def reeb_derivative(f: np.ndarray, contact: ContactStructure, backend: GeometryBackend) -> np.ndarray:
    return backend.derive(np.broadcast_to(np.asarray(f, dtype=float), backend.site_shape),
                          contact.reeb)


def bicontact_from_h(g: np.ndarray, contact: ContactStructure, backend: GeometryBackend,
                     tol: float = ALGEBRAIC_TOL):
    """g-dual forms of the unit h-eigenvectors e_1 (eigenvalue -lambda) and
    e_2 = -phi e_1.

    Returns ``(eta1, eta2, lam)``.  e_1 is oriented so that g(e_1, ref) >= 0,
    ref being X_0 projected to ker(alpha), or X_1 when that is too short or
    nearly orthogonal to e_1.
    """
    phi = phi_from_metric(g, contact)
    h = h_tensor(phi, contact.reeb, backend)
    lsq = lambda_sq(h, g)
    if np.min(lsq) <= tol:
        site = _site_index(backend, int(np.argmin(lsq)))
        raise ValueError(f"degenerate torsion; bi-contact extraction undefined (site {site})")
    L = np.linalg.cholesky(g)
    Li = np.linalg.inv(L)
    hs = np.swapaxes(L, -1, -2) @ h @ np.swapaxes(Li, -1, -2)
    hs = 0.5 * (hs + np.swapaxes(hs, -1, -2))
    _, vecs = np.linalg.eigh(hs)
    e1 = np.einsum("...ji,...j->...i", Li, vecs[..., :, 0])  # L^-T v

    a, R = contact.alpha, contact.reeb
    dots = []
    for col in (0, 1):
        ref = -a[..., col:col + 1] * R
        ref[..., col] += 1.0
        dots.append((np.einsum("...i,...ij,...j->...", e1, g, ref), vector_norm(ref, g)))
    (dot0, n0), (dot1, _) = dots
    use_first = (n0 > 1e-6) & (np.abs(dot0) > 1e-6 * n0)
    dot = np.where(use_first, dot0, dot1)
    e1 = e1 * np.where(dot < 0, -1.0, 1.0)[..., None]
    e2 = -np.einsum("...kj,...j->...k", phi, e1)
    eta1 = np.einsum("...ij,...j->...i", g, e1)
    eta2 = np.einsum("...ij,...j->...i", g, e2)
    return eta1, eta2, np.sqrt(lsq)


def calibration_check(contact: ContactStructure, eta1: np.ndarray, eta2: np.ndarray,
                      backend: GeometryBackend, tol: Optional[float] = None) -> dict:
    """Best-fit kappa and sup defects of the calibrated bi-contact relations."""
    tol = backend.tolerance if tol is None else tol
    om = contact.orientation * contact.omega  # Omega(X_0, X_1, X_2) with frame sign
    d1 = exterior_derivative(eta1, backend)
    d2 = exterior_derivative(eta2, backend)
    w11 = wedge_one_two(eta1, d1)
    w22 = wedge_one_two(eta2, d2)
    kappa = float(np.mean(w11 / om))
    R = contact.reeb
    L1 = lie_derivative_one_form(eta1, R, backend)
    L2 = lie_derivative_one_form(eta2, R, backend)
    defects = {
        "eta1_deta1": _sup(w11 - kappa * om),
        "eta2_deta2": _sup(w22 + kappa * om),
        "eta1_deta2": _sup(wedge_one_two(eta1, d2)),
        "eta2_deta1": _sup(wedge_one_two(eta2, d1)),
        "volume": _sup(wedge_three(contact.alpha, eta1, eta2) - om),
        "reeb_kernel": max(_sup(np.sum(eta1 * R, -1)), _sup(np.sum(eta2 * R, -1))),
        "lie_eta1": _sup(L1 + kappa * eta2),
        "lie_eta2": _sup(L2 + kappa * eta1),
    }
    sign_ok = kappa > 0
    return {
        "kappa": kappa,
        "defects": defects,
        "sign_consistent": bool(sign_ok),
        "calibrated": bool(sign_ok and max(defects.values()) <= tol),
    }


def anosov_frame_check(contact: ContactStructure, eta1: np.ndarray, eta2: np.ndarray,
                       g: np.ndarray, backend: GeometryBackend,
                       lam: Optional[float] = None) -> dict:
    """Defects of [R, e_s] = lam e_s, [R, e_u] = -lam e_u, [e_s, e_u] = 2R.

    ``lam`` defaults to the mean of g([R, e_s], e_s).
    """
    Gi = _inv(g)
    e1 = np.einsum("...ij,...j->...i", Gi, eta1)
    e2 = np.einsum("...ij,...j->...i", Gi, eta2)
    es = (e1 + e2) / math.sqrt(2.0)
    eu = (e1 - e2) / math.sqrt(2.0)
    R = contact.reeb
    b_s = vector_bracket(R, es, backend)
    b_u = vector_bracket(R, eu, backend)
    b_su = vector_bracket(es, eu, backend)
    if lam is None:
        lam = float(np.mean(np.einsum("...i,...ij,...j->...", b_s, g, es)))
    return {
        "lambda": lam,
        "stable": float(np.max(vector_norm(b_s - lam * es, g))),
        "unstable": float(np.max(vector_norm(b_u + lam * eu, g))),
        "reeb": float(np.max(vector_norm(b_su - 2.0 * R, g))),
    }


def riemann(g: np.ndarray, backend: GeometryBackend) -> np.ndarray:
    """Riem[..., m, l, i, j] = m-th component of R(X_i, X_j) X_l."""
    Gam = levi_civita(g, backend)
    c = backend.brackets()
    dGam = backend.frame_derivatives(Gam)  # [..., a, m, i, j]
    return (np.einsum("...imjl->...mlij", dGam)
            - np.einsum("...jmil->...mlij", dGam)
            + np.einsum("...pjl,...mip->...mlij", Gam, Gam)
            - np.einsum("...pil,...mjp->...mlij", Gam, Gam)
            - np.einsum("...kij,...mkl->...mlij", c, Gam))


def sectional_curvature(g: np.ndarray, X: np.ndarray, Y: np.ndarray,
                        backend: GeometryBackend, riem: Optional[np.ndarray] = None,
                        tol: float = 1e-12) -> np.ndarray:
    """K(X, Y) = g(R(X, Y) Y, X) / (|X|^2 |Y|^2 - g(X, Y)^2)."""
    if riem is None:
        riem = riemann(g, backend)
    X = np.broadcast_to(np.asarray(X, dtype=float), tuple(backend.site_shape) + (3,))
    Y = np.broadcast_to(np.asarray(Y, dtype=float), tuple(backend.site_shape) + (3,))
    num = np.einsum("...n,...nm,...mlij,...i,...j,...l->...", X, g, riem, X, Y, Y)
    xx = np.einsum("...i,...ij,...j->...", X, g, X)
    yy = np.einsum("...i,...ij,...j->...", Y, g, Y)
    xy = np.einsum("...i,...ij,...j->...", X, g, Y)
    den = xx * yy - xy * xy
    if np.min(den) <= tol * np.max(xx * yy):
        raise ValueError("degenerate plane: X and Y are linearly dependent")
    return num / den


# -- aggregate report ---------------------------------------------------------

@dataclass
class Model:
    """A backend with a contact structure, an adapted coframe and a reference
    compatible metric."""

    name: str
    backend: GeometryBackend
    contact: ContactStructure
    coframe: np.ndarray
    metric: np.ndarray
    info: dict = field(default_factory=dict)

    def params(self, p=1.0, q=1.0, r=0.0) -> CompatibleMetricParams:
        return CompatibleMetricParams(self.coframe, p, q, r)


@dataclass
class EnergyReport:
    energy: float
    lambda_sq_min: float
    lambda_sq_max: float
    lambda_sq_mean: float
    tanno_residual_l2: float
    compatible: dict
    theta: float = 2.0
    critical: bool = False
    tolerance: float = ALGEBRAIC_TOL
    torsion_sup: float = 0.0
    reeb_lambda_sq_sup: float = 0.0
    invariants: dict = field(default_factory=dict)
    calibration: Optional[dict] = None
    anosov: Optional[dict] = None
    curvature: Optional[dict] = None

    @property
    def failures(self) -> list:
        bad = [k for k, v in self.compatible.items() if v > self.tolerance]
        bad += [k for k, v in self.invariants.items() if v > self.tolerance]
        if self.energy < 0 or self.lambda_sq_min < -self.tolerance:
            bad.append("nonnegativity")
        return bad

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "lambda_sq": {"min": self.lambda_sq_min, "max": self.lambda_sq_max,
                          "mean": self.lambda_sq_mean},
            "tanno_residual_l2": self.tanno_residual_l2,
            "critical": self.critical,
            "theta": self.theta,
            "tolerance": self.tolerance,
            "torsion_sup": self.torsion_sup,
            "reeb_lambda_sq_sup": self.reeb_lambda_sq_sup,
            "compatible": self.compatible,
            "invariants": self.invariants,
            "calibration": self.calibration,
            "anosov": self.anosov,
            "curvature": self.curvature,
            "ok": not self.failures,
            "failures": self.failures,
        }


def energy_report(g: np.ndarray, contact: ContactStructure, backend: GeometryBackend,
                  tol: Optional[float] = None, curvature: bool = True) -> EnergyReport:
    """Run every check on ``(g, contact)`` and collect the results."""
    tol = backend.tolerance if tol is None else tol
    phi = phi_from_metric(g, contact)
    h = h_tensor(phi, contact.reeb, backend)
    tau = torsion(g, contact.reeb, backend)
    tn = torsion_norm_sq(tau, g)
    lsq = lambda_sq(h, g)
    _, res_l2 = tanno_residual(g, contact, backend)
    Gamma = levi_civita(g, backend)

    inv = {}
    inv.update(phi_identities(phi, g, contact))
    inv.update(h_identities(h, phi, g, contact, tau))
    inv["lambda_torsion"] = _sup(8.0 * lsq - tn)
    inv.update({"connection_" + k: v for k, v in connection_defects(Gamma, g, backend).items()})
    inv["covariant_reeb"] = covariant_reeb_check(g, contact, backend)

    vol = backend.integrate(np.sqrt(np.linalg.det(g)) / backend.volume_density)
    critical = res_l2 <= tol * max(1.0, math.sqrt(vol))
    report = EnergyReport(
        energy=energy(g, contact, backend),
        lambda_sq_min=float(np.min(lsq)),
        lambda_sq_max=float(np.max(lsq)),
        lambda_sq_mean=float(np.mean(lsq)),
        tanno_residual_l2=res_l2,
        compatible=check_compatible(g, contact),
        theta=contact.theta,
        critical=bool(critical),
        tolerance=tol,
        torsion_sup=float(np.max(np.sqrt(np.abs(tn)))),
        reeb_lambda_sq_sup=_sup(reeb_derivative(lsq, contact, backend)),
        invariants=inv,
    )

    if float(np.min(lsq)) > tol:
        eta1, eta2, lam = bicontact_from_h(g, contact, backend, tol)
        report.calibration = calibration_check(contact, eta1, eta2, backend, tol)
        report.anosov = anosov_frame_check(contact, eta1, eta2, g, backend)
    if curvature:
        riem = riemann(g, backend)
        eye = np.eye(3)
        curv = {}
        for i, j in ((0, 1), (0, 2), (1, 2)):
            K = sectional_curvature(g, eye[i], eye[j], backend, riem)
            curv[f"X{i}X{j}"] = float(np.mean(K))
        if report.calibration is not None:
            Gi = _inv(g)
            e1 = np.einsum("...ij,...j->...i", Gi, eta1)
            e2 = np.einsum("...ij,...j->...i", Gi, eta2)
            R = contact.reeb
            curv["reeb_stable"] = float(np.mean(
                sectional_curvature(g, R, (e1 + e2) / math.sqrt(2), backend, riem)))
            curv["reeb_unstable"] = float(np.mean(
                sectional_curvature(g, R, (e1 - e2) / math.sqrt(2), backend, riem)))
        report.curvature = curv
    return report
