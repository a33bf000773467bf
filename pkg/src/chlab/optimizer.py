"""Gradient descent for the Chern-Hamilton energy over compatible metrics.

Metrics are parametrized by fields (u, r) with p = exp(u), q = (1 + r^2) exp(-u),
so pq - r^2 = 1 holds by construction and the search space is linear.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .contact_core import (
    CompatibleMetricParams,
    Model,
    bracket_matrix,
    metric_from_params,
    tanno_residual,
)

log = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "energy", "grad_norm", "residual", "step")
U_LIMIT = 30.0
# with pq - r^2 = 1 the contact-plane block has condition number ~ (p + q)^2
COND_LIMIT = 1e6


class StepRejected(ValueError):
    """Raised when a parameter update would overflow exp(u) or make the metric
    numerically singular."""


@dataclass
class OptConfig:
    max_iter: int = 200
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    trace_every: int = 1
    max_shrinks: int = 60

    def __post_init__(self):
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if (self.initial_step <= 0 or self.trace_every < 1 or self.max_iter < 0
                or self.max_shrinks < 1):
            raise ValueError("invalid optimizer configuration")


@dataclass
class OptState:
    u: np.ndarray
    r: np.ndarray
    energy: float
    grad_norm: float
    iter: int = 0
    step: float = 0.0

    @property
    def p(self):
        return np.exp(self.u)

    @property
    def q(self):
        return (1.0 + self.r ** 2) * np.exp(-self.u)


@dataclass
class OptResult:
    state: OptState
    trace: list = field(default_factory=list)
    status: str = "max_iter"  # "converged", "max_iter" or "stalled"
    constraint_drift: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def params_from_ur(u, r, model: Model) -> CompatibleMetricParams:
    u = np.asarray(u, dtype=float)
    r = np.asarray(r, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(r))):
        raise StepRejected("non-finite parameters")
    if np.max(np.abs(u)) > U_LIMIT:
        raise StepRejected(f"|u| exceeds {U_LIMIT}")
    p, q = np.exp(u), (1.0 + r * r) * np.exp(-u)
    if np.max(p + q) > COND_LIMIT:
        raise StepRejected(f"p + q exceeds {COND_LIMIT:g}; metric too ill-conditioned")
    return CompatibleMetricParams(model.coframe, p, q, r)


def _metric(u, r, model):
    # pq - r^2 = 1 holds to rounding; the relative check absorbs large r
    params = params_from_ur(u, r, model)
    scale = np.max(np.abs(params.p * params.q))
    return params, metric_from_params(params, tol=1e-12 * max(1.0, scale))


def _torsion_parts(G, model):
    backend, R = model.backend, model.contact.reeb
    A = bracket_matrix(R, backend)
    T = backend.derive(G, R) - np.swapaxes(A, -1, -2) @ G - G @ A
    return A, T


def objective(u, r, model: Model) -> float:
    """Energy of the compatible metric encoded by (u, r)."""
    return objective_and_gradient(u, r, model, want_gradient=False)[0]


def gradient(u, r, model: Model):
    """(dE/du, dE/dr) of the discrete objective."""
    _, du, dr = objective_and_gradient(u, r, model)
    return du, dr


def objective_and_gradient(u, r, model: Model, want_gradient: bool = True):
    """Energy and its exact discrete gradient by reverse-mode chain rule.

    The torsion is T = R(G) - A^T G - G A with A the bracket matrix of the Reeb
    field; the R(G) term is pulled back with the transposed stencil.
    """
    backend = model.backend
    params, G = _metric(u, r, model)
    A, T = _torsion_parts(G, model)
    shape = backend.site_shape
    dens, dT, dG = _kernels.torsion_energy_terms(G.reshape(-1, 3, 3), T.reshape(-1, 3, 3))
    vol = np.sqrt(np.linalg.det(G)).reshape(-1)
    cell = backend.cell_volume
    E = math.fsum(dens * vol) * cell
    if not want_gradient:
        return E, None, None

    w = (cell * vol)[:, None, None]
    Tbar = (w * dT).reshape(G.shape)
    Gbar = (w * dG).reshape(G.shape)
    Gbar += (cell * dens * vol)[:, None, None].reshape(shape + (1, 1)) * 0.5 * np.linalg.inv(G)
    Gbar -= A @ Tbar + Tbar @ np.swapaxes(A, -1, -2)
    Gbar += backend.derive_adjoint(Tbar, model.contact.reeb)

    e1, e2 = model.coframe[..., 1, :], model.coframe[..., 2, :]

    def pair(x, y):
        return np.einsum("...i,...ij,...j->...", x, Gbar, y)

    dp, dq = pair(e1, e1), pair(e2, e2)
    dr_direct = pair(e1, e2) + pair(e2, e1)
    p, q, rr = (np.broadcast_to(x, shape) for x in (params.p, params.q, params.r))
    du = dp * p - dq * q
    dr = dr_direct + dq * 2.0 * rr * np.exp(-np.broadcast_to(u, shape))
    return E, du, dr


def smooth_perturbation(shape, seed: int, amplitude: float, modes: int = 2):
    """Band-limited random fields (u, r) of the given amplitude."""
    rng = np.random.default_rng(seed)
    if amplitude == 0.0:
        return np.zeros(shape), np.zeros(shape)
    if shape == (1, 1, 1):
        return tuple(amplitude * rng.uniform(-1, 1, shape) for _ in range(2))
    n = shape[0]
    x = np.arange(n) * 2.0 * math.pi / n
    X = np.meshgrid(x, x, x, indexing="ij")
    out = []
    for _ in range(2):
        f = np.zeros(shape)
        for _ in range(4):
            k = rng.integers(-modes, modes + 1, size=3)
            ph = rng.uniform(0, 2 * math.pi)
            f += rng.normal() * np.cos(k[0] * X[0] + k[1] * X[1] + k[2] * X[2] + ph)
        f *= amplitude / max(np.max(np.abs(f)), 1e-300)
        out.append(f)
    return out[0], out[1]


def _constraint_drift(u, r) -> float:
    p = np.exp(u)
    q = (1.0 + r * r) * np.exp(-u)
    return float(np.max(np.abs(p * q - r * r - 1.0)))


def minimize(model: Model, config: Optional[OptConfig] = None, init=None,
             residual: bool = True) -> OptResult:
    """Steepest descent with Armijo backtracking from ``init = (u, r)``."""
    config = config or OptConfig()
    shape = model.backend.site_shape
    if init is None:
        u, r = np.zeros(shape), np.zeros(shape)
    else:
        u = np.broadcast_to(np.asarray(init[0], dtype=float), shape).copy()
        r = np.broadcast_to(np.asarray(init[1], dtype=float), shape).copy()

    E, gu, gr = objective_and_gradient(u, r, model)
    gn = math.sqrt(float(np.sum(gu * gu) + np.sum(gr * gr)))
    state = OptState(u, r, E, gn, 0, 0.0)
    result = OptResult(state)
    drift = _constraint_drift(u, r)

    def record(st):
        res = float("nan")
        if residual:
            _, G = _metric(st.u, st.r, model)
            res = tanno_residual(G, model.contact, model.backend)[1]
        result.trace.append((st.iter, st.energy, st.grad_norm, res, st.step))

    record(state)
    status = "max_iter"
    for it in range(1, config.max_iter + 1):
        if state.grad_norm <= config.grad_tol:
            status = "converged"
            break
        t = config.initial_step
        accepted = False
        for _ in range(config.max_shrinks):
            un, rn = state.u - t * gu, state.r - t * gr
            try:
                En = objective(un, rn, model)
            except StepRejected:
                t *= config.shrink
                continue
            if En <= state.energy - config.armijo_c * t * state.grad_norm ** 2:
                accepted = True
                break
            t *= config.shrink
        if not accepted:
            status = "stalled"
            log.warning("line search stalled at iteration %d", it)
            break
        E, gu, gr = objective_and_gradient(un, rn, model)
        gn = math.sqrt(float(np.sum(gu * gu) + np.sum(gr * gr)))
        state = OptState(un, rn, E, gn, it, t)
        drift = max(drift, _constraint_drift(un, rn))
        if it % config.trace_every == 0:
            record(state)
    else:
        if state.grad_norm <= config.grad_tol:
            status = "converged"

    if result.trace[-1][0] != state.iter:
        record(state)
    result.state = state
    result.status = status
    result.constraint_drift = drift
    return result


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for it, e, g, res, st in trace:
            w.writerow([it, repr(float(e)), repr(float(g)), repr(float(res)), repr(float(st))])


def read_trace_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"{path}: header must be {','.join(TRACE_HEADER)}")
    return [(int(a), float(b), float(c), float(d), float(e)) for a, b, c, d, e in rows[1:]]
