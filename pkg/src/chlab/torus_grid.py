"""Flat 3-torus [0, 2pi)^3 sampled on a periodic grid, with the contact forms
eta_m = sin(m x3) dx1 + cos(m x3) dx2.

The frame is the coordinate frame (vanishing brackets); directional derivatives
are periodic central differences of order 2 or 4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .contact_core import (
    ContactStructure,
    GeometryBackend,
    Model,
    phi_from_metric,
)


class PeriodicGrid3(GeometryBackend):
    """n^3 sites, spacing 2pi/n, stencil order ``fd_order``."""

    def __init__(self, n: int, fd_order: int = 4, volume_density: float = 1.0):
        if n < 8 or n % 2:
            raise ValueError("grid size must be even and at least 8")
        if fd_order not in (2, 4):
            raise ValueError("fd_order must be 2 or 4")
        self.n = int(n)
        self.fd_order = int(fd_order)
        self.spacing = 2.0 * math.pi / self.n
        self.site_shape = (self.n,) * 3
        self.cell_volume = self.spacing ** 3
        self.volume_density = float(volume_density)
        self._c = np.zeros(self.site_shape + (3, 3, 3))

    @property
    def tolerance(self) -> float:
        return max(1e-10, 10.0 * self.spacing ** self.fd_order)

    def coords(self):
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(x, x, x, indexing="ij")

    def brackets(self):
        return self._c

    def frame_derivatives(self, f):
        f = np.asarray(f, dtype=float)
        tail = f.shape[3:]
        flat = f.reshape(self.site_shape + (-1,))
        d = _kernels.periodic_gradient(flat, self.spacing, self.fd_order)
        return d.reshape(self.site_shape + (3,) + tail)

    def derive_adjoint(self, y, v):
        # central stencils are antisymmetric: D^T = -D
        y = np.asarray(y, dtype=float)
        tail = y.ndim - 3
        out = np.zeros_like(y)
        for a in range(3):
            va = v[..., a].reshape(self.site_shape + (1,) * tail)
            out -= self.frame_derivatives(va * y)[:, :, :, a]
        return out


def fd_derive(f, grid: PeriodicGrid3, axis=None, vector=None):
    """Stencil derivative of ``f`` along a coordinate axis (0, 1, 2) or a
    vector field."""
    if (axis is None) == (vector is None):
        raise ValueError("give exactly one of axis or vector")
    if vector is not None:
        return grid.derive(f, vector)
    return grid.frame_derivatives(f)[:, :, :, axis]


def integrate_grid(f, grid: PeriodicGrid3) -> float:
    """Lattice sum against the grid's reference volume."""
    return grid.integrate(f)


@dataclass(frozen=True)
class TorusContactSpec:
    m: int = 1

    def __post_init__(self):
        if int(self.m) != self.m or self.m == 0:
            raise ValueError("m must be a nonzero integer")


def eta_m(grid: PeriodicGrid3, m: int) -> np.ndarray:
    _, _, x3 = grid.coords()
    return np.stack([np.sin(m * x3), np.cos(m * x3), np.zeros_like(x3)], axis=-1)


def d_alpha_exact(grid: PeriodicGrid3, m: int) -> np.ndarray:
    """Closed form of d((m/2) eta_m) = (m^2/2) dx3 ^ (cos(m x3) dx1 - sin(m x3) dx2)."""
    _, _, x3 = grid.coords()
    k = 0.5 * m * m
    d = np.zeros(grid.site_shape + (3, 3))
    d[..., 2, 0] = k * np.cos(m * x3)
    d[..., 0, 2] = -d[..., 2, 0]
    d[..., 2, 1] = -k * np.sin(m * x3)
    d[..., 1, 2] = -d[..., 2, 1]
    return d


def build_torus_model(spec: TorusContactSpec, n: int = 32, fd_order: int = 4) -> Model:
    """alpha = (m/2) eta_m, flat g0 = (m^2/4) I and the adapted coframe
    e^1 = g0-dual of (2/m) d/dx3, e^2 = g0-dual of -phi0 e_1.

    The contact form is differentiated in closed form; stencils are used for
    every other field.
    """
    m = int(spec.m)
    grid = PeriodicGrid3(n, fd_order, volume_density=abs(m) ** 3 / 8.0)
    alpha = 0.5 * m * eta_m(grid, m)
    contact = ContactStructure.from_alpha(alpha, grid, d_alpha=d_alpha_exact(grid, m))
    g0 = np.broadcast_to(0.25 * m * m * np.eye(3), grid.site_shape + (3, 3)).copy()
    phi0 = phi_from_metric(g0, contact)
    e1 = np.zeros(grid.site_shape + (3,))
    e1[..., 2] = 2.0 / m
    e2 = -np.einsum("...kj,...j->...k", phi0, e1)
    coframe = np.stack([alpha,
                        np.einsum("...ij,...j->...i", g0, e1),
                        np.einsum("...ij,...j->...i", g0, e2)], axis=-2)
    model = Model(f"torus:m={m}", grid, contact, coframe, g0)
    model.info = {
        "kind": "torus",
        "m": m,
        "n": grid.n,
        "fd_order": grid.fd_order,
        "contact_form": f"alpha = ({m}/2) (sin({m} x3) dx1 + cos({m} x3) dx2)",
        "flat_metric": f"g0 = ({m}^2/4)(dx1^2 + dx2^2 + dx3^2)",
        "volume": grid.reference_volume(),
    }
    return model
