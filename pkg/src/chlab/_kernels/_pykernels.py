"""Pure numpy implementations of the hot kernels.

These mirror the compiled versions in ``_ckernels.pyx`` one for one and are
used whenever the extension is not built (or ``CHLAB_PURE_PYTHON=1``).
"""
import numpy as np


def periodic_gradient(f, spacing, order):
    """Central differences of ``f`` along the three leading (periodic) axes.

    Parameters
    ----------
    f : ndarray, shape (n, n, n, c)
    spacing : float
    order : {2, 4}

    Returns
    -------
    ndarray, shape (n, n, n, 3, c)
    """
    f = np.ascontiguousarray(f, dtype=float)
    out = np.empty(f.shape[:3] + (3,) + f.shape[3:])
    for axis in range(3):
        p1 = np.roll(f, -1, axis)
        m1 = np.roll(f, 1, axis)
        if order == 2:
            d = (p1 - m1) / (2.0 * spacing)
        elif order == 4:
            p2 = np.roll(f, -2, axis)
            m2 = np.roll(f, 2, axis)
            d = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * spacing)
        else:
            raise ValueError(f"unsupported stencil order {order}")
        out[:, :, :, axis] = d
    return out


def torsion_energy_terms(G, T):
    """Per-site |T|^2_G and its partial derivatives.

    With ``Gi = inv(G)`` the density is ``tr(T Gi T Gi)``; returned are
    the density, ``dens_T = 2 Gi T Gi`` and ``dens_G = -2 Gi T Gi T Gi``
    (derivatives with respect to T and G entries, G, T symmetric).

    Parameters
    ----------
    G, T : ndarray, shape (s, 3, 3)
    """
    Gi = np.linalg.inv(G)
    GiT = Gi @ T
    M = GiT @ Gi
    dens = np.einsum("sij,sji->s", GiT, GiT)
    dens_T = 2.0 * M
    dens_G = -2.0 * M @ T @ Gi
    return dens, dens_T, dens_G
