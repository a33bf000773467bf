# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: periodic stencils and per-site torsion energy terms."""
import numpy as np
cimport cython


cdef inline void _inv3(const double[:, :] a, double* out) noexcept nogil:
    cdef double c00 = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    cdef double c01 = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
    cdef double c02 = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
    cdef double det = a[0, 0] * c00 + a[0, 1] * c01 + a[0, 2] * c02
    cdef double inv = 1.0 / det
    out[0] = c00 * inv
    out[3] = c01 * inv
    out[6] = c02 * inv
    out[1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) * inv
    out[4] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) * inv
    out[7] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) * inv
    out[2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) * inv
    out[5] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) * inv
    out[8] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) * inv


cdef inline void _mm(double* a, double* b, double* out) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc = acc + a[3 * i + k] * b[3 * k + j]
            out[3 * i + j] = acc


def periodic_gradient(f, double spacing, int order):
    """See ``_pykernels.periodic_gradient``."""
    if order != 2 and order != 4:
        raise ValueError(f"unsupported stencil order {order}")
    cdef const double[:, :, :, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef Py_ssize_t n0 = fv.shape[0], n1 = fv.shape[1], n2 = fv.shape[2], nc = fv.shape[3]
    out = np.empty((n0, n1, n2, 3, nc))
    cdef double[:, :, :, :, ::1] ov = out
    cdef Py_ssize_t i, j, k, c
    cdef double w1, w2
    if order == 2:
        w1 = 1.0 / (2.0 * spacing)
        w2 = 0.0
    else:
        w1 = 8.0 / (12.0 * spacing)
        w2 = -1.0 / (12.0 * spacing)
    with nogil:
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    for c in range(nc):
                        ov[i, j, k, 0, c] = (
                            w1 * (fv[(i + 1) % n0, j, k, c] - fv[(i - 1 + n0) % n0, j, k, c])
                            + w2 * (fv[(i + 2) % n0, j, k, c] - fv[(i - 2 + 2 * n0) % n0, j, k, c]))
                        ov[i, j, k, 1, c] = (
                            w1 * (fv[i, (j + 1) % n1, k, c] - fv[i, (j - 1 + n1) % n1, k, c])
                            + w2 * (fv[i, (j + 2) % n1, k, c] - fv[i, (j - 2 + 2 * n1) % n1, k, c]))
                        ov[i, j, k, 2, c] = (
                            w1 * (fv[i, j, (k + 1) % n2, c] - fv[i, j, (k - 1 + n2) % n2, c])
                            + w2 * (fv[i, j, (k + 2) % n2, c] - fv[i, j, (k - 2 + 2 * n2) % n2, c]))
    return out


cdef void _energy_range(const double[:, :, ::1] G, const double[:, :, ::1] T, double[::1] dens,
                        double[:, :, ::1] dT, double[:, :, ::1] dG,
                        Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    cdef double gi[9]
    cdef double t[9]
    cdef double git[9]
    cdef double m[9]
    cdef double mt[9]
    cdef double p[9]
    cdef Py_ssize_t s
    cdef int a, b
    cdef double acc
    for s in range(lo, hi):
        _inv3(G[s], gi)
        for a in range(3):
            for b in range(3):
                t[3 * a + b] = T[s, a, b]
        _mm(gi, t, git)
        _mm(git, gi, m)
        _mm(m, t, mt)
        _mm(mt, gi, p)
        acc = 0.0
        for a in range(3):
            for b in range(3):
                acc = acc + git[3 * a + b] * git[3 * b + a]
        dens[s] = acc
        for a in range(3):
            for b in range(3):
                dT[s, a, b] = 2.0 * m[3 * a + b]
                dG[s, a, b] = -2.0 * p[3 * a + b]


def torsion_energy_terms(G, T, int threads=1):
    """See ``_pykernels.torsion_energy_terms``; sites split over ``threads``."""
    cdef const double[:, :, ::1] gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[:, :, ::1] tv = np.ascontiguousarray(T, dtype=np.float64)
    cdef Py_ssize_t ns = gv.shape[0]
    dens = np.empty(ns)
    dens_T = np.empty((ns, 3, 3))
    dens_G = np.empty((ns, 3, 3))
    cdef double[::1] dv = dens
    cdef double[:, :, ::1] dtv = dens_T
    cdef double[:, :, ::1] dgv = dens_G
    cdef Py_ssize_t lo, hi
    if threads <= 1 or ns < 4096:
        with nogil:
            _energy_range(gv, tv, dv, dtv, dgv, 0, ns)
        return dens, dens_T, dens_G

    from concurrent.futures import ThreadPoolExecutor
    bounds = np.linspace(0, ns, threads + 1).astype(np.intp)

    def work(Py_ssize_t a, Py_ssize_t b):
        with nogil:
            _energy_range(gv, tv, dv, dtv, dgv, a, b)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(work, bounds[:-1], bounds[1:]))
    return dens, dens_T, dens_G
