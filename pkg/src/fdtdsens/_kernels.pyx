# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled curl updates; same contract as ``_kernels_py``."""

ctypedef double[:, :, ::1] arr3


def update_h_3d(arr3 ex, arr3 ey, arr3 ez, arr3 hx, arr3 hy, arr3 hz,
                arr3 chxy, arr3 chxz, arr3 chyz, arr3 chyx, arr3 chzx, arr3 chzy):
    cdef Py_ssize_t nx = hx.shape[0], ny = hx.shape[1], nz = hx.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double e0
    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    e0 = ez[i, j, k]
                    hx[i, j, k] -= (chxy[i, j, k] * (ez[i, j + 1, k] - e0)
                                    - chxz[i, j, k] * (ey[i, j, k + 1] - ey[i, j, k]))
                    hy[i, j, k] -= (chyz[i, j, k] * (ex[i, j, k + 1] - ex[i, j, k])
                                    - chyx[i, j, k] * (ez[i + 1, j, k] - e0))
                    hz[i, j, k] -= (chzx[i, j, k] * (ey[i + 1, j, k] - ey[i, j, k])
                                    - chzy[i, j, k] * (ex[i, j + 1, k] - ex[i, j, k]))


def update_e_3d(arr3 ex, arr3 ey, arr3 ez, arr3 hx, arr3 hy, arr3 hz,
                arr3 cexy, arr3 cexz, arr3 ceyz, arr3 ceyx, arr3 cezx, arr3 cezy):
    cdef Py_ssize_t nx = hx.shape[0], ny = hx.shape[1], nz = hx.shape[2]
    cdef Py_ssize_t i, j, k
    with nogil:
        for i in range(nx):
            for j in range(1, ny):
                for k in range(1, nz):
                    ex[i, j, k] += (cexy[i, j, k] * (hz[i, j, k] - hz[i, j - 1, k])
                                    - cexz[i, j, k] * (hy[i, j, k] - hy[i, j, k - 1]))
        for i in range(1, nx):
            for j in range(ny):
                for k in range(1, nz):
                    ey[i, j, k] += (ceyz[i, j, k] * (hx[i, j, k] - hx[i, j, k - 1])
                                    - ceyx[i, j, k] * (hz[i, j, k] - hz[i - 1, j, k]))
        for i in range(1, nx):
            for j in range(1, ny):
                for k in range(nz):
                    ez[i, j, k] += (cezx[i, j, k] * (hy[i, j, k] - hy[i - 1, j, k])
                                    - cezy[i, j, k] * (hx[i, j, k] - hx[i, j - 1, k]))


def update_h_1d(double[::1] e, double[::1] h, double[::1] ch):
    cdef Py_ssize_t n = e.shape[0], k
    with nogil:
        for k in range(n - 1):
            h[k] -= ch[k] * (e[k + 1] - e[k])


def update_e_1d(double[::1] e, double[::1] h, double[::1] ce):
    cdef Py_ssize_t n = e.shape[0], k
    with nogil:
        for k in range(1, n - 1):
            e[k] -= ce[k] * (h[k] - h[k - 1])
