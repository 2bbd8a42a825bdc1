"""Pure-numpy curl updates. Reference for, and fallback to, the compiled kernels.

Array layout: E components have shape (nx+1, ny+1, nz+1), H components
(nx, ny, nz). ``c<f><d>`` is the coefficient multiplying the d-derivative
term in the update of component f. All updates are in place.
"""

import numpy as np


def update_h_3d(ex, ey, ez, hx, hy, hz, chxy, chxz, chyz, chyx, chzx, chzy):
    nx, ny, nz = hx.shape
    hx -= chxy * (ez[:nx, 1:ny + 1, :nz] - ez[:nx, :ny, :nz]) - chxz * (ey[:nx, :ny, 1:nz + 1] - ey[:nx, :ny, :nz])
    hy -= chyz * (ex[:nx, :ny, 1:nz + 1] - ex[:nx, :ny, :nz]) - chyx * (ez[1:nx + 1, :ny, :nz] - ez[:nx, :ny, :nz])
    hz -= chzx * (ey[1:nx + 1, :ny, :nz] - ey[:nx, :ny, :nz]) - chzy * (ex[:nx, 1:ny + 1, :nz] - ex[:nx, :ny, :nz])


def update_e_3d(ex, ey, ez, hx, hy, hz, cexy, cexz, ceyz, ceyx, cezx, cezy):
    nx, ny, nz = hx.shape
    s = np.s_[:nx, 1:ny, 1:nz]
    ex[s] += cexy[s] * (hz[:, 1:ny, 1:nz] - hz[:, :ny - 1, 1:nz]) - cexz[s] * (hy[:, 1:ny, 1:nz] - hy[:, 1:ny, :nz - 1])
    s = np.s_[1:nx, :ny, 1:nz]
    ey[s] += ceyz[s] * (hx[1:nx, :, 1:nz] - hx[1:nx, :, :nz - 1]) - ceyx[s] * (hz[1:nx, :, 1:nz] - hz[:nx - 1, :, 1:nz])
    s = np.s_[1:nx, 1:ny, :nz]
    ez[s] += cezx[s] * (hy[1:nx, 1:ny, :] - hy[:nx - 1, 1:ny, :]) - cezy[s] * (hx[1:nx, 1:ny, :] - hx[1:nx, :ny - 1, :])


def update_h_1d(e, h, ch):
    n = e.shape[0]
    h[:n - 1] -= ch[:n - 1] * (e[1:] - e[:-1])


def update_e_1d(e, h, ce):
    n = e.shape[0]
    e[1:n - 1] -= ce[1:n - 1] * (h[1:n - 1] - h[:n - 2])
