"""Numba kernels for the cumulative reachable-set level-set step.

One step of length dt is the semi-Lagrangian update

    phi(x) <- min(phi(x), min_{|a| <= 1} phi(x - dt (a + V(m)))),

where m = x - dt V(x) / 2 is the drift midpoint and phi between cell centres is
multilinear.  The inner minimum runs over a fixed direction set plus the
unit vectors along the interpolated gradient at the drift foot and at the
first departure point, taken at full and half length.  That is where the
minimum over the ball sits when phi is locally a distance function.  The outer min keeps the sublevel set
cumulative.  No CFL restriction applies; with dt of a few cells the
interpolation error per step is O(h^2 / r) near a front of radius r.

phi is clipped to [-cap, cap].  Only cells inside ``box`` (flattened lo/hi
pairs) are visited; the box is grown after each step to cover every cell
whose departure region meets ``{phi < cap}``.
"""
import math

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _interp2(phi, x, y):
    n0, n1 = phi.shape
    if x < 0.0:
        x = 0.0
    elif x > n0 - 1:
        x = n0 - 1.0
    if y < 0.0:
        y = 0.0
    elif y > n1 - 1:
        y = n1 - 1.0
    i = min(int(x), n0 - 2)
    j = min(int(y), n1 - 2)
    fx = x - i
    fy = y - j
    return ((1 - fx) * ((1 - fy) * phi[i, j] + fy * phi[i, j + 1])
            + fx * ((1 - fy) * phi[i + 1, j] + fy * phi[i + 1, j + 1]))


@numba.njit(cache=True, inline="always")
def _interp3(phi, x, y, z):
    n0, n1, n2 = phi.shape
    if x < 0.0:
        x = 0.0
    elif x > n0 - 1:
        x = n0 - 1.0
    if y < 0.0:
        y = 0.0
    elif y > n1 - 1:
        y = n1 - 1.0
    if z < 0.0:
        z = 0.0
    elif z > n2 - 1:
        z = n2 - 1.0
    i = min(int(x), n0 - 2)
    j = min(int(y), n1 - 2)
    k = min(int(z), n2 - 2)
    fx = x - i
    fy = y - j
    fz = z - k
    c00 = (1 - fz) * phi[i, j, k] + fz * phi[i, j, k + 1]
    c01 = (1 - fz) * phi[i, j + 1, k] + fz * phi[i, j + 1, k + 1]
    c10 = (1 - fz) * phi[i + 1, j, k] + fz * phi[i + 1, j, k + 1]
    c11 = (1 - fz) * phi[i + 1, j + 1, k] + fz * phi[i + 1, j + 1, k + 1]
    return (1 - fx) * ((1 - fy) * c00 + fy * c01) + fx * ((1 - fy) * c10 + fy * c11)


@numba.njit(cache=True, inline="always")
def _far2(phi, x, y, r, cap):
    """True if every cell meeting the square of half-width ``r`` around ``(x, y)`` sits at ``cap``.

    Then every departure point of the stencil interpolates to ``cap`` and the
    update is the identity.
    """
    n0, n1 = phi.shape
    i0 = min(max(int(math.floor(x - r)), 0), n0 - 1)
    i1 = min(max(int(math.floor(x + r)) + 1, 0), n0 - 1)
    j0 = min(max(int(math.floor(y - r)), 0), n1 - 1)
    j1 = min(max(int(math.floor(y + r)) + 1, 0), n1 - 1)
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            if phi[i, j] < cap:
                return False
    return True


@numba.njit(cache=True, inline="always")
def _far3(phi, x, y, z, r, cap):
    n0, n1, n2 = phi.shape
    i0 = min(max(int(math.floor(x - r)), 0), n0 - 1)
    i1 = min(max(int(math.floor(x + r)) + 1, 0), n0 - 1)
    j0 = min(max(int(math.floor(y - r)), 0), n1 - 1)
    j1 = min(max(int(math.floor(y + r)) + 1, 0), n1 - 1)
    k0 = min(max(int(math.floor(z - r)), 0), n2 - 1)
    k1 = min(max(int(math.floor(z + r)) + 1, 0), n2 - 1)
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            for k in range(k0, k1 + 1):
                if phi[i, j, k] < cap:
                    return False
    return True


@numba.njit(cache=True)
def step2d(phi, out, vx, vy, dt, h, cap, box, arrival, t0, margin, dirs, reach):
    n0, n1 = phi.shape
    s = dt / h
    nlo0, nhi0, nlo1, nhi1 = n0, -1, n1, -1
    touched = False
    nd = dirs.shape[0]
    for i in range(box[0], box[1]):
        for j in range(box[2], box[3]):
            c = phi[i, j]
            if c <= -cap:
                out[i, j] = c
                continue
            # drift foot, second order in dt
            mx = i - 0.5 * s * vx[i, j]
            my = j - 0.5 * s * vy[i, j]
            px = i - s * _interp2(vx, mx, my)
            py = j - s * _interp2(vy, mx, my)
            if c >= cap and _far2(phi, px, py, s, cap):
                out[i, j] = c
                continue
            best = min(c, _interp2(phi, px, py))
            for q in range(nd):
                v = _interp2(phi, px - s * dirs[q, 0], py - s * dirs[q, 1])
                if v < best:
                    best = v
            qx, qy = px, py
            for _ in range(2):
                gx = _interp2(phi, qx + 0.5, qy) - _interp2(phi, qx - 0.5, qy)
                gy = _interp2(phi, qx, qy + 0.5) - _interp2(phi, qx, qy - 0.5)
                gn = math.sqrt(gx * gx + gy * gy)
                if gn <= 1e-14:
                    break
                v = _interp2(phi, px - 0.5 * s * gx / gn, py - 0.5 * s * gy / gn)
                if v < best:
                    best = v
                qx = px - s * gx / gn
                qy = py - s * gy / gn
                v = _interp2(phi, qx, qy)
                if v < best:
                    best = v
            if best < -cap:
                best = -cap
            out[i, j] = best
            if c > 0.0 and best <= 0.0:
                arrival[i, j] = t0 + dt * c / (c - best)
                if i < margin or i >= n0 - margin or j < margin or j >= n1 - margin:
                    touched = True
            if best < cap:
                nlo0 = min(nlo0, i)
                nhi0 = max(nhi0, i)
                nlo1 = min(nlo1, j)
                nhi1 = max(nhi1, j)
    if nhi0 >= 0:
        box[0] = min(box[0], max(nlo0 - reach, 0))
        box[1] = max(box[1], min(nhi0 + reach + 1, n0))
        box[2] = min(box[2], max(nlo1 - reach, 0))
        box[3] = max(box[3], min(nhi1 + reach + 1, n1))
    return touched


@numba.njit(cache=True)
def step3d(phi, out, vx, vy, vz, dt, h, cap, box, arrival, t0, margin, dirs, reach):
    n0, n1, n2 = phi.shape
    s = dt / h
    nlo0, nhi0, nlo1, nhi1, nlo2, nhi2 = n0, -1, n1, -1, n2, -1
    touched = False
    nd = dirs.shape[0]
    for i in range(box[0], box[1]):
        for j in range(box[2], box[3]):
            for k in range(box[4], box[5]):
                c = phi[i, j, k]
                if c <= -cap:
                    out[i, j, k] = c
                    continue
                mx = i - 0.5 * s * vx[i, j, k]
                my = j - 0.5 * s * vy[i, j, k]
                mz = k - 0.5 * s * vz[i, j, k]
                px = i - s * _interp3(vx, mx, my, mz)
                py = j - s * _interp3(vy, mx, my, mz)
                pz = k - s * _interp3(vz, mx, my, mz)
                if c >= cap and _far3(phi, px, py, pz, s, cap):
                    out[i, j, k] = c
                    continue
                best = min(c, _interp3(phi, px, py, pz))
                for q in range(nd):
                    v = _interp3(phi, px - s * dirs[q, 0], py - s * dirs[q, 1], pz - s * dirs[q, 2])
                    if v < best:
                        best = v
                qx, qy, qz = px, py, pz
                for _ in range(2):
                    gx = _interp3(phi, qx + 0.5, qy, qz) - _interp3(phi, qx - 0.5, qy, qz)
                    gy = _interp3(phi, qx, qy + 0.5, qz) - _interp3(phi, qx, qy - 0.5, qz)
                    gz = _interp3(phi, qx, qy, qz + 0.5) - _interp3(phi, qx, qy, qz - 0.5)
                    gn = math.sqrt(gx * gx + gy * gy + gz * gz)
                    if gn <= 1e-14:
                        break
                    v = _interp3(phi, px - 0.5 * s * gx / gn, py - 0.5 * s * gy / gn,
                                 pz - 0.5 * s * gz / gn)
                    if v < best:
                        best = v
                    qx = px - s * gx / gn
                    qy = py - s * gy / gn
                    qz = pz - s * gz / gn
                    v = _interp3(phi, qx, qy, qz)
                    if v < best:
                        best = v
                if best < -cap:
                    best = -cap
                out[i, j, k] = best
                if c > 0.0 and best <= 0.0:
                    arrival[i, j, k] = t0 + dt * c / (c - best)
                    if (i < margin or i >= n0 - margin or j < margin or j >= n1 - margin
                            or k < margin or k >= n2 - margin):
                        touched = True
                if best < cap:
                    nlo0 = min(nlo0, i)
                    nhi0 = max(nhi0, i)
                    nlo1 = min(nlo1, j)
                    nhi1 = max(nhi1, j)
                    nlo2 = min(nlo2, k)
                    nhi2 = max(nhi2, k)
    if nhi0 >= 0:
        box[0] = min(box[0], max(nlo0 - reach, 0))
        box[1] = max(box[1], min(nhi0 + reach + 1, n0))
        box[2] = min(box[2], max(nlo1 - reach, 0))
        box[3] = max(box[3], min(nhi1 + reach + 1, n1))
        box[4] = min(box[4], max(nlo2 - reach, 0))
        box[5] = max(box[5], min(nhi2 + reach + 1, n2))
    return touched


def directions(dim):
    """Fixed unit direction set: 16 on the circle, the 26 lattice directions in 3D."""
    if dim == 2:
        ang = 2 * np.pi * np.arange(16) / 16
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pts = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)
                    if (a, b, c) != (0, 0, 0)], dtype=float)
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def initial_box(phi, cap, reach):
    """Bounding box (flattened lo/hi pairs) of ``{phi < cap}`` grown by ``reach`` cells."""
    idx = np.nonzero(phi < cap)
    box = []
    for axis, n in enumerate(phi.shape):
        if len(idx[axis]) == 0:
            box += [0, 0]
        else:
            box += [max(int(idx[axis].min()) - reach, 0), min(int(idx[axis].max()) + reach + 1, n)]
    return np.array(box, dtype=np.int64)
