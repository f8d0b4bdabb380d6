# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Must stay bit-identical to ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

cdef int DX[4]
cdef int DY[4]
DX[:] = [0, 1, 0, -1]
DY[:] = [-1, 0, 1, 0]


cdef inline int _argmax_tie(double[:, ::1] q, int s, double u) noexcept nogil:
    cdef int a, k = 0, pick
    cdef double best = q[s, 0]
    for a in range(1, 4):
        if q[s, a] > best:
            best = q[s, a]
    for a in range(4):
        if q[s, a] == best:
            k += 1
    pick = <int>(u * k)
    if pick >= k:
        pick = k - 1
    for a in range(4):
        if q[s, a] == best:
            if pick == 0:
                return a
            pick -= 1
    return 0


def qlearn_grid(double[:, ::1] q, const unsigned char[:, ::1] lava, int width, int height,
                int sx, int sy, int sdir, int gx, int gy, int max_steps,
                double alpha, double gamma, double epsilon, const double[:, :, ::1] uniforms):
    """Run one epsilon-greedy Q-learning episode per row of ``uniforms``.

    ``uniforms[e, t]`` holds (explore coin, random action, tie-break).
    Updates ``q`` in place; returns (episode lengths, success flags).
    """
    cdef Py_ssize_t n_ep = uniforms.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] lengths = np.zeros(n_ep, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] succ = np.zeros(n_ep, dtype=np.uint8)
    cdef Py_ssize_t e
    cdef int t, x, y, d, nx, ny, nd, a, s, ns, b
    cdef double r, target, best
    cdef bint term
    with nogil:
        for e in range(n_ep):
            x = sx
            y = sy
            d = sdir
            for t in range(max_steps):
                s = (y * width + x) * 4 + d
                if uniforms[e, t, 0] < epsilon:
                    a = <int>(uniforms[e, t, 1] * 4)
                    if a > 3:
                        a = 3
                else:
                    a = _argmax_tie(q, s, uniforms[e, t, 2])
                nx = x
                ny = y
                nd = d
                if a == 0:
                    nd = (d + 3) % 4
                elif a == 1:
                    nd = (d + 1) % 4
                elif a == 2:
                    nx = x + DX[d]
                    ny = y + DY[d]
                    if nx < 0 or nx >= width or ny < 0 or ny >= height:
                        nx = x
                        ny = y
                r = 0.0
                term = False
                if lava[ny, nx]:
                    term = True
                elif nx == gx and ny == gy:
                    term = True
                    r = 1.0 - 0.9 * ((t + 1.0) / max_steps)
                    succ[e] = 1
                ns = (ny * width + nx) * 4 + nd
                if term:
                    target = r
                else:
                    best = q[ns, 0]
                    for b in range(1, 4):
                        if q[ns, b] > best:
                            best = q[ns, b]
                    target = r + gamma * best
                q[s, a] = q[s, a] + alpha * (target - q[s, a])
                x = nx
                y = ny
                d = nd
                lengths[e] = t + 1
                if term:
                    break
    return lengths, succ


def grid_value_iteration(const unsigned char[:, ::1] lava, int width, int height, int gx, int gy,
                         double gamma, double tol, int max_iter):
    """Synchronous value iteration with reward 1 on reaching the goal.

    Returns the (width*height*4, 4) Q table and the sweep count.
    """
    cdef Py_ssize_t n_states = width * height * 4
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Q = np.zeros((n_states, 4), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] V = np.zeros(n_states, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] Vn = np.zeros(n_states, dtype=np.float64)
    cdef double[:, ::1] Qv = Q
    cdef double[::1] Vv = V
    cdef double[::1] Vnv = Vn
    cdef int it, x, y, d, a, nx, ny, nd, s, ns
    cdef double delta, best, val
    for it in range(max_iter):
        delta = 0.0
        for y in range(height):
            for x in range(width):
                for d in range(4):
                    s = (y * width + x) * 4 + d
                    for a in range(4):
                        nx = x
                        ny = y
                        nd = d
                        if a == 0:
                            nd = (d + 3) % 4
                        elif a == 1:
                            nd = (d + 1) % 4
                        elif a == 2:
                            nx = x + DX[d]
                            ny = y + DY[d]
                            if nx < 0 or nx >= width or ny < 0 or ny >= height:
                                nx = x
                                ny = y
                        if lava[ny, nx]:
                            val = 0.0
                        elif nx == gx and ny == gy:
                            val = 1.0
                        else:
                            ns = (ny * width + nx) * 4 + nd
                            val = gamma * Vv[ns]
                        Qv[s, a] = val
                    best = Qv[s, 0]
                    for a in range(1, 4):
                        if Qv[s, a] > best:
                            best = Qv[s, a]
                    Vnv[s] = best
                    if best - Vv[s] > delta:
                        delta = best - Vv[s]
                    elif Vv[s] - best > delta:
                        delta = Vv[s] - best
        for s in range(n_states):
            Vv[s] = Vnv[s]
        if delta < tol:
            return Q, it + 1
    return Q, max_iter


def maze_step(double[:, ::1] states, const double[:, ::1] force, const unsigned char[:, ::1] walls,
              double dt, double damping):
    """Semi-implicit Euler step with axis-separated wall clamping.

    Returns a new (N, 4) array of (x, y, vx, vy).
    """
    cdef Py_ssize_t n = states.shape[0], i
    cdef int rows = walls.shape[0], cols = walls.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, 4), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double x, y, vx, vy, nx, ny, keep = 1.0 - damping
    cdef int cx, cy, c
    cdef double margin = 1e-6
    with nogil:
        for i in range(n):
            x = states[i, 0]
            y = states[i, 1]
            vx = keep * states[i, 2] + dt * force[i, 0]
            vy = keep * states[i, 3] + dt * force[i, 1]
            nx = x + dt * vx
            cy = <int>floor(y)
            c = <int>floor(nx)
            if c < 0 or c >= cols or walls[cy, c]:
                if vx > 0:
                    nx = c - margin
                else:
                    nx = c + 1 + margin
                vx = 0.0
            ny = y + dt * vy
            cx = <int>floor(nx)
            c = <int>floor(ny)
            if c < 0 or c >= rows or walls[c, cx]:
                if vy > 0:
                    ny = c - margin
                else:
                    ny = c + 1 + margin
                vy = 0.0
            o[i, 0] = nx
            o[i, 1] = ny
            o[i, 2] = vx
            o[i, 3] = vy
    return out
