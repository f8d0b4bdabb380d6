"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``.

Same arithmetic in the same order, so both backends return identical bits.
"""

import math

import numpy as np

DX = (0, 1, 0, -1)
DY = (-1, 0, 1, 0)


def _argmax_tie(row, u):
    best = max(row)
    ties = [a for a in range(4) if row[a] == best]
    pick = min(int(u * len(ties)), len(ties) - 1)
    return ties[pick]


def qlearn_grid(q, lava, width, height, sx, sy, sdir, gx, gy, max_steps, alpha, gamma, epsilon, uniforms):
    n_ep = uniforms.shape[0]
    lengths = np.zeros(n_ep, dtype=np.int64)
    succ = np.zeros(n_ep, dtype=np.uint8)
    table = q.tolist()
    lava_l = lava.tolist()
    unif = uniforms.tolist()
    for e in range(n_ep):
        x, y, d = sx, sy, sdir
        draws = unif[e]
        for t in range(max_steps):
            s = (y * width + x) * 4 + d
            u0, u1, u2 = draws[t]
            if u0 < epsilon:
                a = min(int(u1 * 4), 3)
            else:
                a = _argmax_tie(table[s], u2)
            nx, ny, nd = x, y, d
            if a == 0:
                nd = (d + 3) % 4
            elif a == 1:
                nd = (d + 1) % 4
            elif a == 2:
                nx, ny = x + DX[d], y + DY[d]
                if nx < 0 or nx >= width or ny < 0 or ny >= height:
                    nx, ny = x, y
            r = 0.0
            term = False
            if lava_l[ny][nx]:
                term = True
            elif nx == gx and ny == gy:
                term = True
                r = 1.0 - 0.9 * ((t + 1.0) / max_steps)
                succ[e] = 1
            ns = (ny * width + nx) * 4 + nd
            target = r if term else r + gamma * max(table[ns])
            row = table[s]
            row[a] = row[a] + alpha * (target - row[a])
            x, y, d = nx, ny, nd
            lengths[e] = t + 1
            if term:
                break
    q[:, :] = np.asarray(table, dtype=np.float64)
    return lengths, succ


def _grid_successors(lava, width, height, gx, gy):
    n_states = width * height * 4
    nxt = np.zeros((n_states, 4), dtype=np.int64)
    kind = np.zeros((n_states, 4), dtype=np.int8)  # 0 continue, 1 goal, 2 lava
    for y in range(height):
        for x in range(width):
            for d in range(4):
                s = (y * width + x) * 4 + d
                for a in range(4):
                    nx, ny, nd = x, y, d
                    if a == 0:
                        nd = (d + 3) % 4
                    elif a == 1:
                        nd = (d + 1) % 4
                    elif a == 2:
                        nx, ny = x + DX[d], y + DY[d]
                        if nx < 0 or nx >= width or ny < 0 or ny >= height:
                            nx, ny = x, y
                    nxt[s, a] = (ny * width + nx) * 4 + nd
                    if lava[ny, nx]:
                        kind[s, a] = 2
                    elif nx == gx and ny == gy:
                        kind[s, a] = 1
    return nxt, kind


def grid_value_iteration(lava, width, height, gx, gy, gamma, tol, max_iter):
    nxt, kind = _grid_successors(lava, width, height, gx, gy)
    V = np.zeros(width * height * 4)
    Q = np.zeros((width * height * 4, 4))
    for it in range(max_iter):
        Q = np.where(kind == 0, gamma * V[nxt], np.where(kind == 1, 1.0, 0.0))
        Vn = Q.max(axis=1)
        delta = float(np.max(np.abs(Vn - V)))
        V = Vn
        if delta < tol:
            return Q, it + 1
    return Q, max_iter


def maze_step(states, force, walls, dt, damping):
    rows, cols = walls.shape
    keep = 1.0 - damping
    margin = 1e-6
    out = np.empty((states.shape[0], 4))
    for i in range(states.shape[0]):
        x, y = states[i, 0], states[i, 1]
        vx = keep * states[i, 2] + dt * force[i, 0]
        vy = keep * states[i, 3] + dt * force[i, 1]
        nx = x + dt * vx
        cy = math.floor(y)
        c = math.floor(nx)
        if c < 0 or c >= cols or walls[cy, c]:
            nx = c - margin if vx > 0 else c + 1 + margin
            vx = 0.0
        ny = y + dt * vy
        cx = math.floor(nx)
        c = math.floor(ny)
        if c < 0 or c >= rows or walls[c, cx]:
            ny = c - margin if vy > 0 else c + 1 + margin
            vy = 0.0
        out[i] = (nx, ny, vx, vy)
    return out
