"""Compiled HEOM right-hand side.

Every output ADO depends only on read-only neighbours, so the loop order
over ADOs does not affect the result.
"""

import numba as nb


@nb.njit(cache=True, nogil=True)
def heom_rhs_kernel(y, out, h_left, h_right, damping, up, up_coef, down, down_left, down_right, bath, v_left, v_right):
    """Write d y / dt into ``out`` for y of shape (n_ados, batch, nl, nr).

    ``up[u, t]`` and ``down[u, t]`` are neighbour rows (-1 if absent) with
    coefficients ``up_coef`` (weighted by V_l - V_r) and ``down_left`` /
    ``down_right`` (weighted by V_l and V_r respectively).
    """
    n_ados, n_batch, nl, nr = y.shape
    n_terms = up.shape[1]
    for u in range(n_ados):
        d = damping[u]
        for s in range(n_batch):
            for i in range(nl):
                for j in range(nr):
                    acc = 0j
                    for k in range(nl):
                        acc += h_left[i, k] * y[u, s, k, j]
                    for k in range(nr):
                        acc -= y[u, s, i, k] * h_right[k, j]
                    out[u, s, i, j] = -1j * acc + d * y[u, s, i, j]
        for t in range(n_terms):
            b = bath[t]
            w = up[u, t]
            if w >= 0:
                c = up_coef[u, t]
                for s in range(n_batch):
                    for i in range(nl):
                        vi = v_left[b, i]
                        for j in range(nr):
                            f = vi - v_right[b, j]
                            if f != 0.0:
                                out[u, s, i, j] += c * f * y[w, s, i, j]
            w = down[u, t]
            if w >= 0:
                cl = down_left[u, t]
                cr = down_right[u, t]
                for s in range(n_batch):
                    for i in range(nl):
                        vi = v_left[b, i]
                        for j in range(nr):
                            out[u, s, i, j] += (cl * vi + cr * v_right[b, j]) * y[w, s, i, j]
    return out
