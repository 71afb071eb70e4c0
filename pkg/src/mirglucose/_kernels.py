"""Hot numeric kernels, each in a numba flavour and a pure-numpy flavour.

The public names at the bottom of the module (``lower_hull``, ``gram``,
``smo_solve`` ...) are bound to one flavour according to
:data:`mirglucose._accel.USE_NUMBA`. Both flavours stay importable so tests and
``benchmarks/bench_backends.py`` can compare them directly.

Within one flavour every kernel is deterministic and evaluates each output
element with a fixed operation order that does not depend on the other rows
in the batch. The grid-search engine relies on that to reproduce single-fit
results bit for bit.
"""

import types

import numpy as np

from ._accel import USE_NUMBA, njit

KERNEL_CODES = {"linear": 0, "rbf": 1, "poly": 2}

_TAU = 1e-12
_EDGE_TOL = 1e-9
_AS_STEPS = 500
_PCHOL_RTOL = 1e-12
_PD_RTOL = 1e-8


# --------------------------------------------------------------------------
# lower convex hull
# --------------------------------------------------------------------------


@njit
def _lower_hull_numba(x, y):
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    h = 0
    for i in range(n):
        while h >= 2:
            o = idx[h - 2]
            a = idx[h - 1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            if cross <= 0.0:
                h -= 1
            else:
                break
        idx[h] = i
        h += 1
    return idx[:h].copy()


def _lower_hull_numpy(x, y):
    # divide and conquer: the point lying furthest below a chord is a vertex
    n = x.shape[0]
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        xs = x[lo + 1:hi]
        chord = y[lo] + (xs - x[lo]) * ((y[hi] - y[lo]) / (x[hi] - x[lo]))
        gap = y[lo + 1:hi] - chord
        k = int(np.argmin(gap))
        if gap[k] < 0.0:
            mid = lo + 1 + k
            keep[mid] = True
            stack.append((lo, mid))
            stack.append((mid, hi))
    return np.flatnonzero(keep)


# --------------------------------------------------------------------------
# kernel (Gram) matrices
# --------------------------------------------------------------------------


@njit
def _gram_numba(A, B, kind, gamma, degree, coef0):
    na, p = A.shape
    nb = B.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        for j in range(nb):
            s = 0.0
            if kind == 1:
                for f in range(p):
                    d = A[i, f] - B[j, f]
                    s += d * d
                out[i, j] = np.exp(-gamma * s)
            else:
                for f in range(p):
                    s += A[i, f] * B[j, f]
                if kind == 0:
                    out[i, j] = s
                else:
                    out[i, j] = (gamma * s + coef0) ** degree
    return out


def _gram_numpy(A, B, kind, gamma, degree, coef0):
    if kind == 1:
        d = A[:, None, :] - B[None, :, :]
        return np.exp(-gamma * np.einsum("ijk,ijk->ij", d, d))
    s = A @ B.T
    if kind == 0:
        return s
    return (gamma * s + coef0) ** degree


# --------------------------------------------------------------------------
# epsilon-SVR dual
# --------------------------------------------------------------------------
#
# Variables a, a* (length n each); dual coefficient d = a - a*.
# In the stacked form beta = [a; a*], sign = [+1..; -1..],
# Q_st = sign_s sign_t K[s % n, t % n], p = [eps - y; eps + y]:
# minimise 0.5 beta'Q beta + p'beta  s.t.  sign'beta = 0, 0 <= beta <= C.
# G1 / G2 are the gradient halves for a / a*.
#
# Two solvers share this section:
#
# * ``_smo_*``: SMO with second-order working-set selection. Working-set ties
#   go to the lowest stacked index. Every ``2n`` iterations the iterate seeds
#   the active-set method below; its answer is kept if the KKT gap is below
#   ``tol``, otherwise SMO carries on.
# * ``_exact_*``: drives the problem to its exact optimum with the primal
#   active-set method and then recomputes the solution from the optimal
#   partition alone (which variables sit at 0, at C, or in between). The
#   result does not depend on the starting point, so warm starts along a
#   hyperparameter path reproduce a cold fit bit for bit whenever the optimal
#   partition is unique. Used for the linear kernel, whose Gram matrix has
#   rank at most the feature count; there SMO needs up to 1e5 iterations.
#
# Both work with a low-rank factor ``K ~= L L'`` from pivoted Cholesky, so the
# equality-constrained subproblems cost O(n_free * rank^2).


@njit
def _gap_numba(a, s, G1, G2, C):
    gmax = -np.inf
    gmax2 = -np.inf
    n = a.shape[0]
    for t in range(n):
        if a[t] < C and -G1[t] > gmax:
            gmax = -G1[t]
        if a[t] > 0.0 and G1[t] > gmax2:
            gmax2 = G1[t]
    for t in range(n):
        if s[t] > 0.0 and G2[t] > gmax:
            gmax = G2[t]
        if s[t] < C and -G2[t] > gmax2:
            gmax2 = -G2[t]
    return gmax + gmax2


def _gap_numpy(a, s, G1, G2, C):
    up = np.concatenate([np.where(a < C, -G1, -np.inf), np.where(s > 0.0, G2, -np.inf)])
    low = np.concatenate([np.where(a > 0.0, G1, -np.inf), np.where(s < C, -G2, -np.inf)])
    return up.max() + low.max()



@njit
def _rho_numba(a, s, G1, G2, C):
    ub = np.inf
    lb = -np.inf
    n_free = 0
    s_free = 0.0
    n = a.shape[0]
    for t in range(n):
        yg = G1[t]
        if a[t] >= C:
            lb = max(lb, yg)
        elif a[t] <= 0.0:
            ub = min(ub, yg)
        else:
            n_free += 1
            s_free += yg
    for t in range(n):
        yg = -G2[t]
        if s[t] >= C:
            ub = min(ub, yg)
        elif s[t] <= 0.0:
            lb = max(lb, yg)
        else:
            n_free += 1
            s_free += yg
    if n_free > 0:
        return s_free / n_free
    return 0.5 * (ub + lb)


def _rho_numpy(a, s, G1, G2, C):
    n = a.shape[0]
    yg = np.concatenate([G1, -G2])
    beta = np.concatenate([a, s])
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    at_upper = beta >= C
    at_lower = beta <= 0.0
    free = ~(at_upper | at_lower)
    if free.any():
        return yg[free].sum() / free.sum()
    ub_mask = (at_upper & (sign < 0)) | (at_lower & (sign > 0))
    lb_mask = (at_upper & (sign > 0)) | (at_lower & (sign < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return 0.5 * (ub + lb)


def _pchol_impl(K, rtol):
    """Diagonally pivoted Cholesky ``K ~= L L'``; ``L`` keeps the row order of K.

    Stops once every remaining diagonal residual is below ``rtol`` times the
    largest diagonal entry, so ``L`` has as many columns as the numerical rank.
    """
    n = K.shape[0]
    d = np.empty(n)
    for t in range(n):
        d[t] = K[t, t]
    dmax = 0.0
    for t in range(n):
        dmax = max(dmax, d[t])
    piv = np.arange(n)
    L = np.zeros((n, n))
    r = 0
    for j in range(n):
        q = j
        for t in range(j + 1, n):
            if d[piv[t]] > d[piv[q]]:
                q = t
        if not d[piv[q]] > rtol * dmax:
            break
        tmp = piv[j]
        piv[j] = piv[q]
        piv[q] = tmp
        i = piv[j]
        lii = np.sqrt(d[i])
        L[i, j] = lii
        for t in range(j + 1, n):
            row = piv[t]
            acc = K[row, i]
            for c in range(j):
                acc -= L[row, c] * L[i, c]
            L[row, j] = acc / lii
            d[row] -= L[row, j] * L[row, j]
        r += 1
    return np.ascontiguousarray(L[:, :r])


_pchol_numba = njit(_pchol_impl)
_pchol_numpy = _pchol_impl


def _range_solve_impl(B, sF, h, c, gtol):
    """Solve ``B B' x + sF lam = h``, ``sF' x = c`` for ``(x, lam)``.

    Returns ``(consistent, x, lam)``. When no ``lam`` puts ``h - sF lam`` in
    the column space of ``B`` the system has no solution; ``consistent`` is
    then False and ``x`` holds that residual, which is orthogonal to both the
    columns of ``B`` and ``sF``.
    """
    nf, r = B.shape
    # fast path: B B' positive definite, solve the bordered system by Cholesky
    if nf <= r:
        M = B @ B.T
        Mc = np.zeros((nf, nf))
        dmax = 0.0
        for q in range(nf):
            dmax = max(dmax, M[q, q])
        pd = dmax > 0.0
        for q in range(nf):
            if not pd:
                break
            for w in range(q + 1):
                acc = M[q, w]
                for col in range(w):
                    acc -= Mc[q, col] * Mc[w, col]
                if q == w:
                    if acc <= _PD_RTOL * dmax:
                        pd = False
                        break
                    Mc[q, q] = np.sqrt(acc)
                else:
                    Mc[q, w] = acc / Mc[w, w]
        if pd:
            zh = h.copy()
            zs = sF.copy()
            for q in range(nf):
                for col in range(q):
                    zh[q] -= Mc[q, col] * zh[col]
                    zs[q] -= Mc[q, col] * zs[col]
                zh[q] /= Mc[q, q]
                zs[q] /= Mc[q, q]
            for q in range(nf - 1, -1, -1):
                for col in range(q + 1, nf):
                    zh[q] -= Mc[col, q] * zh[col]
                    zs[q] -= Mc[col, q] * zs[col]
                zh[q] /= Mc[q, q]
                zs[q] /= Mc[q, q]
            num = 0.0
            den = 0.0
            for q in range(nf):
                num += sF[q] * zh[q]
                den += sF[q] * zs[q]
            lam = (num - c) / den
            return True, zh - lam * zs, lam
    U = np.empty((nf, min(nf, r)))
    ru = 0
    bmax = 0.0
    for col in range(r):
        acc = 0.0
        for u in range(nf):
            acc += B[u, col] * B[u, col]
        bmax = max(bmax, np.sqrt(acc))
    for col in range(r):
        if ru == nf:
            break
        v = B[:, col].copy()
        for _rep in range(2):
            for q in range(ru):
                dot = 0.0
                for u in range(nf):
                    dot += U[u, q] * v[u]
                for u in range(nf):
                    v[u] -= dot * U[u, q]
        nv = 0.0
        for u in range(nf):
            nv += v[u] * v[u]
        nv = np.sqrt(nv)
        if nv > 1e-9 * bmax:
            for u in range(nf):
                U[u, ru] = v[u] / nv
            ru += 1
    Uh = np.zeros(ru)
    Us = np.zeros(ru)
    for q in range(ru):
        for u in range(nf):
            Uh[q] += U[u, q] * h[u]
            Us[q] += U[u, q] * sF[u]
    Ph = h.copy()
    Ps = sF.copy()
    for q in range(ru):
        for u in range(nf):
            Ph[u] -= U[u, q] * Uh[q]
            Ps[u] -= U[u, q] * Us[q]
    nps2 = 0.0
    for u in range(nf):
        nps2 += Ps[u] * Ps[u]
    s_outside = nps2 > 1e-20 * nf
    lam = 0.0
    if s_outside:
        num = 0.0
        for u in range(nf):
            num += Ps[u] * Ph[u]
        lam = num / nps2
    res = np.empty(nf)
    consistent = True
    for u in range(nf):
        res[u] = Ph[u] - lam * Ps[u]
        if abs(res[u]) > gtol:
            consistent = False
    if not consistent:
        return False, res, lam
    x = np.zeros(nf)
    if ru > 0:
        # M = R R' with R = U'B, factorised by Cholesky
        R = np.zeros((ru, r))
        for q in range(ru):
            for col in range(r):
                acc = 0.0
                for u in range(nf):
                    acc += U[u, q] * B[u, col]
                R[q, col] = acc
        Mc = np.zeros((ru, ru))
        for q in range(ru):
            for w in range(q + 1):
                acc = 0.0
                for col in range(r):
                    acc += R[q, col] * R[w, col]
                for col in range(w):
                    acc -= Mc[q, col] * Mc[w, col]
                if q == w:
                    Mc[q, q] = np.sqrt(acc) if acc > 0.0 else 1e-150
                else:
                    Mc[q, w] = acc / Mc[w, w]
        xh = Uh.copy()
        xs = Us.copy()
        for q in range(ru):
            for col in range(q):
                xh[q] -= Mc[q, col] * xh[col]
                xs[q] -= Mc[q, col] * xs[col]
            xh[q] /= Mc[q, q]
            xs[q] /= Mc[q, q]
        for q in range(ru - 1, -1, -1):
            for col in range(q + 1, ru):
                xh[q] -= Mc[col, q] * xh[col]
                xs[q] -= Mc[col, q] * xs[col]
            xh[q] /= Mc[q, q]
            xs[q] /= Mc[q, q]
        if not s_outside:
            num = 0.0
            den = 0.0
            for q in range(ru):
                num += Us[q] * xh[q]
                den += Us[q] * xs[q]
            lam = (num - c) / den
        for u in range(nf):
            acc = 0.0
            for q in range(ru):
                acc += U[u, q] * (xh[q] - lam * xs[q])
            x[u] = acc
    if s_outside:
        sx = 0.0
        for u in range(nf):
            sx += sF[u] * x[u]
        tt = (c - sx) / nps2
        for u in range(nf):
            x[u] += tt * Ps[u]
    return True, x, lam


_range_solve_numba = njit(_range_solve_impl)


def _active_set_impl(K, L, y, C, eps, beta0, max_steps):
    """Primal active-set QP solve started from ``beta0``.

    Returns ``(ok, beta, state)`` with ``state`` 0 for free variables, 1
    at zero and 2 at ``C``. When the reduced Hessian is singular and the
    step is unbounded the zero-curvature descent direction is followed to
    the nearest bound instead.
    """
    n = y.shape[0]
    m = 2 * n
    r = L.shape[1]
    beta = beta0.copy()
    sg = np.ones(m)
    sg[n:] = -1.0
    state = np.zeros(m, dtype=np.int64)
    for t in range(m):
        if beta[t] <= 0.0:
            beta[t] = 0.0
            state[t] = 1
        elif beta[t] >= C:
            beta[t] = C
            state[t] = 2
    f = K @ (beta[:n] - beta[n:])
    g = np.empty(m)
    g[:n] = f + eps - y
    g[n:] = -f + eps + y
    gtol = 1e-9 * (1.0 + np.abs(g).max())
    ok = False
    for _ in range(max_steps):
        nf = 0
        for t in range(m):
            if state[t] == 0:
                nf += 1
        F = np.empty(nf, dtype=np.int64)
        u = 0
        for t in range(m):
            if state[t] == 0:
                F[u] = t
                u += 1
        p = np.zeros(nf)
        lam = 0.0
        consistent = True
        if nf == 0:
            # every variable at a bound: multiplier from the middle of its interval
            lo = -np.inf
            hi = np.inf
            for t in range(m):
                if (state[t] == 1) == (sg[t] > 0.0):
                    lo = max(lo, -sg[t] * g[t])
                else:
                    hi = min(hi, -sg[t] * g[t])
            if lo == -np.inf:
                lam = hi
            elif hi == np.inf:
                lam = lo
            else:
                lam = 0.5 * (lo + hi)
        else:
            B = np.empty((nf, r))
            sF = np.empty(nf)
            hF = np.empty(nf)
            for u in range(nf):
                i = F[u]
                k = i - n if i >= n else i
                sF[u] = sg[i]
                hF[u] = -g[i]
                for col in range(r):
                    B[u, col] = sg[i] * L[k, col]
            consistent, p, lam = _range_solve(B, sF, hF, 0.0, gtol)
            if not consistent:
                slope = 0.0
                for u in range(nf):
                    slope -= p[u] * hF[u]
                if not slope < 0.0:
                    break
        pmax = 0.0
        for u in range(nf):
            pmax = max(pmax, abs(p[u]))
        check = consistent and pmax <= 1e-13 * max(C, 1.0)
        if not check:
            step = 1.0 if consistent else np.inf
            block = -1
            for u in range(nf):
                i = F[u]
                if p[u] < 0.0:
                    t_ = beta[i] / -p[u]
                elif p[u] > 0.0:
                    t_ = (C - beta[i]) / p[u]
                else:
                    continue
                if t_ < step:
                    step = t_
                    block = u
            if step == np.inf:
                break
            dd = np.zeros(n)
            for u in range(nf):
                i = F[u]
                beta[i] += step * p[u]
                k = i - n if i >= n else i
                dd[k] += sg[i] * step * p[u]
            df = K @ dd
            g[:n] += df
            g[n:] -= df
            if block >= 0:
                i = F[block]
                if p[block] < 0.0:
                    beta[i] = 0.0
                    state[i] = 1
                else:
                    beta[i] = C
                    state[i] = 2
            for u in range(nf):
                i = F[u]
                if state[i] == 0:
                    if beta[i] < 0.0:
                        beta[i] = 0.0
                    elif beta[i] > C:
                        beta[i] = C
            # a full step lands on the subproblem optimum
            check = consistent and block < 0
        if check:
            worst = gtol
            jw = -1
            for t in range(m):
                if state[t] == 1:
                    viol = -(g[t] + lam * sg[t])
                elif state[t] == 2:
                    viol = g[t] + lam * sg[t]
                else:
                    continue
                if viol > worst:
                    worst = viol
                    jw = t
            if jw < 0:
                ok = True
                break
            state[jw] = 0
    return ok, beta, state

def _partition_impl(K, L, y, C, eps, state):
    """Solution determined by a partition alone; returns ``(ok, beta)``."""
    n = y.shape[0]
    m = 2 * n
    r = L.shape[1]
    sg = np.ones(m)
    sg[n:] = -1.0
    beta = np.zeros(m)
    nf = 0
    csum = 0.0
    for t in range(m):
        if state[t] == 2:
            beta[t] = C
            csum -= sg[t] * C
        elif state[t] == 0:
            nf += 1
    f = K @ (beta[:n] - beta[n:])
    g = np.empty(m)
    g[:n] = f + eps - y
    g[n:] = -f + eps + y
    if nf == 0:
        return abs(csum) <= 1e-12 * C * m, beta
    gtol = 1e-9 * (1.0 + np.abs(g).max())
    F = np.empty(nf, dtype=np.int64)
    u = 0
    for t in range(m):
        if state[t] == 0:
            F[u] = t
            u += 1
    B = np.empty((nf, r))
    sF = np.empty(nf)
    hF = np.empty(nf)
    for u in range(nf):
        i = F[u]
        k = i - n if i >= n else i
        sF[u] = sg[i]
        hF[u] = -g[i]
        for col in range(r):
            B[u, col] = sg[i] * L[k, col]
    consistent, x, _ = _range_solve(B, sF, hF, csum, gtol)
    if not consistent:
        return False, beta
    for u in range(nf):
        v = x[u]
        if v < -1e-9 * C or v > C * (1.0 + 1e-9):
            return False, beta
        beta[F[u]] = min(max(v, 0.0), C)
    return True, beta


@njit
def _smo_numba(K, y, C, eps, tol, max_iter):
    n = y.shape[0]
    a = np.zeros(n)
    s = np.zeros(n)
    G1 = eps - y
    G2 = eps + y
    Kd = np.empty(n)
    for t in range(n):
        Kd[t] = K[t, t]
    polish_every = 2 * n
    L = np.zeros((n, 0))
    have_L = False

    n_iter = 0
    gap = np.inf
    converged = False
    while True:
        # i: maximal violator over I_up, stacked order a then a*
        gmax = -np.inf
        i = -1
        for t in range(n):
            if a[t] < C and -G1[t] > gmax:
                gmax = -G1[t]
                i = t
        for t in range(n):
            if s[t] > 0.0 and G2[t] > gmax:
                gmax = G2[t]
                i = t + n
        gmax2 = -np.inf
        j = -1
        best = np.inf
        if i >= 0:
            bi = i - n if i >= n else i
            for t in range(n):
                if a[t] > 0.0:
                    if G1[t] > gmax2:
                        gmax2 = G1[t]
                    diff = gmax + G1[t]
                    if diff > 0.0:
                        quad = Kd[bi] + Kd[t] - 2.0 * K[bi, t]
                        if quad <= 0.0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj < best:
                            best = obj
                            j = t
            for t in range(n):
                if s[t] < C:
                    if -G2[t] > gmax2:
                        gmax2 = -G2[t]
                    diff = gmax - G2[t]
                    if diff > 0.0:
                        quad = Kd[bi] + Kd[t] - 2.0 * K[bi, t]
                        if quad <= 0.0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj < best:
                            best = obj
                            j = t + n
        gap = gmax + gmax2
        if i < 0 or j < 0 or gap < tol:
            converged = True
            break
        if n_iter >= max_iter:
            break
        n_iter += 1

        bi = i - n if i >= n else i
        bj = j - n if j >= n else j
        quad = Kd[bi] + Kd[bj] - 2.0 * K[bi, bj]
        if quad <= 0.0:
            quad = _TAU
        si = 1.0 if i < n else -1.0
        sj = 1.0 if j < n else -1.0
        old_i = a[bi] if i < n else s[bi]
        old_j = a[bj] if j < n else s[bj]
        Gi = G1[bi] if i < n else G2[bi]
        Gj = G1[bj] if j < n else G2[bj]
        if si != sj:
            delta = (-Gi - Gj) / quad
            diff = old_i - old_j
            ai = old_i + delta
            aj = old_j + delta
            if diff > 0.0:
                if aj < 0.0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = -diff
            if diff > 0.0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            delta = (Gi - Gj) / quad
            total = old_i + old_j
            ai = old_i - delta
            aj = old_j + delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0.0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = total
        if i < n:
            a[bi] = ai
        else:
            s[bi] = ai
        if j < n:
            a[bj] = aj
        else:
            s[bj] = aj
        dai = (ai - old_i) * si
        daj = (aj - old_j) * sj
        for t in range(n):
            u = K[bi, t] * dai + K[bj, t] * daj
            G1[t] += u
            G2[t] -= u

        if n_iter % polish_every == 0:
            if not have_L:
                L = _pchol_numba(K, _PCHOL_RTOL)
                have_L = True
            beta = np.empty(2 * n)
            beta[:n] = a
            beta[n:] = s
            ok, pb, _ = _active_set_numba(K, L, y, C, eps, beta, _AS_STEPS)
            if ok:
                pa = pb[:n].copy()
                ps = pb[n:].copy()
                f = K @ (pa - ps)
                pG1 = f + eps - y
                pG2 = -f + eps + y
                pgap = _gap_numba(pa, ps, pG1, pG2, C)
                if pgap < tol:
                    a = pa
                    s = ps
                    G1 = pG1
                    G2 = pG2
                    gap = pgap
                    converged = True
                    break

    beta = np.empty(2 * n)
    beta[:n] = a
    beta[n:] = s
    rho = _rho_numba(a, s, G1, G2, C)
    return beta, rho, n_iter, gap, converged


def _smo_numpy(K, y, C, eps, tol, max_iter):
    n = y.shape[0]
    a = np.zeros(n)
    s = np.zeros(n)
    G1 = eps - y
    G2 = eps + y
    Kd = np.diag(K).copy()
    polish_every = 2 * n
    L = None

    n_iter = 0
    converged = False
    while True:
        up = np.concatenate([np.where(a < C, -G1, -np.inf), np.where(s > 0.0, G2, -np.inf)])
        low_score = np.concatenate([np.where(a > 0.0, G1, -np.inf),
                                    np.where(s < C, -G2, -np.inf)])
        i = int(np.argmax(up))
        gmax = up[i]
        if gmax == -np.inf:
            i = -1
        gmax2 = low_score.max()
        j = -1
        if i >= 0:
            bi = i % n
            diff = gmax + low_score
            quad = Kd[bi] + Kd - 2.0 * K[bi]
            quad = np.where(quad <= 0.0, _TAU, quad)
            quad = np.concatenate([quad, quad])
            cand = (low_score > -np.inf) & (diff > 0.0)
            if cand.any():
                obj = np.where(cand, -(diff * diff) / quad, np.inf)
                j = int(np.argmin(obj))
        gap = gmax + gmax2
        if i < 0 or j < 0 or gap < tol:
            converged = True
            break
        if n_iter >= max_iter:
            break
        n_iter += 1

        bi, bj = i % n, j % n
        quad = Kd[bi] + Kd[bj] - 2.0 * K[bi, bj]
        if quad <= 0.0:
            quad = _TAU
        si = 1.0 if i < n else -1.0
        sj = 1.0 if j < n else -1.0
        old_i = a[bi] if i < n else s[bi]
        old_j = a[bj] if j < n else s[bj]
        Gi = G1[bi] if i < n else G2[bi]
        Gj = G1[bj] if j < n else G2[bj]
        if si != sj:
            delta = (-Gi - Gj) / quad
            diff = old_i - old_j
            ai, aj = old_i + delta, old_j + delta
            if diff > 0.0:
                if aj < 0.0:
                    ai, aj = diff, 0.0
            elif ai < 0.0:
                ai, aj = 0.0, -diff
            if diff > 0.0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                ai, aj = C + diff, C
        else:
            delta = (Gi - Gj) / quad
            total = old_i + old_j
            ai, aj = old_i - delta, old_j + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0.0:
                ai, aj = total, 0.0
            if total > C:
                if aj > C:
                    ai, aj = total - C, C
            elif ai < 0.0:
                ai, aj = 0.0, total
        if i < n:
            a[bi] = ai
        else:
            s[bi] = ai
        if j < n:
            a[bj] = aj
        else:
            s[bj] = aj
        u = K[bi] * ((ai - old_i) * si) + K[bj] * ((aj - old_j) * sj)
        G1 += u
        G2 -= u

        if n_iter % polish_every == 0:
            if L is None:
                L = _pchol_numpy(K, _PCHOL_RTOL)
            ok, pb, _ = _active_set_numpy(K, L, y, C, eps, np.concatenate([a, s]), _AS_STEPS)
            if ok:
                pa, ps = pb[:n].copy(), pb[n:].copy()
                f = K @ (pa - ps)
                pG1, pG2 = f + eps - y, -f + eps + y
                pgap = _gap_numpy(pa, ps, pG1, pG2, C)
                if pgap < tol:
                    a, s, G1, G2, gap = pa, ps, pG1, pG2, pgap
                    converged = True
                    break

    beta = np.concatenate([a, s])
    rho = _rho_numpy(a, s, G1, G2, C)
    return beta, rho, n_iter, gap, converged


# --------------------------------------------------------------------------
# kernel expansion f(x) = sum_j coef_j K(x_j, x) + bias
# --------------------------------------------------------------------------


@njit
def _expand_numba(coef, Kq, bias):
    n, nq = Kq.shape
    out = np.empty(nq)
    for q in range(nq):
        s = 0.0
        for j in range(n):
            s += coef[j] * Kq[j, q]
        out[q] = s + bias
    return out


def _expand_numpy(coef, Kq, bias):
    return coef @ Kq + bias


def _exact_impl(K, L, y, C, eps, tol, max_iter, beta0, warm):
    n = y.shape[0]
    n_iter = 0
    ok = False
    beta = beta0
    state = np.zeros(2 * n, dtype=np.int64)
    if warm:
        ok, beta, state = _active_set(K, L, y, C, eps, beta0, _AS_STEPS)
    if not ok:
        beta, _, n_iter, _, _ = _smo(K, y, C, eps, tol, max_iter)
        ok, b2, state = _active_set(K, L, y, C, eps, beta, _AS_STEPS)
        if ok:
            beta = b2
    if ok:
        okc, bc = _partition(K, L, y, C, eps, state)
        if okc:
            ac = bc[:n].copy()
            sc = bc[n:].copy()
            f = K @ (ac - sc)
            if _gap(ac, sc, f + eps - y, -f + eps + y, C) < tol:
                beta = bc
    a = beta[:n].copy()
    s = beta[n:].copy()
    f = K @ (a - s)
    G1 = f + eps - y
    G2 = -f + eps + y
    gap = _gap(a, s, G1, G2, C)
    out = np.empty(2 * n)
    out[:n] = a
    out[n:] = s
    return out, _rho(a, s, G1, G2, C), n_iter, gap, gap < tol


@njit
def _svr_exact_numba(K, y, C, eps, tol, max_iter):
    L = _pchol_numba(K, _PCHOL_RTOL)
    return _exact_numba(K, L, y, C, eps, tol, max_iter, np.zeros(2 * y.shape[0]), False)


def _svr_exact_numpy(K, y, C, eps, tol, max_iter):
    L = _pchol_numpy(K, _PCHOL_RTOL)
    return _exact_numpy(K, L, y, C, eps, tol, max_iter, np.zeros(2 * y.shape[0]), False)


def _svr_batch_impl(K, y, Kq, Cs, epss, tol, max_iter, exact_mode):
    """Fit one SVR per ``(Cs[c], epss[c])`` and predict ``Kq`` columns.

    In exact mode each fit warm-starts from the previous one (rescaled to
    the new ``C``); the partition solve makes the answers identical to
    cold fits, so callers should order combos so neighbours are close.
    """
    n = y.shape[0]
    nc = Cs.shape[0]
    preds = np.empty((nc, Kq.shape[1]))
    iters = np.empty(nc, dtype=np.int64)
    conv = np.empty(nc, dtype=np.bool_)
    L = _pchol(K, _PCHOL_RTOL) if exact_mode else np.zeros((n, 0))
    prev = np.zeros(2 * n)
    prev_c = 1.0
    for c in range(nc):
        if exact_mode:
            start = prev * (Cs[c] / prev_c)
            for t in range(2 * n):
                if prev[t] >= prev_c:
                    start[t] = Cs[c]
            beta, rho, it, gap, ok = _exact(K, L, y, Cs[c], epss[c], tol, max_iter,
                                           start, c > 0)
            prev = beta
            prev_c = Cs[c]
        else:
            beta, rho, it, gap, ok = _smo(K, y, Cs[c], epss[c], tol, max_iter)
        coef = beta[:n] - beta[n:]
        preds[c] = _expand(coef, Kq, -rho)
        iters[c] = it
        conv[c] = ok
    return preds, iters, conv


def _rebind(func, **names):
    """Copy of ``func`` with the given global names replaced."""
    scope = dict(func.__globals__)
    scope.update(names)
    return types.FunctionType(func.__code__, scope, func.__name__, func.__defaults__,
                              func.__closure__)


# The shared implementations above call generic names. Module-level bindings
# point them at the numba flavours (so compiled code caches across processes);
# the numpy flavours are copies rebound to numpy callees.
_range_solve = _range_solve_numba
_active_set_numba = njit(_active_set_impl)
_partition_numba = njit(_partition_impl)
_active_set = _active_set_numba
_partition = _partition_numba
_smo = _smo_numba
_gap = _gap_numba
_rho = _rho_numba
_pchol = _pchol_numba
_expand = _expand_numba
_exact_numba = njit(_exact_impl)
_exact = _exact_numba
_svr_batch_numba = njit(_svr_batch_impl)

_active_set_numpy = _rebind(_active_set_impl, _range_solve=_range_solve_impl)
_partition_numpy = _rebind(_partition_impl, _range_solve=_range_solve_impl)
_exact_numpy = _rebind(_exact_impl, _smo=_smo_numpy, _active_set=_active_set_numpy,
                       _partition=_partition_numpy, _gap=_gap_numpy, _rho=_rho_numpy)
_svr_batch_numpy = _rebind(_svr_batch_impl, _pchol=_pchol_numpy, _exact=_exact_numpy,
                           _smo=_smo_numpy, _expand=_expand_numpy)


# --------------------------------------------------------------------------
# zone lookup by point-in-polygon, boundaries inclusive
# --------------------------------------------------------------------------


@njit
def _in_polygon_numba(px, py, vx, vy, start, stop):
    inside = False
    for e in range(start, stop):
        f = e + 1 if e + 1 < stop else start
        x1 = vx[e]
        y1 = vy[e]
        x2 = vx[f]
        y2 = vy[f]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        seg = np.hypot(x2 - x1, y2 - y1)
        if (abs(cross) <= _EDGE_TOL * max(1.0, seg)
                and min(x1, x2) - _EDGE_TOL <= px <= max(x1, x2) + _EDGE_TOL
                and min(y1, y2) - _EDGE_TOL <= py <= max(y1, y2) + _EDGE_TOL):
            return True
        if (y1 > py) != (y2 > py):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xint:
                inside = not inside
    return inside


@njit
def _polygon_zones_numba(px, py, vx, vy, starts, zones):
    out = np.full(px.shape[0], -1, dtype=np.int64)
    n_poly = starts.shape[0] - 1
    for p in range(px.shape[0]):
        for k in range(n_poly):
            if _in_polygon_numba(px[p], py[p], vx, vy, starts[k], starts[k + 1]):
                out[p] = zones[k]
                break
    return out


def _in_polygon_numpy(px, py, vx, vy):
    inside = np.zeros(px.shape[0], dtype=bool)
    edge = np.zeros(px.shape[0], dtype=bool)
    nv = vx.shape[0]
    for e in range(nv):
        f = (e + 1) % nv
        x1, y1, x2, y2 = vx[e], vy[e], vx[f], vy[f]
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        seg = np.hypot(x2 - x1, y2 - y1)
        edge |= ((np.abs(cross) <= _EDGE_TOL * max(1.0, seg))
                 & (px >= min(x1, x2) - _EDGE_TOL) & (px <= max(x1, x2) + _EDGE_TOL)
                 & (py >= min(y1, y2) - _EDGE_TOL) & (py <= max(y1, y2) + _EDGE_TOL))
        straddle = (y1 > py) != (y2 > py)
        if y2 != y1:
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            inside ^= straddle & (px < xint)
    return inside | edge


def _polygon_zones_numpy(px, py, vx, vy, starts, zones):
    out = np.full(px.shape[0], -1, dtype=np.int64)
    for k in range(starts.shape[0] - 1):
        todo = out < 0
        if not todo.any():
            break
        sl = slice(starts[k], starts[k + 1])
        hit = _in_polygon_numpy(px[todo], py[todo], vx[sl], vy[sl])
        idx = np.flatnonzero(todo)[hit]
        out[idx] = zones[k]
    return out


if USE_NUMBA:
    lower_hull = _lower_hull_numba
    gram = _gram_numba
    smo_solve = _smo_numba
    svr_exact = _svr_exact_numba
    expand = _expand_numba
    svr_batch = _svr_batch_numba
    polygon_zones = _polygon_zones_numba
else:
    lower_hull = _lower_hull_numpy
    gram = _gram_numpy
    smo_solve = _smo_numpy
    svr_exact = _svr_exact_numpy
    expand = _expand_numpy
    svr_batch = _svr_batch_numpy
    polygon_zones = _polygon_zones_numpy
