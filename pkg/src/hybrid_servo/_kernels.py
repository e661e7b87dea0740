"""Compiled serial-chain kernels (standard D-H, revolute joints).

Conventions: frame 0 is the base, frame ``i+1`` is attached to link ``i``
(0-based), joint ``j`` rotates about ``z[j]`` through ``o[j]``. All vectors
are in base coordinates.
"""

import numpy as np
from numba import njit

_CACHE = True


@njit(cache=_CACHE)
def cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=_CACHE)
def skew3(w):
    S = np.zeros((3, 3))
    S[0, 1] = -w[2]
    S[0, 2] = w[1]
    S[1, 0] = w[2]
    S[1, 2] = -w[0]
    S[2, 0] = -w[1]
    S[2, 1] = w[0]
    return S


@njit(cache=_CACHE)
def mm(A, B):
    """Small dense product; avoids BLAS call overhead on 3x3-sized operands."""
    n, k = A.shape
    m = B.shape[1]
    C = np.zeros((n, m))
    for i in range(n):
        for p in range(k):
            a = A[i, p]
            if a != 0.0:
                for j in range(m):
                    C[i, j] += a * B[p, j]
    return C


@njit(cache=_CACHE)
def mv(A, x):
    n, k = A.shape
    y = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for p in range(k):
            acc += A[i, p] * x[p]
        y[i] = acc
    return y


@njit(cache=_CACHE)
def dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=_CACHE)
def dh_frames(dh, q):
    """Homogeneous frames 0..n, shape (n+1, 4, 4)."""
    n = dh.shape[0]
    T = np.zeros((n + 1, 4, 4))
    for k in range(4):
        T[0, k, k] = 1.0
    for i in range(n):
        a, alpha, d, off = dh[i, 0], dh[i, 1], dh[i, 2], dh[i, 3]
        th = q[i] + off
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(alpha), np.sin(alpha)
        A = np.array([
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ])
        T[i + 1] = mm(T[i], A)
    return T


@njit(cache=_CACHE)
def link_jacobians(T):
    """Linear (origin) and angular Jacobians of every link frame, (n, 3, n) each."""
    n = T.shape[0] - 1
    Jo = np.zeros((n, 3, n))
    Jw = np.zeros((n, 3, n))
    for i in range(n):
        oi = T[i + 1, :3, 3].copy()
        for j in range(i + 1):
            z = T[j, :3, 2].copy()
            Jo[i, :, j] = cross3(z, oi - T[j, :3, 3])
            Jw[i, :, j] = z
    return Jo, Jw


@njit(cache=_CACHE)
def mass_matrix(dh, q, mass, com, inertia):
    """Joint-space inertia from physical link parameters (COM-frame inertia)."""
    n = dh.shape[0]
    T = dh_frames(dh, q)
    Jo, Jw = link_jacobians(T)
    H = np.zeros((n, n))
    for i in range(n):
        R = T[i + 1, :3, :3].copy()
        rc = mv(R, com[i])
        Jc = Jo[i] - mm(skew3(rc), Jw[i])
        Iw = mm(mm(R, inertia[i]), R.T)
        H += mass[i] * mm(Jc.T, Jc) + mm(mm(Jw[i].T, Iw), Jw[i])
    return 0.5 * (H + H.T)


@njit(cache=_CACHE)
def rnea(dh, q, qd, qdd, gravity, mass, com, inertia):
    """Recursive Newton-Euler inverse dynamics in base coordinates."""
    n = dh.shape[0]
    T = dh_frames(dh, q)
    w = np.zeros(3)
    wd = np.zeros(3)
    a = -gravity.copy()
    F = np.zeros((n, 3))
    N = np.zeros((n, 3))
    rcs = np.zeros((n, 3))
    for i in range(n):
        z = T[i, :3, 2].copy()
        dp = T[i + 1, :3, 3] - T[i, :3, 3]
        w_prev = w.copy()
        w = w_prev + z * qd[i]
        wd = wd + z * qdd[i] + cross3(w_prev, z * qd[i])
        a = a + cross3(wd, dp) + cross3(w, cross3(w, dp))
        R = T[i + 1, :3, :3].copy()
        rc = mv(R, com[i])
        ac = a + cross3(wd, rc) + cross3(w, cross3(w, rc))
        Iw = mm(mm(R, inertia[i]), R.T)
        F[i] = mass[i] * ac
        N[i] = mv(Iw, wd) + cross3(w, mv(Iw, w))
        rcs[i] = rc
    tau = np.zeros(n)
    f = np.zeros(3)
    m = np.zeros(3)
    for i in range(n - 1, -1, -1):
        o_prev = T[i, :3, 3]
        o_i = T[i + 1, :3, 3]
        # moment about o_prev
        m = m + cross3(o_i - o_prev, f) + N[i] + cross3(o_i + rcs[i] - o_prev, F[i])
        f = f + F[i]
        tau[i] = dot3(T[i, :3, 2], m)
    return tau


@njit(cache=_CACHE)
def _sym_basis(r, c):
    E = np.zeros((3, 3))
    E[r, c] = 1.0
    E[c, r] = 1.0
    return E


@njit(cache=_CACHE)
def dynamics_basis(dh, q, gravity):
    """Per-parameter inertia, inertia gradient and gravity terms.

    The dynamics are linear in ten parameters per link, ordered
    ``[m, m*cx, m*cy, m*cz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]`` with the inertia
    taken about the link-frame origin. Returns

    * ``Hb[p]``      (n, n)     inertia contribution of unit parameter p
    * ``dHb[p, k]``  (n, n)     d Hb[p] / d q_k
    * ``gb[p]``      (n,)       gravity-torque contribution
    """
    n = dh.shape[0]
    P = 10 * n
    T = dh_frames(dh, q)
    Jo, Jw = link_jacobians(T)
    z = np.zeros((n + 1, 3))
    o = np.zeros((n + 1, 3))
    for m in range(n + 1):
        z[m] = T[m, :3, 2]
        o[m] = T[m, :3, 3]

    Hb = np.zeros((P, n, n))
    dHb = np.zeros((P, n, n, n))
    gb = np.zeros((P, n))

    sym = np.zeros((6, 3, 3))
    idx = 0
    for r in range(3):
        for c in range(r, 3):
            sym[idx] = _sym_basis(r, c)
            idx += 1

    for i in range(n):
        base = 10 * i
        R = T[i + 1, :3, :3].copy()
        Joi = Jo[i]
        Jwi = Jw[i]
        # derivatives of Jo, Jw, R w.r.t. q_k
        dJo = np.zeros((n, 3, n))
        dJw = np.zeros((n, 3, n))
        for k in range(i + 1):
            zk = z[k]
            do_i = cross3(zk, o[i + 1] - o[k])
            for j in range(i + 1):
                if k < j:
                    dz = cross3(zk, z[j])
                    do_j = cross3(zk, o[j] - o[k])
                else:
                    dz = np.zeros(3)
                    do_j = np.zeros(3)
                dJo[k, :, j] = cross3(dz, o[i + 1] - o[j]) + cross3(z[j], do_i - do_j)
                dJw[k, :, j] = dz

        # mass
        Hb[base] = mm(Joi.T, Joi)
        gb[base] = -mv(Joi.T, gravity)
        for k in range(n):
            M = mm(dJo[k].T, Joi)
            dHb[base, k] = M + M.T

        # first moments
        for c in range(3):
            p = R[:, c].copy()
            Pm = skew3(p)
            A = mm(mm(Joi.T, Pm), Jwi)
            Hb[base + 1 + c] = -(A + A.T)
            gb[base + 1 + c] = -mv(Jwi.T, cross3(p, gravity))
            for k in range(n):
                if k <= i:
                    dP = skew3(cross3(z[k], p))
                else:
                    dP = np.zeros((3, 3))
                dA = mm(mm(dJo[k].T, Pm), Jwi) + mm(mm(Joi.T, dP), Jwi) + mm(mm(Joi.T, Pm), dJw[k])
                dHb[base + 1 + c, k] = -(dA + dA.T)

        # origin inertia
        for e in range(6):
            M = mm(mm(R, sym[e]), R.T)
            Hb[base + 4 + e] = mm(mm(Jwi.T, M), Jwi)
            for k in range(n):
                if k <= i:
                    Z = skew3(z[k])
                    dM = mm(Z, M) - mm(M, Z)
                else:
                    dM = np.zeros((3, 3))
                B = mm(mm(dJw[k].T, M), Jwi)
                dHb[base + 4 + e, k] = B + B.T + mm(mm(Jwi.T, dM), Jwi)
    return Hb, dHb, gb


@njit(cache=_CACHE)
def christoffel_product(dH, qd, v):
    """``C(q, qd) @ v`` with C built from Christoffel symbols of ``dH[k] = dH/dq_k``."""
    n = qd.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            for k in range(n):
                acc += 0.5 * (dH[k, i, j] + dH[j, i, k] - dH[i, j, k]) * qd[k] * v[j]
        out[i] = acc
    return out


@njit(cache=_CACHE)
def christoffel_matrix(dH, qd):
    n = qd.shape[0]
    C = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += 0.5 * (dH[k, i, j] + dH[j, i, k] - dH[i, j, k]) * qd[k]
            C[i, j] = acc
    return C


@njit(cache=_CACHE)
def regressor(dh, gravity, q, qd, qrd, qrdd):
    """Dynamic regressor ``Y`` with ``Y @ theta = H qrdd + C(q, qd) qrd + g``."""
    Hb, dHb, gb = dynamics_basis(dh, q, gravity)
    P = Hb.shape[0]
    n = q.shape[0]
    Y = np.zeros((n, P))
    for p in range(P):
        Y[:, p] = mv(Hb[p], qrdd) + christoffel_product(dHb[p], qd, qrd) + gb[p]
    return Y


@njit(cache=_CACHE)
def forward_dynamics(dh, q, qd, tau, gravity, mass, com, inertia):
    H = mass_matrix(dh, q, mass, com, inertia)
    bias = rnea(dh, q, qd, np.zeros(q.shape[0]), gravity, mass, com, inertia)
    return np.linalg.solve(H, tau - bias), H


@njit(cache=_CACHE)
def rk4_step(dh, q, qd, tau, dt, gravity, mass, com, inertia):
    """One RK4 step of the rigid-body plant under a held torque."""
    k1q = qd
    k1v = forward_dynamics(dh, q, qd, tau, gravity, mass, com, inertia)[0]
    q2 = q + 0.5 * dt * k1q
    v2 = qd + 0.5 * dt * k1v
    k2v = forward_dynamics(dh, q2, v2, tau, gravity, mass, com, inertia)[0]
    q3 = q + 0.5 * dt * v2
    v3 = qd + 0.5 * dt * k2v
    k3v = forward_dynamics(dh, q3, v3, tau, gravity, mass, com, inertia)[0]
    q4 = q + dt * v3
    v4 = qd + dt * k3v
    k4v = forward_dynamics(dh, q4, v4, tau, gravity, mass, com, inertia)[0]
    q_new = q + dt / 6.0 * (k1q + 2 * v2 + 2 * v3 + v4)
    qd_new = qd + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return q_new, qd_new


# --- image-space kernels -------------------------------------------------------

@njit(cache=_CACHE)
def kinematic_signals(dh, q, y, y_src, eih):
    """Regressor signals for features ``y`` with target points read from ``y_src``.

    Returns ``D`` (k,3,3) (the depth-normalizing matrices), ``Z`` (k,39,n),
    ``E`` (k,3,3) and ``R_EB``. With ``eih`` the target point is expressed
    through the eye-in-hand camera itself (``y_src`` is then ``y``).
    """
    n = dh.shape[0]
    k = y.shape[0]
    T = dh_frames(dh, q)
    R_BE = T[n, :3, :3].copy()
    R_EB = R_BE.T.copy()
    t_BE = T[n, :3, 3].copy()
    X3 = np.zeros((n, 3, 3))
    x4 = np.zeros((n, 3))
    for j in range(n):
        z = T[j, :3, 2].copy()
        o = T[j, :3, 3].copy()
        X3[j] = -mm(R_EB, skew3(z))
        x4[j] = mv(R_EB, cross3(z, o))
    if eih:
        for j in range(n):
            x4[j] = x4[j] + mv(X3[j], t_BE)
            X3[j] = mm(X3[j], R_BE)
    D = np.zeros((k, 3, 3))
    E = np.zeros((k, 3, 3))
    Z = np.zeros((k, 39, n))
    for f in range(k):
        u, v, d = y[f, 0], y[f, 1], y[f, 2]
        D[f, 0, 0] = 1.0 / d
        D[f, 1, 1] = 1.0 / d
        D[f, 0, 2] = -u / d
        D[f, 1, 2] = -v / d
        D[f, 2, 2] = 1.0
        us, vs, ds = y_src[f, 0], y_src[f, 1], y_src[f, 2]
        E[f, 0, 0] = ds
        E[f, 1, 1] = ds
        E[f, 0, 2] = us
        E[f, 1, 2] = vs
        E[f, 2, 2] = 1.0
        yb = np.array([us * ds, vs * ds, ds, 1.0])
        for j in range(n):
            for a in range(3):
                for b in range(3):
                    x = X3[j, a, b]
                    for c in range(4):
                        Z[f, a * 12 + b * 4 + c, j] = x * yb[c]
                Z[f, 36 + a, j] = x4[j, a]
    return D, Z, E, R_EB


@njit(cache=_CACHE)
def regressor_k(D, Z, phi):
    """(3k, 117) with rows ``D[f] @ (Z[f] @ phi)`` laid out per output row."""
    k = D.shape[0]
    Y = np.zeros((3 * k, 117))
    for f in range(k):
        zp = mv(Z[f], phi)
        for r in range(3):
            for s in range(3):
                w = D[f, r, s]
                if w != 0.0:
                    for j in range(39):
                        Y[3 * f + r, s * 39 + j] += w * zp[j]
    return Y


@njit(cache=_CACHE)
def q_hat(D, Z, theta):
    k = D.shape[0]
    n = Z.shape[2]
    Q = np.zeros((3 * k, n))
    for f in range(k):
        AZ = np.zeros((3, n))
        for s in range(3):
            for j in range(39):
                t = theta[s * 39 + j]
                if t != 0.0:
                    for c in range(n):
                        AZ[s, c] += t * Z[f, j, c]
        Q[3 * f:3 * f + 3] = mm(D[f], AZ)
    return Q


@njit(cache=_CACHE)
def regressor_m(D, E, R_EB, phi):
    """(3k, 81) regressor of ``J phi`` for stacked ``phi``."""
    k = D.shape[0]
    W = np.zeros((3 * k, 81))
    for f in range(k):
        e = mv(E[f], phi[3 * f:3 * f + 3])
        w = np.zeros(27)
        for a in range(3):
            for b in range(3):
                for c in range(3):
                    w[a * 9 + b * 3 + c] = R_EB[a, b] * e[c]
        for r in range(3):
            for s in range(3):
                dv = D[f, r, s]
                if dv != 0.0:
                    for j in range(27):
                        W[3 * f + r, s * 27 + j] += dv * w[j]
    return W


@njit(cache=_CACHE)
def _pjac(intr, x):
    fku, fkv, u0, v0, cot, sin_s, mu = intr[0], intr[1], intr[2], intr[3], intr[4], intr[5], intr[6]
    z = x[2]
    P = np.zeros((3, 3))
    P[0, 0] = fku / z
    P[0, 1] = fku * cot / z
    P[0, 2] = -fku * (x[0] + cot * x[1]) / (z * z)
    P[1, 1] = fkv / (sin_s * z)
    P[1, 2] = -fkv * x[1] / (sin_s * z * z)
    P[2, 2] = mu
    return P


@njit(cache=_CACHE)
def _proj(intr, x):
    fku, fkv, u0, v0, cot, sin_s, mu = intr[0], intr[1], intr[2], intr[3], intr[4], intr[5], intr[6]
    out = np.empty(3)
    out[0] = fku * (x[0] + cot * x[1]) / x[2] + u0
    out[1] = fkv * x[1] / (x[2] * sin_s) + v0
    out[2] = mu * x[2]
    return out


@njit(cache=_CACHE)
def observe_points(dh, q, qd, R_eE, t_eE, R_fB, t_fB, intr_e, intr_f, x_B, v_B):
    """Features and exact rates in both cameras. Depths are returned so the
    caller can raise a visibility error; projection is skipped for points
    with non-positive depth."""
    n = dh.shape[0]
    k = x_B.shape[0]
    T = dh_frames(dh, q)
    Jo, Jw = link_jacobians(T)
    R_BE = T[n, :3, :3].copy()
    t_BE = T[n, :3, 3].copy()
    w = mv(Jw[n - 1], qd)
    vE = mv(Jo[n - 1], qd)
    y = np.zeros((k, 3))
    yf = np.zeros((k, 3))
    ydot = np.zeros((k, 3))
    yfdot = np.zeros((k, 3))
    depth = np.zeros((k, 2))
    for f in range(k):
        xf = mv(R_fB, x_B[f]) + t_fB
        r = x_B[f] - t_BE
        xE = mv(R_BE.T.copy(), r)
        xe = mv(R_eE, xE) + t_eE
        depth[f, 0] = xe[2]
        depth[f, 1] = xf[2]
        if xe[2] <= 0.0 or xf[2] <= 0.0:
            continue
        yf[f] = _proj(intr_f, xf)
        y[f] = _proj(intr_e, xe)
        yfdot[f] = mv(_pjac(intr_f, xf), mv(R_fB, v_B[f]))
        rel = v_B[f] - vE - cross3(w, r)
        ydot[f] = mv(_pjac(intr_e, xe), mv(R_eE, mv(R_BE.T.copy(), rel)))
    return y, yf, ydot, yfdot, depth
