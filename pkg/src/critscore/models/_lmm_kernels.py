"""Per-group linear mixed model kernels on sufficient statistics.

With ``D = diag(lam[scale_idx])``, ``G = Z'Z`` and ``M = sigma^2 I + D G D``,
Woodbury gives ``Sigma^{-1} = sigma^{-2} (I - Z K Z')`` where ``K = D M^{-1} D``,
and ``log|Sigma| = (r - q) log sigma^2 + log|M|``. Every quantity below is then a
``q``- or ``p``-dimensional expression in the cross products, so cost per group
does not grow with the group size. ``M`` stays positive definite at ``lam = 0``.

Each kernel has a numba loop version and a batched numpy version; both are
selected by :data:`critscore._accel.USE_NUMBA` through the public dispatchers.
"""

import numpy as np

from .._accel import USE_NUMBA, njit

LOG_2PI = np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# numba loop kernels
# ---------------------------------------------------------------------------


@njit
def _chol_inverse(M, out):
    q = M.shape[0]
    L = np.zeros((q, q))
    logdet = 0.0
    for j in range(q):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            return np.nan
        L[j, j] = np.sqrt(s)
        logdet += 2.0 * np.log(L[j, j])
        for i in range(j + 1, q):
            t = M[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    # invert L then form L^{-T} L^{-1}
    Li = np.zeros((q, q))
    for j in range(q):
        Li[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, q):
            t = 0.0
            for k in range(j, i):
                t -= L[i, k] * Li[k, j]
            Li[i, j] = t / L[i, i]
    for i in range(q):
        for j in range(i + 1):
            t = 0.0
            for k in range(i, q):
                t += Li[k, i] * Li[k, j]
            out[i, j] = t
            out[j, i] = t
    return logdet


@njit
def _profile_terms_nb(ld, sigma2, ZtZ, ZtX, Zty, XtX, Xty, yty, r):
    n, q, p = ZtX.shape
    Minv = np.empty((q, q))
    K = np.empty((q, q))
    Kzy = np.empty(q)
    KZX = np.empty((q, p))
    logdet = 0.0
    yQy = 0.0
    XQy = np.zeros(p)
    XQX = np.zeros((p, p))
    for g in range(n):
        M = np.empty((q, q))
        for a in range(q):
            for b in range(q):
                M[a, b] = ld[a] * ZtZ[g, a, b] * ld[b]
            M[a, a] += sigma2
        lm = _chol_inverse(M, Minv)
        if np.isnan(lm):
            return np.nan, np.nan, XQy, XQX
        logdet += (r[g] - q) * np.log(sigma2) + lm
        for a in range(q):
            for b in range(q):
                K[a, b] = ld[a] * Minv[a, b] * ld[b]
        for a in range(q):
            t = 0.0
            for b in range(q):
                t += K[a, b] * Zty[g, b]
            Kzy[a] = t
            for c in range(p):
                t = 0.0
                for b in range(q):
                    t += K[a, b] * ZtX[g, b, c]
                KZX[a, c] = t
        t = yty[g]
        for a in range(q):
            t -= Zty[g, a] * Kzy[a]
        yQy += t / sigma2
        for c in range(p):
            t = Xty[g, c]
            for a in range(q):
                t -= ZtX[g, a, c] * Kzy[a]
            XQy[c] += t / sigma2
            for e in range(p):
                t = XtX[g, c, e]
                for a in range(q):
                    t -= ZtX[g, a, c] * KZX[a, e]
                XQX[c, e] += t / sigma2
    return logdet, yQy, XQy, XQX


@njit
def _group_terms_nb(ld, sigma, psi, scale_idx, d1, ZtZ, ZtX, Zty, XtX, Xty, yty, r):
    n, q, p = ZtX.shape
    s2 = sigma * sigma
    s4 = s2 * s2
    loglik = np.empty(n)
    xi = np.zeros((n, d1))
    spsi = np.empty((n, p))
    ssig = np.empty(n)
    C = np.zeros((d1, d1))
    Csig = np.zeros(d1)
    Vsig = 0.0
    XQX = np.zeros((p, p))
    Minv = np.empty((q, q))
    K = np.empty((q, q))
    KG = np.empty((q, q))
    A = np.empty((q, q))
    P = np.empty((q, q))
    ze = np.empty(q)
    Kze = np.empty(q)
    GKze = np.empty(q)
    KZX = np.empty((q, p))
    for g in range(n):
        M = np.empty((q, q))
        for a in range(q):
            for b in range(q):
                M[a, b] = ld[a] * ZtZ[g, a, b] * ld[b]
            M[a, a] += s2
        lm = _chol_inverse(M, Minv)
        logdet = (r[g] - q) * np.log(s2) + lm
        for a in range(q):
            for b in range(q):
                K[a, b] = ld[a] * Minv[a, b] * ld[b]
        for a in range(q):
            for b in range(q):
                t = 0.0
                for c in range(q):
                    t += K[a, c] * ZtZ[g, c, b]
                KG[a, b] = t
        # residual cross products at psi
        ee = yty[g]
        for c in range(p):
            ee -= 2.0 * psi[c] * Xty[g, c]
            for e in range(p):
                ee += psi[c] * XtX[g, c, e] * psi[e]
        for a in range(q):
            t = Zty[g, a]
            for c in range(p):
                t -= ZtX[g, a, c] * psi[c]
            ze[a] = t
        for a in range(q):
            t = 0.0
            for b in range(q):
                t += K[a, b] * ze[b]
            Kze[a] = t
        for a in range(q):
            t = 0.0
            for b in range(q):
                t += ZtZ[g, a, b] * Kze[b]
            GKze[a] = t
        zKz = 0.0
        kgk = 0.0
        for a in range(q):
            zKz += ze[a] * Kze[a]
            kgk += Kze[a] * GKze[a]
        loglik[g] = -0.5 * (r[g] * LOG_2PI + logdet + (ee - zKz) / s2)
        # A = Z' Sigma^{-1} Z, b = Z' Sigma^{-1} e; xi_j = sum_[j] (b_k^2 - A_kk)
        for a in range(q):
            for b in range(q):
                t = ZtZ[g, a, b]
                for c in range(q):
                    t -= ZtZ[g, a, c] * KG[c, b]
                A[a, b] = t / s2
        for k in range(q):
            bk = (ze[k] - GKze[k]) / s2
            xi[g, scale_idx[k]] += bk * bk - A[k, k]
        for k in range(q):
            for m in range(q):
                C[scale_idx[k], scale_idx[m]] += 2.0 * A[k, m] * A[k, m]
        # fixed effects
        for a in range(q):
            for c in range(p):
                t = 0.0
                for b in range(q):
                    t += K[a, b] * ZtX[g, b, c]
                KZX[a, c] = t
        for c in range(p):
            t = Xty[g, c]
            for e in range(p):
                t -= XtX[g, c, e] * psi[e]
            for a in range(q):
                t -= ZtX[g, a, c] * Kze[a]
            spsi[g, c] = t / s2
            for e in range(p):
                t = XtX[g, c, e]
                for a in range(q):
                    t -= ZtX[g, a, c] * KZX[a, e]
                XQX[c, e] += t / s2
        # error scale
        trKG = 0.0
        trKGKG = 0.0
        for a in range(q):
            trKG += KG[a, a]
            for b in range(q):
                trKGKG += KG[a, b] * KG[b, a]
        trQ = (r[g] - trKG) / s2
        eQ2e = (ee - 2.0 * zKz + kgk) / s4
        ssig[g] = sigma * (eQ2e - trQ)
        Vsig += 2.0 * s2 * (r[g] - 2.0 * trKG + trKGKG) / s4
        for a in range(q):
            for b in range(q):
                P[a, b] = ((1.0 if a == b else 0.0) - KG[a, b]) / s2
        for k in range(q):
            t = 0.0
            for a in range(q):
                for b in range(q):
                    t += P[a, k] * ZtZ[g, a, b] * P[b, k]
            Csig[scale_idx[k]] += 2.0 * sigma * t
    return loglik, xi, spsi, ssig, C, Csig, Vsig, XQX


# ---------------------------------------------------------------------------
# batched numpy kernels
# ---------------------------------------------------------------------------


def _woodbury_np(ld, sigma2, ZtZ, r):
    q = ZtZ.shape[1]
    M = ld[None, :, None] * ZtZ * ld[None, None, :] + sigma2 * np.eye(q)[None]
    L = np.linalg.cholesky(M)
    lm = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    Minv = np.linalg.inv(M)
    K = ld[None, :, None] * Minv * ld[None, None, :]
    logdet = (r - q) * np.log(sigma2) + lm
    return K, logdet


def _profile_terms_np(ld, sigma2, ZtZ, ZtX, Zty, XtX, Xty, yty, r):
    try:
        K, logdet = _woodbury_np(ld, sigma2, ZtZ, r)
    except np.linalg.LinAlgError:
        p = ZtX.shape[2]
        return np.nan, np.nan, np.zeros(p), np.zeros((p, p))
    Kzy = np.einsum("gab,gb->ga", K, Zty)
    KZX = np.einsum("gab,gbc->gac", K, ZtX)
    yQy = np.sum(yty - np.einsum("ga,ga->g", Zty, Kzy)) / sigma2
    XQy = (Xty - np.einsum("gac,ga->gc", ZtX, Kzy)).sum(axis=0) / sigma2
    XQX = (XtX - np.einsum("gac,gae->gce", ZtX, KZX)).sum(axis=0) / sigma2
    return logdet.sum(), yQy, XQy, XQX


def _group_terms_np(ld, sigma, psi, scale_idx, d1, ZtZ, ZtX, Zty, XtX, Xty, yty, r):
    n, q, p = ZtX.shape
    s2 = sigma * sigma
    K, logdet = _woodbury_np(ld, s2, ZtZ, r)
    KG = K @ ZtZ
    ee = yty - 2.0 * Xty @ psi + np.einsum("c,gce,e->g", psi, XtX, psi)
    ze = Zty - ZtX @ psi
    Kze = np.einsum("gab,gb->ga", K, ze)
    GKze = np.einsum("gab,gb->ga", ZtZ, Kze)
    zKz = np.einsum("ga,ga->g", ze, Kze)
    kgk = np.einsum("ga,ga->g", Kze, GKze)
    loglik = -0.5 * (r * LOG_2PI + logdet + (ee - zKz) / s2)

    A = (ZtZ - ZtZ @ KG) / s2
    bvec = (ze - GKze) / s2
    onehot = np.zeros((q, d1))
    onehot[np.arange(q), scale_idx] = 1.0
    xi = (bvec**2 - np.diagonal(A, axis1=1, axis2=2)) @ onehot
    C = onehot.T @ (2.0 * (A**2).sum(axis=0)) @ onehot

    xe = Xty - XtX @ psi
    spsi = (xe - np.einsum("gac,ga->gc", ZtX, Kze)) / s2
    KZX = K @ ZtX
    XQX = (XtX - np.einsum("gac,gae->gce", ZtX, KZX)).sum(axis=0) / s2

    trKG = np.trace(KG, axis1=1, axis2=2)
    trKGKG = np.einsum("gab,gba->g", KG, KG)
    trQ = (r - trKG) / s2
    ssig = sigma * ((ee - 2.0 * zKz + kgk) / s2**2 - trQ)
    Vsig = np.sum(2.0 * s2 * (r - 2.0 * trKG + trKGKG) / s2**2)
    P = (np.eye(q)[None] - KG) / s2
    zq2z = np.einsum("gak,gab,gbk->gk", P, ZtZ, P)
    Csig = 2.0 * sigma * zq2z.sum(axis=0) @ onehot
    return loglik, xi, spsi, ssig, C, Csig, Vsig, XQX


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def profile_terms(ld, sigma2, stats, use_numba=None):
    """Sums of ``log|Sigma_i|``, ``y'Q y``, ``X'Q y`` and ``X'Q X`` with ``Q = Sigma^{-1}``."""
    fast = USE_NUMBA if use_numba is None else use_numba
    fn = _profile_terms_nb if fast else _profile_terms_np
    return fn(np.ascontiguousarray(ld, dtype=np.float64), float(sigma2), *stats)


def group_terms(ld, sigma, psi, scale_idx, d1, stats, use_numba=None):
    """Per-group loglik, xi, psi-score, sigma-score and summed information pieces."""
    fast = USE_NUMBA if use_numba is None else use_numba
    fn = _group_terms_nb if fast else _group_terms_np
    return fn(np.ascontiguousarray(ld, dtype=np.float64), float(sigma),
              np.ascontiguousarray(psi, dtype=np.float64), scale_idx, int(d1), *stats)
