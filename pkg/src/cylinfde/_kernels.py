"""Fused row-wise kernels for the network engine.

A pass processes V "value" rows, the first T of which carry a paired
tangent row (forward-mode directional derivative).  Kernels run parallel
over row chunks with fixed chunk boundaries, so every reduction has a
deterministic order for a given thread count.  Row reductions accumulate
in float64 regardless of array dtype.

Per value row (s = activation output feeding the norm):
    mu = mean(s); z = s - mu; var = mean(z^2); inv = 1/sqrt(var + eps)
    sh = z * inv; h = gamma * sh + beta
per tangent row, with ds = c * dp the activation tangent:
    dz = ds - mean(ds); m2 = mean(sh * dz)
    dsh = (dz - sh * m2) * inv; dh = gamma * dsh
"""

import numba
import numpy as np

NB_OPTS = dict(parallel=True, fastmath=True, cache=True)


@numba.njit(**NB_OPTS)
def ln_fwd(s, c, dp, gamma, beta, h, dh, sh, inv, m2, dmu, eps):
    """Layer-norm forward over V value rows and T <= V tangent rows.

    s, c: (V, W) activation values and first derivatives; dp: (T, W) tangent
    pre-activations; h: (V, W); dh: (T, W); sh: (V, W); inv: (V,);
    m2, dmu: (T,).
    """
    v, w = s.shape
    t = dp.shape[0]
    for i in numba.prange(v):
        mu = 0.0
        for j in range(w):
            mu += s[i, j]
        mu /= w
        var = 0.0
        for j in range(w):
            d = s[i, j] - mu
            var += d * d
        var /= w
        iv = 1.0 / np.sqrt(var + eps)
        inv[i] = iv
        for j in range(w):
            shv = (s[i, j] - mu) * iv
            sh[i, j] = shv
            h[i, j] = gamma[j] * shv + beta[j]
        if i < t:
            dm = 0.0
            for j in range(w):
                dm += c[i, j] * dp[i, j]
            dm /= w
            dmu[i] = dm
            mm = 0.0
            for j in range(w):
                mm += sh[i, j] * (c[i, j] * dp[i, j] - dm)
            mm /= w
            m2[i] = mm
            for j in range(w):
                dz = c[i, j] * dp[i, j] - dm
                dh[i, j] = gamma[j] * (dz - sh[i, j] * mm) * iv


@numba.njit(**NB_OPTS)
def ln_bwd(gh, gdh, n2, c, dp, sh, inv, m2, dmu, gamma, gp, gdp, acc_g, acc_b):
    """Backward of activation -> layer norm for mixed value/tangent rows.

    gh: (V, W) upstream gradient on h; gdh: (T, W) upstream gradient on dh;
    n2: (V, W) negated second derivative of the activation (sin values for
    the sin activation, zeros for identity); c: (V, W) first derivative.
    Writes pre-activation gradients gp (V, W) and gdp (T, W); accumulates
    gain/bias gradients into per-chunk rows of acc_g/acc_b.
    """
    v, w = gh.shape
    t = gdh.shape[0]
    nc = acc_g.shape[0]
    chunk = (v + nc - 1) // nc
    for ci in numba.prange(nc):
        lo = ci * chunk
        hi = min(v, lo + chunk)
        for i in range(lo, hi):
            iv = inv[i]
            if i < t:
                mm = m2[i]
                dm = dmu[i]
                # reductions: a1 = mean(G*sh), sum(G*dz), and acc over F~
                a1 = 0.0
                g_dz_sum = 0.0
                for j in range(w):
                    g = gamma[j] * gdh[i, j]
                    dz = c[i, j] * dp[i, j] - dm
                    a1 += g * sh[i, j]
                    g_dz_sum += g * dz
                    acc_b[ci, j] += gh[i, j]
                a1 /= w
                mft = 0.0
                mgdz = 0.0
                g_sh_sum = 0.0
                for j in range(w):
                    g = gamma[j] * gdh[i, j]
                    f = gamma[j] * gh[i, j]
                    shv = sh[i, j]
                    dz = c[i, j] * dp[i, j] - dm
                    ft = f - iv * (mm * g + a1 * dz)
                    mft += ft
                    mgdz += iv * (g - a1 * shv)
                    g_sh_sum += ft * shv
                mft /= w
                mgdz /= w
                g_inv = g_dz_sum - mm * (a1 * w) + g_sh_sum / iv
                g_v2 = -0.5 * iv * iv * iv * g_inv
                two_gv2_w = 2.0 * g_v2 / w
                mgz = mft * iv  # mean(z) = 0, so only F~ contributes
                for j in range(w):
                    g = gamma[j] * gdh[i, j]
                    f = gamma[j] * gh[i, j]
                    shv = sh[i, j]
                    dz = c[i, j] * dp[i, j] - dm
                    ft = f - iv * (mm * g + a1 * dz)
                    gdz = iv * (g - a1 * shv)
                    gds = gdz - mgdz
                    gz = ft * iv + two_gv2_w * (shv / iv)
                    gs = gz - mgz
                    gp[i, j] = c[i, j] * gs - n2[i, j] * dp[i, j] * gds
                    gdp[i, j] = c[i, j] * gds
                    dsh = (dz - shv * mm) * iv
                    acc_g[ci, j] += gh[i, j] * shv + gdh[i, j] * dsh
            else:
                mf = 0.0
                mfs = 0.0
                for j in range(w):
                    f = gamma[j] * gh[i, j]
                    mf += f
                    mfs += f * sh[i, j]
                    acc_g[ci, j] += gh[i, j] * sh[i, j]
                    acc_b[ci, j] += gh[i, j]
                mf /= w
                mfs /= w
                for j in range(w):
                    f = gamma[j] * gh[i, j]
                    gs = iv * (f - mf - sh[i, j] * mfs)
                    gp[i, j] = c[i, j] * gs


@numba.njit(**NB_OPTS)
def adamw_update(p, g, m, v, lr, wd, b1, b2, eps, bc1, bc2):
    n = p.shape[0]
    for i in numba.prange(n):
        pi = p[i] * (1.0 - lr * wd)
        mi = b1 * m[i] + (1.0 - b1) * g[i]
        vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        m[i] = mi
        v[i] = vi
        p[i] = pi - lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)
