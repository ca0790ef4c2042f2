"""NumPy reference implementations of the compiled kernels.

Same signatures and in-place semantics as ``_ckernels``; used when the
extension is not built or when ``DILUTION_LAB_KERNELS=python``.
"""

import numpy as np


def _popcount(a):
    a = np.asarray(a, dtype=np.uint64)
    out = np.zeros(a.shape, dtype=np.int64)
    for shift in range(0, 64, 8):
        out += _BYTE_POP[((a >> np.uint64(shift)) & np.uint64(255)).astype(np.intp)]
    return out


_BYTE_POP = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def ptm_x_layer(c, n, angles):
    dim = 1 << n
    mat = c.reshape(dim, dim)
    for a in range(n):
        cc, ss = np.cos(2 * angles[a]), np.sin(2 * angles[a])
        if ss == 0.0 and cc == 1.0:
            continue
        # row pairs split by x_a, columns with z_a = 1
        blk = mat.reshape(dim >> (a + 1), 2, 1 << a, dim >> (a + 1), 2, 1 << a)
        p = blk[:, 0, :, :, 1, :].copy()
        q = blk[:, 1, :, :, 1, :].copy()
        blk[:, 0, :, :, 1, :] = cc * p + ss * q
        blk[:, 1, :, :, 1, :] = cc * q - ss * p


def ptm_zz_layer(c, n, edges, angles):
    dim = 1 << n
    mat = c.reshape(dim, dim)
    xs = np.arange(dim)
    zs = np.arange(dim)
    for (a, b), ang in zip(np.asarray(edges), np.asarray(angles)):
        cc, ss = np.cos(2 * ang), np.sin(2 * ang)
        xa = (xs >> a) & 1
        xb = (xs >> b) & 1
        mask = (1 << a) | (1 << b)
        for hot, rows in ((a, xs[(xa == 1) & (xb == 0)]), (b, xs[(xa == 0) & (xb == 1)])):
            if rows.size == 0:
                continue
            rep = zs[((zs >> hot) & 1) == 0]
            par = rep ^ mask
            p0 = mat[np.ix_(rows, rep)]
            p1 = mat[np.ix_(rows, par)]
            mat[np.ix_(rows, rep)] = cc * p0 - ss * p1
            mat[np.ix_(rows, par)] = cc * p1 + ss * p0


def _site_counts(n, site_mask):
    dim = 1 << n
    v = np.arange(dim, dtype=np.uint64) & np.uint64(site_mask)
    x = v[:, None]
    z = v[None, :]
    return _popcount(x & ~z), _popcount(x & z), _popcount(z & ~x)


def ptm_site_channel(c, n, fx, fy, fz, site_mask):
    dim = 1 << n
    nx, ny, nz = _site_counts(n, site_mask)
    fac = np.power(fx, nx) * np.power(fy, ny) * np.power(fz, nz)
    c *= fac.reshape(dim * dim)


def ptm_edge_channel(c, n, a, b, table):
    dim = 1 << n
    v = np.arange(dim)
    da = ((v >> a) & 1)[:, None] + 2 * ((v >> a) & 1)[None, :]
    db = ((v >> b) & 1)[:, None] + 2 * ((v >> b) & 1)[None, :]
    c *= np.asarray(table)[4 * da + db].reshape(dim * dim)


def ptm_length_histograms(c, d, n):
    dim = 1 << n
    v = np.arange(dim, dtype=np.uint64)
    lengths = _popcount(v[:, None] | v[None, :]).reshape(-1)
    pr = c * d
    hcc = np.bincount(lengths, weights=c * c, minlength=n + 1)
    hcd = np.bincount(lengths, weights=pr, minlength=n + 1)
    had = np.bincount(lengths, weights=np.abs(pr), minlength=n + 1)
    return hcc, hcd, had


def sv_x_layer(psi, n, angles):
    for a in range(n):
        cc, ss = np.cos(angles[a]), np.sin(angles[a])
        if ss == 0.0:
            continue
        v = psi.reshape(-1, 2, 1 << a)
        p = v[:, 0, :].copy()
        q = v[:, 1, :].copy()
        v[:, 0, :] = cc * p - 1j * ss * q
        v[:, 1, :] = -1j * ss * p + cc * q


def sv_zz_gate(psi, n, a, b, angle):
    i = np.arange(1 << n)
    par = ((i >> a) ^ (i >> b)) & 1
    psi *= np.where(par == 1, np.exp(1j * angle), np.exp(-1j * angle))


def sv_apply_pauli(psi, n, xb, zb):
    i = np.arange(1 << n, dtype=np.uint64)
    ph = (1.0, 1j, -1.0, -1j)[bin(xb & zb).count("1") & 3]
    sign = 1 - 2 * (_popcount(i & np.uint64(zb)) & 1)
    out = np.empty_like(psi)
    out[(i ^ np.uint64(xb)).astype(np.intp)] = ph * sign * psi
    psi[:] = out


def mj_trotter_step(Q, N, x_angle, zz_angle):
    cx, sx = np.cos(2 * x_angle), np.sin(2 * x_angle)
    a, b = Q[0::2].copy(), Q[1::2].copy()
    Q[0::2] = cx * a + sx * b
    Q[1::2] = cx * b - sx * a
    cz, sz = np.cos(2 * zz_angle), np.sin(2 * zz_angle)
    a, b = Q[1:-1:2].copy(), Q[2::2].copy()
    Q[1:-1:2] = cz * a + sz * b
    Q[2::2] = cz * b - sz * a
    a, b = Q[-1].copy(), Q[0].copy()
    Q[-1] = cz * a - sz * b
    Q[0] = cz * b + sz * a
