# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for Pauli-basis and statevector propagation.

Pauli-basis vectors use the layout ``index = (x << n) | z`` where ``x`` and
``z`` are the bit-packed X and Z components of a Hermitian Pauli string.
The coefficient vector is real.  Every kernel acts in place.
"""

from libc.math cimport cos, sin
import numpy as np

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


def ptm_x_layer(double[::1] c, int n, double[::1] angles):
    """Conjugate by prod_a exp(-i angles[a] X_a).

    Sites are processed in groups of four so that the 16 rows mixed by a
    group stay cache resident while a column chunk is swept.
    """
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t width = 512
    cdef Py_ssize_t base, z0, zend, zs, z, off, r0, r1, s, step, hb
    cdef int a, g0, g1, gsize
    cdef double cc, ss, p, q
    cdef double* row0
    cdef double* row1
    cdef double[64] cs
    cdef double[64] sn
    if width > dim:
        width = dim
    for a in range(n):
        cs[a] = cos(2.0 * angles[a])
        sn[a] = sin(2.0 * angles[a])
    with nogil:
        g0 = 0
        while g0 < n:
            g1 = g0 + 4
            if g1 > n:
                g1 = n
            gsize = g1 - g0
            for base in range(dim):
                if (base >> g0) & ((1 << gsize) - 1):
                    continue
                z0 = 0
                while z0 < dim:
                    zend = z0 + width
                    for a in range(g0, g1):
                        if sn[a] == 0.0 and cs[a] == 1.0:
                            continue
                        cc = cs[a]
                        ss = sn[a]
                        hb = (<Py_ssize_t>1) << a
                        for off in range((<Py_ssize_t>1) << gsize):
                            r0 = base | (off << g0)
                            if r0 & hb:
                                continue
                            r1 = r0 | hb
                            row0 = &c[r0 * dim]
                            row1 = &c[r1 * dim]
                            if hb >= width:
                                if not (z0 & hb):
                                    continue
                                for z in range(z0, zend):
                                    p = row0[z]
                                    q = row1[z]
                                    row0[z] = cc * p + ss * q
                                    row1[z] = cc * q - ss * p
                            else:
                                zs = z0 + hb
                                while zs < zend:
                                    for z in range(zs, zs + hb):
                                        p = row0[z]
                                        q = row1[z]
                                        row0[z] = cc * p + ss * q
                                        row1[z] = cc * q - ss * p
                                    zs += 2 * hb
                    z0 = zend
            g0 = g1


def ptm_zz_layer(double[::1] c, int n, int[:, ::1] edges, double[::1] angles):
    """Conjugate by prod_e exp(-i angles[e] Z_a Z_b) (all factors commute)."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t m = edges.shape[0]
    cdef Py_ssize_t x, zhi, zmid, z, hb, e, lo, hi, ob
    cdef int a, b, xa, xb
    cdef double cc, ss, p0, p1
    cdef double* row
    cs_arr = np.cos(2.0 * np.asarray(angles))
    sn_arr = np.sin(2.0 * np.asarray(angles))
    cdef double[::1] cs = cs_arr
    cdef double[::1] sn = sn_arr
    with nogil:
        for x in range(dim):
            row = &c[x * dim]
            for e in range(m):
                a = edges[e, 0]
                b = edges[e, 1]
                xa = (x >> a) & 1
                xb = (x >> b) & 1
                if xa == xb:
                    continue
                if xa:
                    hb = (<Py_ssize_t>1) << a
                else:
                    hb = (<Py_ssize_t>1) << b
                if a < b:
                    lo = (<Py_ssize_t>1) << a
                    hi = (<Py_ssize_t>1) << b
                else:
                    lo = (<Py_ssize_t>1) << b
                    hi = (<Py_ssize_t>1) << a
                ob = (lo | hi) ^ hb
                cc = cs[e]
                ss = sn[e]
                zhi = 0
                while zhi < dim:
                    zmid = zhi
                    while zmid < zhi + hi:
                        for z in range(zmid, zmid + lo):
                            # pairs (z, z+h+o) and (z+o, z+h); representative has z_h = 0
                            p0 = row[z]
                            p1 = row[z + lo + hi]
                            row[z] = cc * p0 - ss * p1
                            row[z + lo + hi] = cc * p1 + ss * p0
                            p0 = row[z + ob]
                            p1 = row[z + hb]
                            row[z + ob] = cc * p0 - ss * p1
                            row[z + hb] = cc * p1 + ss * p0
                        zmid += 2 * lo
                    zhi += 2 * hi


def ptm_site_channel(double[::1] c, int n, double fx, double fy, double fz,
                     unsigned long long site_mask):
    """Multiply each coefficient by fx^#X fy^#Y fz^#Z counted on masked sites."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t z, x
    cdef unsigned long long ux, uz
    cdef int k
    cdef double[65] px
    cdef double[65] py
    cdef double[65] pz
    cdef double* row
    cdef bint uniform = (fx == fy and fy == fz)
    px[0] = 1.0
    py[0] = 1.0
    pz[0] = 1.0
    for k in range(1, n + 1):
        px[k] = px[k - 1] * fx
        py[k] = py[k - 1] * fy
        pz[k] = pz[k - 1] * fz
    with nogil:
        for x in range(dim):
            row = &c[x * dim]
            ux = <unsigned long long>x & site_mask
            if uniform:
                for z in range(dim):
                    uz = <unsigned long long>z & site_mask
                    row[z] *= px[__builtin_popcountll(ux | uz)]
            else:
                for z in range(dim):
                    uz = <unsigned long long>z & site_mask
                    row[z] *= (px[__builtin_popcountll(ux & ~uz)]
                               * py[__builtin_popcountll(ux & uz)]
                               * pz[__builtin_popcountll(uz & ~ux)])


def ptm_edge_channel(double[::1] c, int n, int a, int b, double[::1] table):
    """Multiply by table[4*d_a + d_b] with local digit d = x + 2z (I, X, Z, Y)."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t z, x
    cdef int xa, xb
    cdef double* row
    cdef double t0, t1, t2, t3
    with nogil:
        for x in range(dim):
            row = &c[x * dim]
            xa = (x >> a) & 1
            xb = (x >> b) & 1
            t0 = table[4 * xa + xb]
            t1 = table[4 * xa + xb + 2]
            t2 = table[4 * (xa + 2) + xb]
            t3 = table[4 * (xa + 2) + xb + 2]
            for z in range(dim):
                if (z >> a) & 1:
                    if (z >> b) & 1:
                        row[z] *= t3
                    else:
                        row[z] *= t2
                elif (z >> b) & 1:
                    row[z] *= t1
                else:
                    row[z] *= t0


def ptm_length_histograms(double[::1] c, double[::1] d, int n):
    """Per-length sums of c*c, c*d and |c*d| in one pass."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t z, x
    cdef int k
    hcc_arr = np.zeros(n + 1)
    hcd_arr = np.zeros(n + 1)
    had_arr = np.zeros(n + 1)
    cdef double[::1] hcc = hcc_arr
    cdef double[::1] hcd = hcd_arr
    cdef double[::1] had = had_arr
    cdef double cv, pr
    cdef double* rc
    cdef double* rd
    with nogil:
        for z in range(dim):
            rc = &c[z * dim]
            rd = &d[z * dim]
            for x in range(dim):
                cv = rc[x]
                k = __builtin_popcountll(<unsigned long long>(x | z))
                pr = cv * rd[x]
                hcc[k] += cv * cv
                hcd[k] += pr
                had[k] += pr if pr >= 0 else -pr
    return hcc_arr, hcd_arr, had_arr


def sv_x_layer(double complex[::1] psi, int n, double[::1] angles):
    """Apply prod_a exp(-i angles[a] X_a) to a statevector."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t j, i, s
    cdef int a
    cdef double cc, ss
    cdef double complex p, q, mis
    for a in range(n):
        cc = cos(angles[a])
        ss = sin(angles[a])
        if ss == 0.0:
            continue
        mis = -1j * ss
        s = (<Py_ssize_t>1) << a
        with nogil:
            j = 0
            while j < dim:
                for i in range(j, j + s):
                    p = psi[i]
                    q = psi[i + s]
                    psi[i] = cc * p + mis * q
                    psi[i + s] = mis * p + cc * q
                j += 2 * s


def sv_zz_gate(double complex[::1] psi, int n, int a, int b, double angle):
    """Apply exp(-i angle Z_a Z_b) to a statevector."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t i
    cdef double complex same = cos(angle) - 1j * sin(angle)
    cdef double complex diff = cos(angle) + 1j * sin(angle)
    with nogil:
        for i in range(dim):
            if ((i >> a) ^ (i >> b)) & 1:
                psi[i] = psi[i] * diff
            else:
                psi[i] = psi[i] * same


def sv_apply_pauli(double complex[::1] psi, int n, unsigned long long xb,
                   unsigned long long zb):
    """Apply the Hermitian Pauli string (x, z) to a statevector in place."""
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t i, j
    cdef int k = __builtin_popcountll(xb & zb) & 3
    cdef double complex ph = (1.0, 1j, -1.0, -1j)[k]
    cdef double complex vi, vj, si, sj
    with nogil:
        if xb == 0:
            for i in range(dim):
                if __builtin_popcountll(<unsigned long long>i & zb) & 1:
                    psi[i] = -ph * psi[i]
                else:
                    psi[i] = ph * psi[i]
        else:
            for i in range(dim):
                j = i ^ <Py_ssize_t>xb
                if j < i:
                    continue
                vi = psi[i]
                vj = psi[j]
                si = -ph if __builtin_popcountll(<unsigned long long>i & zb) & 1 else ph
                sj = -ph if __builtin_popcountll(<unsigned long long>j & zb) & 1 else ph
                psi[j] = si * vi
                psi[i] = sj * vj


cdef inline void _rot_rows(double* ra, double* rb, Py_ssize_t m, double c, double s) noexcept nogil:
    cdef Py_ssize_t i
    cdef double p, q
    for i in range(m):
        p = ra[i]
        q = rb[i]
        ra[i] = c * p + s * q
        rb[i] = c * q - s * p


def mj_trotter_step(double[:, ::1] Q, int N, double x_angle, double zz_angle):
    """One chain Trotter step on the rows of a Majorana mode matrix, in place.

    Rows (2j, 2j+1) rotate by 2*x_angle, rows (2j+1, 2j+2) by 2*zz_angle, and
    the boundary pair (2N-1, 0) by -2*zz_angle (antiperiodic closure).
    """
    cdef Py_ssize_t m = Q.shape[1]
    cdef Py_ssize_t j
    cdef double cx = cos(2.0 * x_angle), sx = sin(2.0 * x_angle)
    cdef double cz = cos(2.0 * zz_angle), sz = sin(2.0 * zz_angle)
    with nogil:
        for j in range(N):
            _rot_rows(&Q[2 * j, 0], &Q[2 * j + 1, 0], m, cx, sx)
        for j in range(N - 1):
            _rot_rows(&Q[2 * j + 1, 0], &Q[2 * j + 2, 0], m, cz, sz)
        _rot_rows(&Q[2 * N - 1, 0], &Q[0, 0], m, cz, -sz)
