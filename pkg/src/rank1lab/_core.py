"""Compiled kernels: geodesic vector fields, curvature, deck reduction and the
two-stage Gauss-Legendre integrator used by every model.

State layout is (x, y, theta, a, b).  The first three entries are the chart
position and the direction angle (measured in the orthonormal frame of the
chart).  The last two carry optional linearized data along the geodesic:

mode 0  plain geodesic, a and b untouched
mode 1  scalar Riccati variable u in a: u' = -u^2 - K
mode 2  Jacobi pair (J, J') in (a, b): J'' = -K J

Model codes: 0 constant octagon, 1 perturbed octagon, 2 cylinder with
funnels, 3 synthetic driver (a line with a prescribed curvature profile).
"""
import numpy as np
from numba import njit

KIND_CODES = {
    "constant-octagon": 0,
    "perturbed-octagon": 1,
    "flat-cylinder-funnels": 2,
    "synthetic-driver": 3,
}

_S3 = np.sqrt(3.0) / 6.0
_A11 = 0.25
_A12 = 0.25 - _S3
_A21 = 0.25 + _S3
_A22 = 0.25


@njit(cache=True)
def bump(p, rh):
    """Radial bump u(r) = A psi(r/R) with its first two radial derivatives."""
    A = p[0]
    R = p[1]
    s = rh / R
    if s >= 1.0 or A == 0.0:
        return 0.0, 0.0, 0.0
    q = 1.0 - s * s
    psi = np.exp(1.0 - 1.0 / q)
    g1 = -2.0 * s / (q * q)
    g2 = -2.0 / (q * q) - 8.0 * s * s / (q * q * q)
    return A * psi, A * psi * g1 / R, A * psi * (g1 * g1 + g2) / (R * R)


@njit(cache=True)
def profile(p, s):
    """Cylinder radius r(s) with r', r''.  Flat core |s| <= w, quintic blend
    of length l, then a*cosh(|s| - w)."""
    a = p[0]
    w = p[1]
    l = p[2]
    x = abs(s) - w
    sg = 1.0 if s >= 0.0 else -1.0
    if x <= 0.0:
        return a, 0.0, 0.0
    if x < l:
        c3 = p[3]
        c4 = p[4]
        c5 = p[5]
        r = 1.0 + x ** 3 * (c3 + x * (c4 + x * c5))
        r1 = x * x * (3.0 * c3 + x * (4.0 * c4 + 5.0 * c5 * x))
        r2 = x * (6.0 * c3 + x * (12.0 * c4 + 20.0 * c5 * x))
        return a * r, sg * a * r1, a * r2
    return a * np.cosh(x), sg * a * np.sinh(x), a * np.cosh(x)


@njit(cache=True)
def conformal(kind, p, x, y):
    """For the disc models return (e^{-sigma}, sigma_x, sigma_y, K)."""
    r2 = x * x + y * y
    q = 1.0 - r2
    em = 0.5 * q
    sx = 2.0 * x / q
    sy = 2.0 * y / q
    K = -1.0
    if kind == 1:
        r = np.sqrt(r2)
        rh = 2.0 * np.arctanh(r)
        u, ur, urr = bump(p, rh)
        if u != 0.0 or ur != 0.0:
            em = em * np.exp(-u)
            if r > 1e-12:
                f = ur * 2.0 / (q * r)
                sx += f * x
                sy += f * y
            if rh > 1e-6:
                lap = urr + ur / np.tanh(rh)
            else:
                lap = 2.0 * urr
            K = -np.exp(-2.0 * u) * (1.0 + lap)
    return em, sx, sy, K


@njit(cache=True)
def synth_curv(p, x):
    return -p[0] * (0.5 * (1.0 + np.sin(p[1] * x))) ** p[2]


@njit(cache=True)
def curvature(kind, p, x, y):
    if kind <= 1:
        return conformal(kind, p, x, y)[3]
    if kind == 2:
        r, r1, r2 = profile(p, x)
        return -r2 / r
    return synth_curv(p, x)


@njit(cache=True)
def rot_rate(kind, p, x, y, al):
    """Chart-angle rotation rate of a parallel field carried along a unit
    speed curve moving in direction al (equals theta' for geodesics)."""
    if kind <= 1:
        em, sx, sy, K = conformal(kind, p, x, y)
        return em * (sy * np.cos(al) - sx * np.sin(al))
    if kind == 2:
        r, r1, r2 = profile(p, x)
        return -(r1 / r) * np.sin(al)
    return 0.0


@njit(cache=True)
def velocity(kind, p, x, y, al):
    """Chart velocity of a unit vector at angle al."""
    if kind <= 1:
        em = conformal(kind, p, x, y)[0]
        return em * np.cos(al), em * np.sin(al)
    if kind == 2:
        r = profile(p, x)[0]
        return np.cos(al), np.sin(al) / r
    return np.cos(al), 0.0


@njit(cache=True)
def deriv(kind, p, st, mode, out):
    x = st[0]
    y = st[1]
    th = st[2]
    c = np.cos(th)
    s = np.sin(th)
    if kind <= 1:
        em, sx, sy, K = conformal(kind, p, x, y)
        out[0] = em * c
        out[1] = em * s
        out[2] = em * (sy * c - sx * s)
    elif kind == 2:
        r, r1, r2 = profile(p, x)
        K = -r2 / r
        out[0] = c
        out[1] = s / r
        out[2] = -(r1 / r) * s
    else:
        K = synth_curv(p, x)
        out[0] = c
        out[1] = 0.0
        out[2] = 0.0
    if mode == 1:
        out[3] = -st[3] * st[3] - K
        out[4] = 0.0
    elif mode == 2:
        out[3] = st[4]
        out[4] = -K * st[3]
    else:
        out[3] = 0.0
        out[4] = 0.0


@njit(cache=True)
def gl2_step(kind, p, st, h, mode, k1, k2, tmp, ev):
    """One step of the 2-stage Gauss-Legendre scheme (symmetric, order 4),
    stage equations solved by fixed-point iteration."""
    deriv(kind, p, st, mode, k1)
    for i in range(5):
        k2[i] = k1[i]
    for it in range(30):
        err = 0.0
        for i in range(5):
            tmp[i] = st[i] + h * (_A11 * k1[i] + _A12 * k2[i])
        deriv(kind, p, tmp, mode, ev)
        for i in range(5):
            d = abs(ev[i] - k1[i])
            if d > err:
                err = d
            k1[i] = ev[i]
        for i in range(5):
            tmp[i] = st[i] + h * (_A21 * k1[i] + _A22 * k2[i])
        deriv(kind, p, tmp, mode, ev)
        for i in range(5):
            d = abs(ev[i] - k2[i])
            if d > err:
                err = d
            k2[i] = ev[i]
        if err < 1e-15:
            break
    for i in range(5):
        st[i] += 0.5 * h * (k1[i] + k2[i])


@njit(cache=True)
def reduce_octagon(deck, st, G):
    """Move an exterior disc point back into the octagon through the side
    pairings; accumulate the cover element G (cover point = G(reduced))."""
    moved = 0
    for sweep in range(40):
        hit = -1
        best = 0.0
        for k in range(8):
            dx = st[0] - deck[k, 0]
            dy = st[1] - deck[k, 1]
            d = deck[k, 2] - np.sqrt(dx * dx + dy * dy)
            if d > best:
                best = d
                hit = k
        if hit < 0:
            break
        a = deck[hit, 3]
        b = complex(deck[hit, 4], deck[hit, 5])
        z = complex(st[0], st[1])
        den = np.conj(b) * z + a
        zn = (a * z + b) / den
        st[0] = zn.real
        st[1] = zn.imag
        st[2] = st[2] - 2.0 * np.angle(den)
        # G <- G o m^{-1}, with m^{-1} = (a, -b) for real a
        ga = complex(G[0], G[1])
        gb = complex(G[2], G[3])
        na = ga * a + gb * np.conj(-b)
        nb = ga * (-b) + gb * a
        G[0] = na.real
        G[1] = na.imag
        G[2] = nb.real
        G[3] = nb.imag
        moved += 1
    st[2] = (st[2] + np.pi) % (2.0 * np.pi) - np.pi
    return moved


@njit(cache=True)
def flow_batch(kind, p, deck, X0, A0, h, nsteps, every, mode, reduce):
    """Integrate N initial states for nsteps steps of size h (h may be
    negative), recording every `every` steps.  Returns samples (N, n, 5)
    and cover elements (N, n, 4)."""
    N = X0.shape[0]
    nout = nsteps // every + 1
    S = np.empty((N, nout, 5))
    Gs = np.empty((N, nout, 4))
    st = np.empty(5)
    k1 = np.empty(5)
    k2 = np.empty(5)
    tmp = np.empty(5)
    ev = np.empty(5)
    G = np.empty(4)
    for n in range(N):
        st[0] = X0[n, 0]
        st[1] = X0[n, 1]
        st[2] = X0[n, 2]
        st[3] = A0[n, 0]
        st[4] = A0[n, 1]
        G[0] = 1.0
        G[1] = 0.0
        G[2] = 0.0
        G[3] = 0.0
        if reduce and kind <= 1:
            reduce_octagon(deck, st, G)
        for i in range(5):
            S[n, 0, i] = st[i]
        for i in range(4):
            Gs[n, 0, i] = G[i]
        j = 1
        for k in range(1, nsteps + 1):
            m = mode
            if mode == 1 and st[3] < 1e-12:
                # log-derivative form near the boundary of D
                st[4] = st[3]
                st[3] = 1.0
                gl2_step(kind, p, st, h, 2, k1, k2, tmp, ev)
                st[3] = st[4] / st[3]
                st[4] = 0.0
            else:
                gl2_step(kind, p, st, h, m, k1, k2, tmp, ev)
            if mode == 2:
                nrm = np.sqrt(st[3] * st[3] + st[4] * st[4])
                if nrm > 1e100:
                    st[3] /= nrm
                    st[4] /= nrm
            if reduce and kind <= 1:
                reduce_octagon(deck, st, G)
            if k % every == 0:
                for i in range(5):
                    S[n, j, i] = st[i]
                for i in range(4):
                    Gs[n, j, i] = G[i]
                j += 1
    return S, Gs


@njit(cache=True)
def leaf_rhs(kind, p, x, y, th, u, o, out):
    """Horocycle field: footprint moves with unit speed perpendicular to the
    vector (side o = +-1), the angle turns at the parallel rate plus o*u."""
    al = th + o * 0.5 * np.pi
    vx, vy = velocity(kind, p, x, y, al)
    out[0] = vx
    out[1] = vy
    out[2] = rot_rate(kind, p, x, y, al) + o * u


@njit(cache=True)
def past_riccati(kind, p, deck, X0, hs, n2):
    """u^u at the rows of X0 from a past of length n2*hs.

    The reversed vector is flowed forward n2 half steps, recording K; the
    Riccati equation is then integrated in the original time direction on
    those samples (RK4, step 2*hs), starting from 0.  No orbit is ever
    re-integrated, so roundoff amplification along the past cannot move the
    curvature samples off the true orbit."""
    N = X0.shape[0]
    out = np.empty(N)
    K = np.empty(n2 + 1)
    st = np.empty(5)
    k1 = np.empty(5)
    k2 = np.empty(5)
    tmp = np.empty(5)
    ev = np.empty(5)
    G = np.empty(4)
    h = 2.0 * hs
    for n in range(N):
        st[0] = X0[n, 0]
        st[1] = X0[n, 1]
        st[2] = X0[n, 2] + np.pi
        st[3] = 0.0
        st[4] = 0.0
        G[0] = 1.0
        G[1] = 0.0
        G[2] = 0.0
        G[3] = 0.0
        K[0] = curvature(kind, p, st[0], st[1])
        for k in range(1, n2 + 1):
            gl2_step(kind, p, st, hs, 0, k1, k2, tmp, ev)
            if kind <= 1:
                reduce_octagon(deck, st, G)
            K[k] = curvature(kind, p, st[0], st[1])
        u = 0.0
        for j in range(n2, 1, -2):
            a, b, c = K[j], K[j - 1], K[j - 2]
            if u < 1e-12:
                # log-derivative form y' = z, z' = -K y from (1, u)
                y0, z0 = 1.0, u
                a1, b1 = z0, -a * y0
                a2, b2 = z0 + 0.5 * h * b1, -b * (y0 + 0.5 * h * a1)
                a3, b3 = z0 + 0.5 * h * b2, -b * (y0 + 0.5 * h * a2)
                a4, b4 = z0 + h * b3, -c * (y0 + h * a3)
                y = y0 + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
                z = z0 + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
                u = z / y
            else:
                q1 = -u * u - a
                v = u + 0.5 * h * q1
                q2 = -v * v - b
                v = u + 0.5 * h * q2
                q3 = -v * v - b
                v = u + h * q3
                q4 = -v * v - c
                u = u + h / 6.0 * (q1 + 2 * q2 + 2 * q3 + q4)
        out[n] = u
    return out
