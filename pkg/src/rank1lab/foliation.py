"""Stable and unstable horocycle leaves of surface models.

A leaf is integrated as a curve in T^1 M: the footprint moves at unit speed
perpendicular to the vector and the vector turns, relative to parallel
transport, at the rate given by the stable or unstable Riccati value at the
current point.  The Riccati value is recomputed at every RK4 stage from a
fixed past (or future) of length tau, so the leaf is only as good as that
limit; membership is audited afterwards through the bounded-orbit property.

The leaf parameter is signed arclength, positive in the direction theta + pi/2.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from . import linearization as lin
from .surface import UnsupportedQuery, TWO_PI, _as_array

LEAF_STEP = 0.01
U_TAU = 16.0
U_STEP = 1 / 32


class NotOnLeafError(RuntimeError):
    def __init__(self, residual):
        super().__init__(f"point is not on the leaf (best residual {residual:.3g})")
        self.residual = residual


class NoIntersectionError(RuntimeError):
    pass


class NotFoundError(RuntimeError):
    def __init__(self, max_lam):
        super().__init__(f"no point with lambda >= eta0 within the search radius (max lambda seen {max_lam:.3g})")
        self.max_lam = max_lam


def _check(model):
    if model.code == 3:
        raise UnsupportedQuery("the synthetic driver has no transverse leaves")


# ---------------------------------------------------------------------------
# chart arithmetic

def rel(model, X, Y):
    """Coordinates of Y relative to X, in X's chart: rows (dx, dy, dtheta).
    On the octagon Y is first moved by the deck translate closest to X."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    X, Y = np.broadcast_arrays(X, Y)
    out = np.empty(X.shape)
    if model.code <= 1:
        T = model.translates
        z = X[:, 0] + 1j * X[:, 1]
        w = Y[:, 0] + 1j * Y[:, 1]
        den = T[:, 2, None] * w + T[:, 3, None]
        from .surface import disc_distance
        with np.errstate(invalid="ignore", divide="ignore"):
            # trial points off the disc during Newton steps give nan rows
            gw = (T[:, 0, None] * w + T[:, 1, None]) / den
            j = np.nanargmin(np.where(np.isfinite(gw), disc_distance(z[None, :], gw), np.inf), axis=0)
        idx = np.arange(len(X))
        gw = gw[j, idx]
        th = Y[:, 2] - 2.0 * np.angle(den[j, idx])
        out[:, 0] = gw.real - X[:, 0]
        out[:, 1] = gw.imag - X[:, 1]
        out[:, 2] = th - X[:, 2]
    else:
        out = Y - X
        if model.code == 2:
            out[:, 1] = (out[:, 1] + np.pi) % TWO_PI - np.pi
    out[:, 2] = (out[:, 2] + np.pi) % TWO_PI - np.pi
    return out


def _frame(model, X):
    """sqrt of the (diagonal) metric in chart coordinates."""
    X = np.atleast_2d(X)
    if model.code <= 1:
        em = np.array([_core.conformal(model.code, model.p, a, b)[0] for a, b in X[:, :2]])
        return np.column_stack([1 / em, 1 / em])
    if model.code == 2:
        r = np.array([_core.profile(model.p, a)[0] for a in X[:, 0]])
        return np.column_stack([np.ones(len(X)), r])
    return np.ones((len(X), 2))


def tdist(model, X, Y):
    """Small-scale distance on T^1 M: sqrt(|footprint displacement|^2 + dangle^2)."""
    D = rel(model, X, Y)
    f = _frame(model, np.atleast_2d(X))
    return np.sqrt((f[:, 0] * D[:, 0]) ** 2 + (f[:, 1] * D[:, 1]) ** 2 + D[:, 2] ** 2)


# ---------------------------------------------------------------------------
# leaf field

def riccati_value(model, X, side, tau=U_TAU, step=U_STEP):
    """u^u (side 'u') or u^s = -u^u(-v) (side 's') from a past of length tau."""
    X = np.atleast_2d(X)
    if side == "u":
        return lin.unstable_along(model, X, 0.0, tau, step=step)[1][:, 0]
    if side == "s":
        return -lin.unstable_along(model, model.flip(X), 0.0, tau, step=step)[1][:, 0]
    raise ValueError(f"side must be 's' or 'u', got {side!r}")


def leaf_field(model, X, u):
    out = np.empty(3)
    F = np.empty((len(X), 3))
    for i, (x, y, th) in enumerate(X[:, :3]):
        _core.leaf_rhs(model.code, model.p, x, y, th, u[i], 1.0, out)
        F[i] = out
    return F


def leaf_tangent(model, X, side, tau=U_TAU):
    X = np.atleast_2d(X)
    return leaf_field(model, X, riccati_value(model, X, side, tau))


def flow_field(model, X):
    X = np.atleast_2d(X)
    out = np.empty(5)
    F = np.empty((len(X), 3))
    for i, r in enumerate(X):
        _core.deriv(model.code, model.p, np.array([r[0], r[1], r[2], 0.0, 0.0]), 0, out)
        F[i] = out[:3]
    return F


def _integrate(model, X, side, rho, drho=LEAF_STEP, tau=U_TAU, record=False):
    """RK4 along the leaf from every row of X by signed arclength rho (per row)."""
    X = model.normalize(np.atleast_2d(np.asarray(X, float)))
    rho = np.broadcast_to(np.asarray(rho, float), (len(X),)).copy()
    n = int(math.ceil(np.abs(rho).max() / drho - 1e-12)) if np.abs(rho).max() > 0 else 0
    hist = [X.copy()] if record else None
    if n == 0:
        return (X, np.stack(hist, 1)) if record else X
    h = (rho / n)[:, None]

    def F(Z):
        return leaf_field(model, Z, riccati_value(model, Z, side, tau))

    for _ in range(n):
        k1 = F(X)
        k2 = F(X + 0.5 * h * k1)
        k3 = F(X + 0.5 * h * k2)
        k4 = F(X + h * k3)
        X = model.normalize(X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        if record:
            hist.append(X.copy())
    return (X, np.stack(hist, 1)) if record else X


def leaf_advance(model, v, side, rho, orientation=1, drho=LEAF_STEP, tau=U_TAU, report=False):
    """The point at signed arclength orientation*rho along W^side(v).

    With report=True also returns a dict with a convergence flag for the
    Riccati value at the end point (past doubled to 2 tau); near Sing the
    flag marks a partial advance."""
    _check(model)
    v = _as_array(v)
    w = _integrate(model, v[None], side, orientation * rho, drho, tau)[0]
    if not report:
        return w
    u1 = riccati_value(model, w[None], side, tau)[0]
    u2 = riccati_value(model, w[None], side, 2 * tau)[0]
    return w, dict(converged=bool(abs(u1 - u2) < 1e-8), u=float(u2), steps=int(math.ceil(abs(rho) / drho)))


def stable_partner(model, v, rho, T, orientation=1, tau=U_TAU):
    """A point of W^s(v) at distance about rho whose orbit stays on the leaf
    over [0, T].

    The partner is placed on W^s(f_T v) and flowed back by T.  The backward
    flow contracts whatever unstable error the leaf step leaves behind, while
    a partner placed at time 0 carries that error forward with growth e^t.
    The offset at time T is rescaled once so the distance at 0 is rho."""
    _check(model)
    v = model.normalize(_as_array(v)[None])[0]
    x = model.endpoint(v[None], T)[0]
    r = rho * math.exp(-T)
    for _ in range(2):
        w = model.endpoint(_integrate(model, x[None], "s", orientation * r, tau=tau), -T)[0]
        d = tdist(model, v[None], w[None])[0]
        r *= rho / d
    return w


@dataclass
class LeafCurve:
    v: np.ndarray
    side: str
    arclength: np.ndarray
    samples: np.ndarray
    lam: np.ndarray = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["arclength", "chart", "x", "y", "angle", "lambda"])
            lam = self.lam if self.lam is not None else np.full(len(self.arclength), np.nan)
            for s, x, l in zip(self.arclength, self.samples, lam):
                wr.writerow([f"{s:.10g}", 0, f"{x[0]:.15g}", f"{x[1]:.15g}", f"{x[2]:.15g}", f"{l:.10g}"])


def leaf_curve(model, v, side, rho_max, n=41, with_lambda=False, tau=U_TAU):
    """Samples of W^side(v) at n equally spaced arclengths in [-rho_max, rho_max]."""
    _check(model)
    v = _as_array(v)
    half = (n - 1) // 2
    drho = rho_max / max(half, 1)
    sub = max(int(math.ceil(drho / LEAF_STEP)), 1)
    _, H = _integrate(model, np.vstack([v, v]), side, [rho_max, -rho_max], drho / sub, tau, record=True)
    fwd, bwd = H[0, ::sub], H[1, ::sub]
    samples = np.vstack([bwd[::-1], fwd[1:]])
    s = np.linspace(-rho_max, rho_max, len(samples))
    lam = lin.lambda_batch(model, samples, tau, step=U_STEP)[0] if with_lambda else None
    return LeafCurve(v, side, s, samples, lam)


# ---------------------------------------------------------------------------
# leafwise distances

def leaf_distance(model, v, w, side, r_search=2.0, tol=1e-6, maxit=30, return_residual=False):
    """Leaf arclength from v to w along W^s, W^u, or the weak-stable leaf
    W^cs (d^cs(v, w) = |t| + d^s(f_t v, w))."""
    _check(model)
    v = _as_array(v)
    w = _as_array(w)
    if side == "cs":
        return _cs_distance(model, v, w, r_search, tol, maxit, return_residual)
    E0 = leaf_tangent(model, v[None], side)[0]
    D = rel(model, v[None], w[None])[0]
    f = np.r_[_frame(model, v[None])[0], 1.0]
    rho = float(np.dot(f * E0, f * D) / np.dot(f * E0, f * E0))
    best = (np.inf, rho)
    for _ in range(maxit):
        if abs(rho) > r_search:
            break
        P = _integrate(model, v[None], side, rho)
        res = tdist(model, P, w[None])[0]
        if res < best[0]:
            best = (res, rho)
        if res < 1e-12:
            break
        u = riccati_value(model, P, side)
        E = leaf_field(model, P, u)[0]
        D = rel(model, P, w[None])[0]
        f = np.r_[_frame(model, P)[0], 1.0]
        d = float(np.dot(f * E, f * D) / np.dot(f * E, f * E))
        rho += d
        if abs(d) < 1e-13:
            P = _integrate(model, v[None], side, rho)
            res = tdist(model, P, w[None])[0]
            if res < best[0]:
                best = (res, rho)
            break
    if best[0] > tol:
        raise NotOnLeafError(best[0])
    return (abs(best[1]), best[0]) if return_residual else abs(best[1])


def _cs_point(model, v, t, rho):
    x = model.endpoint(v[None], t) if t != 0 else model.normalize(v[None])
    return _integrate(model, x, "s", rho)


def _cs_distance(model, v, w, r_search, tol, maxit, return_residual):
    q = np.zeros(2)
    best = (np.inf, q.copy())
    for _ in range(maxit):
        P = _cs_point(model, v, q[0], q[1])
        res = tdist(model, P, w[None])[0]
        if res < best[0]:
            best = (res, q.copy())
        if res < 1e-12:
            break
        A = np.column_stack([flow_field(model, P)[0], leaf_tangent(model, P, "s")[0]])
        f = np.r_[_frame(model, P)[0], 1.0]
        D = rel(model, P, w[None])[0]
        dq = np.linalg.lstsq(f[:, None] * A, f * D, rcond=None)[0]
        q += dq
        if np.abs(q).max() > r_search:
            break
        if np.abs(dq).max() < 1e-13:
            break
    if best[0] > tol:
        raise NotOnLeafError(best[0])
    d = abs(best[1][0]) + abs(best[1][1])
    return (d, best[0]) if return_residual else d


def leaf_membership(model, v, w, side, T=8.0, every=8):
    """Audit of the defining property: footprint distance between the orbits
    of v and w on [0, T] (forward for s, backward for u).  Returns
    (distances, bounded_and_nonincreasing)."""
    X = np.vstack([_as_array(v), _as_array(w)])
    if side == "u":
        X = model.flip(X)
    S, _ = model.flow_states(X, T, every=every)
    d = model.dist(S[0], S[1])
    t = np.linspace(0, T, len(d))
    slope = np.polyfit(t, d, 1)[0] if len(d) > 2 else 0.0
    ok = bool(d.max() <= 1.05 * d[0] + 1e-9 and slope <= 1e-9)
    return d, ok


# ---------------------------------------------------------------------------
# local product structure

@dataclass
class LocalProduct:
    point: np.ndarray
    a: float          # unstable arclength from w1
    b: float          # stable arclength from f_c w2
    c: float          # flow time from w2
    residual: float
    iterations: int

    @property
    def du(self):
        return abs(self.a)

    @property
    def dcs(self):
        return abs(self.c) + abs(self.b)


def local_product(model, w1, w2, delta=None, kappa=None, tol=1e-10, maxit=40, detail=False):
    """[w1, w2] = W^u(w1) intersected with W^cs(w2), by damped Newton in the
    unknowns (a, b, c): leaf_u(w1, a) = leaf_s(f_c w2, b)."""
    _check(model)
    w1 = model.normalize(_as_array(w1)[None])[0]
    w2 = model.normalize(_as_array(w2)[None])[0]
    cal = default_calibration(model)
    delta = cal["delta"] if delta is None else delta
    kappa = cal["kappa"] if kappa is None else kappa
    lim = kappa * delta

    def point_u(a):
        return _integrate(model, w1[None], "u", a)

    def point_cs(b, c):
        return _cs_point(model, w2, c, b)

    def residual(q):
        P = point_u(q[0])
        Q = point_cs(q[1], q[2])
        D = rel(model, P, Q)[0]
        f = np.r_[_frame(model, P)[0], 1.0]
        return P, Q, D, float(np.linalg.norm(f * D))

    def jac(P, Q):
        Eu = leaf_tangent(model, P, "u")[0]
        Ql = P + rel(model, P, Q)
        Es = leaf_field(model, Ql, riccati_value(model, Q, "s"))[0]
        Xf = flow_field(model, Ql)[0]
        return np.column_stack([-Eu, Es, Xf])

    # linearized splitting at w1 for the initial guess
    D0 = rel(model, w1[None], w2[None])[0]
    A0 = np.column_stack([-leaf_tangent(model, w1[None], "u")[0], leaf_tangent(model, w1[None], "s")[0],
                          flow_field(model, w1[None])[0]])
    try:
        q = -np.linalg.solve(A0, D0)
    except np.linalg.LinAlgError:
        raise NoIntersectionError("leaves are tangent at w1")
    if np.abs(q).max() > 4 * lim + 1e-12:
        q = np.zeros(3)
    P, Q, D, r = residual(q)
    it = 0
    while r > tol and it < maxit:
        it += 1
        J = jac(P, Q)
        try:
            dq = -np.linalg.solve(J, D)
        except np.linalg.LinAlgError:
            raise NoIntersectionError("singular Jacobian (near-tangent leaves)")
        lam = 1.0
        for _ in range(30):
            qn = q + lam * dq
            Pn, Qn, Dn, rn = residual(qn)
            if rn < r:
                break
            lam *= 0.5
        else:
            raise NoIntersectionError(f"damped Newton stalled at residual {r:.3g}")
        q, P, Q, D, r = qn, Pn, Qn, Dn, rn
        if np.abs(q).max() > 4 * lim + 1e-12:
            raise NoIntersectionError(f"intersection left the local scale kappa*delta = {lim:.3g}")
    if r > tol:
        raise NoIntersectionError(f"no convergence, residual {r:.3g}")
    out = LocalProduct(P[0], float(q[0]), float(q[1]), float(q[2]), r, it)
    return out if detail else out.point


# ---------------------------------------------------------------------------
# projections onto Reg(eta0)

def project_to_reg(model, v, side, eta0, R, scan=0.05, tau=U_TAU, info=False):
    """Pi^s / Pi^u: the nearest point w on W^side(v) (either orientation) with
    lambda(w) >= eta0, located by an outward scan in steps of `scan` and a
    bisection to 1e-3.  The identity when lambda(v) >= eta0."""
    _check(model)
    v = model.normalize(_as_array(v)[None])[0]
    lam_v = lin.lambda_batch(model, v[None], tau, step=U_STEP)[0][0]
    if lam_v >= eta0:
        return (v, dict(rho=0.0, lam=float(lam_v), max_lam=float(lam_v))) if info else v
    X = np.vstack([v, v])
    sgn = np.array([1.0, -1.0])
    rho = 0.0
    max_lam = lam_v
    while rho < R - 1e-12:
        d = min(scan, R - rho)
        X = _integrate(model, X, side, sgn * d, tau=tau)
        rho += d
        lam = lin.lambda_batch(model, X, tau, step=U_STEP)[0]
        max_lam = max(max_lam, lam.max())
        hit = np.flatnonzero(lam >= eta0)
        if len(hit):
            k = hit[np.argmax(lam[hit])]
            lo, hi = rho - d, rho
            wk = X[k]
            for _ in range(int(math.ceil(math.log2(d / 1e-3)))):
                mid = 0.5 * (lo + hi)
                y = _integrate(model, v[None], side, sgn[k] * mid, tau=tau)
                ly = lin.lambda_batch(model, y, tau, step=U_STEP)[0][0]
                if ly >= eta0:
                    hi, wk = mid, y[0]
                else:
                    lo = mid
            lam_w = lin.lambda_batch(model, wk[None], tau, step=U_STEP)[0][0]
            return (wk, dict(rho=float(sgn[k] * hi), lam=float(lam_w), max_lam=float(max_lam))) if info else wk
    raise NotFoundError(float(max_lam))


@dataclass
class RegularizedSegment:
    v: np.ndarray
    w: np.ndarray
    t: float
    T: float
    eta: float
    delta: float
    lam_start: float
    lam_end: float
    times: np.ndarray
    sing_dist: np.ndarray
    rho_s: float = 0.0
    rho_u: float = 0.0

    @property
    def endpoints_regular(self):
        return bool(self.lam_start >= self.eta and self.lam_end >= self.eta)

    @property
    def near_sing(self):
        """max of d_K(f_tau w, Sing) over [T, t - T]."""
        m = (self.times >= self.T - 1e-9) & (self.times <= self.t - self.T + 1e-9)
        return float(self.sing_dist[m].max()) if m.any() else 0.0

    @property
    def near_sing_ok(self):
        return self.near_sing < self.delta

    def summary(self):
        return dict(w=[float(a) for a in self.w], t=self.t, T=self.T, eta=self.eta, delta=self.delta,
                    lam_start=self.lam_start, lam_end=self.lam_end, near_sing=self.near_sing,
                    endpoints_regular=self.endpoints_regular, near_sing_ok=self.near_sing_ok)


def regularize_segment(model, v, t, eta0, R, T=None, eta=None, delta=None, sample_every=0.5,
                       tau=U_TAU):
    """Pi_t(v) = f_{-t} Pi^u f_t Pi^s (v) with both properties measured along
    the returned segment: lambda at the two endpoints and the Knieper
    distance to Sing on a grid of [0, t]."""
    cal = default_calibration(model)
    T = cal["T"] if T is None else T
    eta = cal["eta"] if eta is None else eta
    delta = cal["delta_sing"] if delta is None else delta
    v = _as_array(v)
    w1, i1 = project_to_reg(model, v, "s", eta0, R, tau=tau, info=True)
    x = model.endpoint(w1[None], t)
    x2, i2 = project_to_reg(model, x[0], "u", eta0, R, tau=tau, info=True)
    w = model.endpoint(x2[None], -t)[0]
    we = model.endpoint(w[None], t)[0]
    lam = lin.lambda_batch(model, np.vstack([w, we]), tau, step=U_STEP)[0]
    k = int(round(t / sample_every))
    times = np.linspace(0, t, k + 1)
    S, _ = model.flow_states(w[None], t, every=max(int(round(sample_every / model.step)), 1))
    pts = S[0][:len(times)]
    if model.code == 2:
        from .surface import sing_distance_batch
        sd = sing_distance_batch(model, pts)
    else:
        sd = np.full(len(pts), np.inf)
    return RegularizedSegment(v, w, float(t), float(T), float(eta), float(delta), float(lam[0]), float(lam[1]),
                              times[:len(pts)], sd, i1["rho"], i2["rho"])


def calibrate_T(model, vectors, t, eta0, R, delta, margin=0.5):
    """Smallest T with d_K(f_tau w, Sing) < delta on [T, t - T] for every
    calibration vector, plus a margin."""
    worst = 0.0
    for v in vectors:
        seg = regularize_segment(model, v, t, eta0, R, T=0.0, delta=delta)
        bad = seg.times[seg.sing_dist >= delta]
        for s in bad:
            worst = max(worst, min(s, t - s))
    return float(worst + margin)


# ---------------------------------------------------------------------------
# calibration store

_CAL = {
    "constant-octagon": dict(eta0=0.5, R=1.0, delta=0.05, kappa=3.0, T=0.0, eta=0.5, delta_sing=0.1),
    "perturbed-octagon": dict(eta0=0.3, R=1.0, delta=0.05, kappa=3.0, T=0.0, eta=0.3, delta_sing=0.1),
    "flat-cylinder-funnels": dict(eta0=0.08, R=2.5, delta=0.05, kappa=4.0, T=6.0, eta=0.05, delta_sing=0.1),
    "synthetic-driver": dict(eta0=0.1, R=0.0, delta=0.0, kappa=0.0, T=0.0, eta=0.1, delta_sing=0.1),
}


def default_calibration(model):
    cal = dict(_CAL[model.kind])
    cal.update(getattr(model, "calibration", None) or {})
    return cal


def load_calibration(path):
    with open(path) as fh:
        return json.load(fh)


def save_calibration(path, cal):
    with open(path, "w") as fh:
        json.dump(cal, fh, indent=2, sort_keys=True)


def calibrate_product(model, rng, n=10, dist=0.01):
    """Empirical kappa: max of d^u and d^cs of [w1, w2] over d_K(w1, w2)
    for random pairs at footprint distance about `dist`."""
    from .surface import knieper_distance
    ratios = []
    for _ in range(n):
        w1 = model.random_vectors(1, rng)[0]
        d = rng.normal(size=3)
        w2 = model.normalize((w1 + dist * d / np.linalg.norm(d))[None])[0]
        lp = local_product(model, w1, w2, delta=1.0, kappa=10.0, detail=True)
        dk = knieper_distance(model, w1, w2)
        ratios.append(max(lp.du, lp.dcs) / dk)
    return float(max(ratios))
