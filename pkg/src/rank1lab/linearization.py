"""Jacobi and Riccati dynamics along geodesics.

Curvature along a geodesic is a symmetric m x m matrix valued signal
(m = 1 for surfaces).  The Riccati equation U' + U^2 + K = 0 is integrated
with classical RK4 on a uniform grid; the signal is sampled at half steps so
every RK4 stage sees an exact sample.  When the smallest eigenvalue of U falls
below 1e-12 the step is taken in the log-derivative form U = Z Y^{-1},
Y' = Z, Z' = -K Y, which keeps the iterate on the closed domain D.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _core

LOG_SWITCH = 1e-12


class BlowUpError(RuntimeError):
    def __init__(self, time):
        super().__init__(f"Riccati solution blew up at t = {time:.6g}")
        self.time = time


class SignalRangeError(ValueError):
    pass


class CurvatureBoundError(ValueError):
    pass


# ---------------------------------------------------------------------------
# signals

@dataclass
class CurvatureSignal:
    """K sampled at t0 + k*hs, k = 0..n-1.  RK4 steps have size 2*hs."""
    t0: float
    hs: float
    K: np.ndarray           # (n, m, m) or batched (B, n, m, m)
    b: float

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 1:
            K = K[:, None, None]
        K = 0.5 * (K + np.swapaxes(K, -1, -2))
        self.K = K
        lo, hi = _extremes(K)
        tol = 1e-9 * max(1.0, self.b ** 2)
        if lo.min() < -self.b ** 2 - tol or hi.max() > tol:
            raise CurvatureBoundError("curvature signal leaves [-b^2, 0]")
        if (self.K.shape[-3] - 1) % 2:
            raise ValueError("signal needs an odd number of half-step samples")

    @property
    def m(self):
        return self.K.shape[-1]

    @property
    def n(self):
        return self.K.shape[-3]

    @property
    def t1(self):
        return self.t0 + (self.n - 1) * self.hs

    @property
    def times(self):
        return self.t0 + self.hs * np.arange(self.n)

    def index(self, t):
        k = (t - self.t0) / self.hs
        j = int(round(k))
        if abs(k - j) > 1e-6 or j < 0 or j > self.n - 1:
            raise SignalRangeError(f"time {t} outside the signal grid [{self.t0}, {self.t1}]")
        if j % 2:
            raise SignalRangeError("times must fall on full RK4 steps")
        return j

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            if self.m == 1:
                wr.writerow(["t", "K"])
                for t, k in zip(self.times, self.K[..., 0, 0]):
                    wr.writerow([f"{t:.12g}", f"{k:.17g}"])
            else:
                wr.writerow(["t", "K11", "K12", "K22"])
                for t, k in zip(self.times, self.K):
                    wr.writerow([f"{t:.12g}", f"{k[0, 0]:.17g}", f"{k[0, 1]:.17g}", f"{k[1, 1]:.17g}"])

    @classmethod
    def from_csv(cls, path, b):
        rows = list(csv.reader(open(path)))
        head, data = rows[0], np.array(rows[1:], dtype=float)
        t = data[:, 0]
        if len(head) == 2:
            K = data[:, 1]
        else:
            K = np.empty((len(t), 2, 2))
            K[:, 0, 0], K[:, 0, 1], K[:, 1, 0], K[:, 1, 1] = data[:, 1], data[:, 2], data[:, 2], data[:, 3]
        return cls(t[0], t[1] - t[0], K, b)


def _grid(t0, t1, step):
    nsteps = max(int(math.ceil((t1 - t0) / step - 1e-9)), 1)
    return np.linspace(t0, t1, 2 * nsteps + 1)


def constant_signal(k, t0, t1, step=0.01, m=1, b=None):
    t = _grid(t0, t1, step)
    K = np.broadcast_to(np.asarray(k, float) * np.eye(m), (len(t), m, m)).copy()
    if b is None:
        b = math.sqrt(max(-np.linalg.eigvalsh(K[0]).min(), 0.0)) + 1e-9
    return CurvatureSignal(t[0], t[1] - t[0], K, b)


def function_signal(fun, t0, t1, step=0.01, b=1.0):
    """Signal from a callable t -> K(t) (scalar or m x m array)."""
    t = _grid(t0, t1, step)
    K = np.array([fun(s) for s in t], dtype=float)
    return CurvatureSignal(t[0], t[1] - t[0], K, b)


def heintze_signal(chi, t0, t1, step=0.01, height=None):
    """Warped-product curvature along a geodesic whose distance from the
    central torus is height(t): the tori are scaled by chi*cosh(d), so the
    torus direction sees -(f'/f)^2 = -tanh(d)^2 and the normal direction sees
    -f''/f = -1 (chi cancels in both ratios)."""
    if chi <= 0:
        raise ValueError("chi must be positive")
    height = (lambda s: 0.0) if height is None else height

    def K(s):
        d = height(s)
        f, f1, f2 = chi * np.cosh(d), chi * np.sinh(d), chi * np.cosh(d)
        return np.diag([-(f1 / f) ** 2, -f2 / f])

    return function_signal(K, t0, t1, step, b=1.0 + 1e-9)


def random_signals(rng, n, t0, t1, step, m, b, modes=4):
    """Batch of smooth random signals with eigenvalues in [-b^2, 0]."""
    t = _grid(t0, t1, step)
    out = np.zeros((n, len(t), m, m))
    for i in range(m):
        for j in range(i, m):
            amp = rng.normal(size=(n, modes))
            freq = rng.uniform(0.1, 2.0, size=(n, modes))
            ph = rng.uniform(0, 2 * np.pi, size=(n, modes))
            val = np.einsum("nk,nkt->nt", amp, np.sin(freq[..., None] * t + ph[..., None]))
            out[:, :, i, j] = val
            out[:, :, j, i] = val
    # map eigenvalues into [-b^2, 0] by a spectral squashing
    w, V = np.linalg.eigh(out)
    w = -b * b * 0.5 * (1 + np.tanh(w)) * 0.999
    out = np.einsum("...ik,...k,...jk->...ij", V, w, V)
    return CurvatureSignal(t[0], t[1] - t[0], out, b)


def curvature_along(model, v, t_range, step=None):
    """Gaussian curvature along the geodesic of v over t_range = (t0, t1)."""
    t0, t1 = t_range
    hs = 0.5 * (model.step if step is None else step)
    v = model.normalize(np.asarray(v, float).reshape(1, 3))
    n = max(int(math.ceil((t1 - t0) / (2 * hs) - 1e-9)), 1)
    hs = (t1 - t0) / (2 * n)
    j0 = -t0 / hs
    if t0 < 0 < t1 and abs(j0 - round(j0)) < 1e-9:
        # flow out of v in both directions: re-integrating forward from a
        # backward-flowed point would amplify roundoff like e^{chi t}
        j0 = int(round(j0))
        P = model._run(model.flip(v), -t0, nsteps=j0)[0][0, ::-1, :3]
        F = model._run(v, t1, nsteps=2 * n - j0)[0][0, 1:, :3]
        S = np.vstack([P, F])[None]
    else:
        start = model.endpoint(v, t0, step=hs) if t0 != 0 else v
        S, _ = model.flow_states(start, t1 - t0, every=1, step=hs)
    K = model.curvature(S[0, :, 0], S[0, :, 1])
    if K.min() < -model.b ** 2 - 1e-9:
        raise CurvatureBoundError("model curvature bound violated along the orbit")
    return CurvatureSignal(t0, (t1 - t0) / (2 * n), K, model.b)


# ---------------------------------------------------------------------------
# integrators

def _sym(U):
    return 0.5 * (U + np.swapaxes(U, -1, -2))


def _extremes(U):
    """Smallest and largest eigenvalue of symmetric blocks; closed form for
    m <= 2, which is most of the cost in batched runs."""
    m = U.shape[-1]
    if m == 1:
        return U[..., 0, 0], U[..., 0, 0]
    if m == 2:
        a, c, b = U[..., 0, 0], U[..., 1, 1], 0.5 * (U[..., 0, 1] + U[..., 1, 0])
        mid, rad = 0.5 * (a + c), np.hypot(0.5 * (a - c), b)
        return mid - rad, mid + rad
    w = np.linalg.eigvalsh(U)
    return w[..., 0], w[..., -1]


def _ric(U, K):
    return -U @ U - K


def _rk4_riccati(U, K0, Kh, K1, h):
    k1 = _ric(U, K0)
    k2 = _ric(U + 0.5 * h * k1, Kh)
    k3 = _ric(U + 0.5 * h * k2, Kh)
    k4 = _ric(U + h * k3, K1)
    return U + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_logform(U, K0, Kh, K1, h):
    Y = np.broadcast_to(np.eye(U.shape[-1]), U.shape).copy()
    Z = U.copy()

    def f(Y, Z, K):
        return Z, -K @ Y

    a1, b1 = f(Y, Z, K0)
    a2, b2 = f(Y + 0.5 * h * a1, Z + 0.5 * h * b1, Kh)
    a3, b3 = f(Y + 0.5 * h * a2, Z + 0.5 * h * b2, Kh)
    a4, b4 = f(Y + h * a3, Z + h * b3, K1)
    Y = Y + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
    Z = Z + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
    return Z @ np.linalg.inv(Y)


def _riccati_run(signal, U0, j0, j1, record=False):
    """Integrate from half-step index j0 to j1 (both even)."""
    K = signal.K
    h = 2 * signal.hs
    U = _sym(np.array(U0, dtype=float))
    hist = [U.copy()] if record else None
    for j in range(j0, j1, 2):
        K0, Kh, K1 = K[..., j, :, :], K[..., j + 1, :, :], K[..., j + 2, :, :]
        lo = _extremes(U)[0]
        if np.any(lo < LOG_SWITCH):
            Un = _rk4_riccati(U, K0, Kh, K1, h)
            Ul = _rk4_logform(U, K0, Kh, K1, h)
            mask = (lo < LOG_SWITCH)[..., None, None]
            U = np.where(mask, Ul, Un)
        else:
            U = _rk4_riccati(U, K0, Kh, K1, h)
        U = _sym(U)
        if not np.all(np.isfinite(U)) or np.abs(U).max() > 1e8:
            raise BlowUpError(signal.t0 + (j + 2) * signal.hs)
        if record:
            hist.append(U.copy())
    if record:
        return U, np.stack(hist, axis=-3)
    return U


def riccati_evolve(signal, U0, s, t, record=False):
    """The Riccati map R_{s,t}: evolve U0 given at time s up to time t."""
    if t < s:
        raise ValueError("need s <= t")
    U0 = np.asarray(U0, float)
    if U0.ndim == 0:
        U0 = U0.reshape(1, 1)
    return _riccati_run(signal, U0, signal.index(s), signal.index(t), record)


def jacobi_evolve(signal, J0, J0p, t, record=False):
    """Solve J'' + K J = 0 from time signal.t0 to t (RK4)."""
    j1 = signal.index(t)
    K = signal.K
    h = 2 * signal.hs
    J = np.array(J0, dtype=float).reshape(signal.m)
    P = np.array(J0p, dtype=float).reshape(signal.m)
    hist = [(J.copy(), P.copy())]
    for j in range(0, j1, 2):
        K0, Kh, K1 = K[j], K[j + 1], K[j + 2]
        a1, b1 = P, -K0 @ J
        a2, b2 = P + 0.5 * h * b1, -Kh @ (J + 0.5 * h * a1)
        a3, b3 = P + 0.5 * h * b2, -Kh @ (J + 0.5 * h * a2)
        a4, b4 = P + h * b3, -K1 @ (J + h * a3)
        J = J + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        P = P + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        hist.append((J.copy(), P.copy()))
    if record:
        return JacobiState(J, P), np.array([a for a, _ in hist]), np.array([b for _, b in hist])
    return JacobiState(J, P)


@dataclass
class JacobiState:
    J: np.ndarray
    Jp: np.ndarray


@dataclass
class RiccatiResult:
    U: np.ndarray
    converged: bool
    tau: float
    history: list = field(default_factory=list)


def unstable_riccati(signal, tol=1e-8, tau0=4.0):
    """U^u(0) as the limit of R_{-tau,0}(0) with tau doubling from tau0.
    The signal must cover [-tau_max, 0]; non-convergence is flagged."""
    if signal.t1 < -1e-9 or signal.t0 > -tau0 + 1e-9:
        raise SignalRangeError("signal must cover [-tau0, 0]")
    tau_max = -signal.t0
    m = signal.m
    tau = tau0
    prev = riccati_evolve(signal, np.zeros((m, m)), -tau, 0.0)
    hist = [(tau, prev)]
    while 2 * tau <= tau_max + 1e-9:
        cur = riccati_evolve(signal, np.zeros((m, m)), -2 * tau, 0.0)
        hist.append((2 * tau, cur))
        if np.linalg.norm(cur - prev) < tol:
            return RiccatiResult(cur, True, 2 * tau, hist)
        prev = cur
        tau *= 2
    return RiccatiResult(prev, False, tau, hist)


def trace_semimetric(A, B):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape != B.shape:
        raise ValueError("dimension mismatch")
    return float(abs(np.trace(A) - np.trace(B)))


# ---------------------------------------------------------------------------
# model-coupled scalar Riccati (surfaces)

def unstable_along(model, X, t, tau, every=1, step=None):
    """u^u sampled along the orbits of the rows of X over [0, t] using the
    Riccati solution started from 0 at time -tau.  Returns (states, u)."""
    X = model.normalize(np.atleast_2d(np.asarray(X, float)))
    h = model.step if step is None else step
    n_pre = max(int(round(tau / h)), 1)
    n_seg = int(math.ceil(t / h - 1e-9)) if t > 0 else 0
    u0 = _core.past_riccati(model.code, model.p, model.deck, np.ascontiguousarray(X),
                            0.5 * tau / n_pre, 2 * n_pre)
    if n_seg == 0:
        return X[:, None, :], u0[:, None]
    A0 = np.column_stack([u0, np.zeros_like(u0)])
    S, _ = model._run(X, t, every=every, nsteps=n_seg, mode=1, A0=A0)
    return S[..., :3], S[..., 3]


def converged_tau(model, X, tol=1e-8, tau0=4.0, tau_max=64.0):
    """Doubling search for a past length after which u^u(X) is stable to tol.
    Returns (u, tau, converged) per row."""
    X = np.atleast_2d(np.asarray(X, float))
    tau = tau0
    prev = unstable_along(model, X, 0.0, tau)[1][:, 0]
    taus = np.full(len(X), tau)
    done = np.zeros(len(X), dtype=bool)
    val = prev.copy()
    while 2 * tau <= tau_max + 1e-9 and not done.all():
        idx = np.flatnonzero(~done)
        cur = unstable_along(model, X[idx], 0.0, 2 * tau)[1][:, 0]
        ok = np.abs(cur - prev[idx]) < tol
        val[idx] = cur
        taus[idx] = 2 * tau
        done[idx[ok]] = True
        prev[idx] = cur
        tau *= 2
    return val, taus, done


@dataclass
class HyperbolicityValues:
    lam_u: float
    lam_s: float
    lam: float
    lam_tilde: float
    eta: float
    converged: bool
    tau: float


def lambda_values(model, v, tau_max=64.0, tol=1e-8, eta=0.0):
    """lambda^u, lambda^s = lambda^u(-v), lambda = min, and lambda~ for eta."""
    X = np.atleast_2d(np.asarray(v, float))
    uu, tu, cu = converged_tau(model, X, tol, tau_max=tau_max)
    us, ts, cs = converged_tau(model, model.flip(X), tol, tau_max=tau_max)
    lam = np.minimum(uu, us)
    out = [HyperbolicityValues(float(a), float(b), float(c), float(max(0.0, c - eta / 2)), eta,
                               bool(x and y), float(max(p, q)))
           for a, b, c, x, y, p, q in zip(uu, us, lam, cu, cs, tu, ts)]
    return out[0] if np.ndim(v) == 1 else out


def lambda_batch(model, X, tau=32.0, step=None):
    """Vectorized lambda with a fixed past length (no convergence search)."""
    X = np.atleast_2d(X)
    uu = unstable_along(model, X, 0.0, tau, step=step)[1][:, 0]
    us = unstable_along(model, model.flip(X), 0.0, tau, step=step)[1][:, 0]
    return np.minimum(uu, us), uu, us


def lambda_profile(model, v, t, tau=32.0, step=None):
    """lambda^u, lambda^s and lambda along the orbit of v over [0, t] on the
    model step grid.  Returns (times, lam_u, lam_s, lam, states)."""
    X = np.atleast_2d(np.asarray(v, float))
    S, uu = unstable_along(model, X, t, tau, step=step)
    Xe = S[:, -1, :]
    _, us = unstable_along(model, model.flip(Xe), t, tau, step=step)
    us = us[:, ::-1]
    n = uu.shape[1]
    times = np.linspace(0, t, n)
    lam = np.minimum(uu, us)
    if np.ndim(v) == 1:
        return times, uu[0], us[0], lam[0], S[0]
    return times, uu, us, lam, S


def geometric_potential(model, v, tau_max=64.0, tol=1e-8):
    """psi^u(v) = -tr U^u(v)."""
    X = np.atleast_2d(np.asarray(v, float))
    u, _, _ = converged_tau(model, X, tol, tau_max=tau_max)
    return float(-u[0]) if np.ndim(v) == 1 else -u


def phi_integral(model, potential, v, t):
    """Phi(v, t) = int_0^t phi(f_s v) ds by the trapezoid rule on the model grid."""
    return float(potential.integrate(model, np.atleast_2d(v), t)[0])


# ---------------------------------------------------------------------------
# Bowen discrepancy

@dataclass
class DecayReport:
    times: np.ndarray
    discrepancy: np.ndarray
    rate: float
    intercept: float
    residual: float
    collapsed: bool
    side: str = "s"

    def to_json(self):
        return json.dumps(dict(rate=_num(self.rate), intercept=_num(self.intercept),
                               residual=_num(self.residual), collapsed=self.collapsed,
                               side=self.side), sort_keys=True)

    def ratio(self):
        d0 = self.discrepancy[0] if self.side == "s" else self.discrepancy[-1]
        d1 = self.discrepancy[-1] if self.side == "s" else self.discrepancy[0]
        return float(d1 / d0) if d0 > 0 else 0.0


def _num(x):
    return "inf" if x == np.inf else float(x)


def fit_decay(times, D, side="s", floor=1e-12):
    """Least squares fit log E = c - rate*s, s = t (stable) or T - t (unstable).

    E is the envelope of D toward the far end (max over the remaining
    window), so the fit estimates a bound Q exp(-rate s) rather than chasing
    dips of D down to roundoff."""
    D = np.asarray(D, float)
    s = times if side == "s" else times[-1] - times
    E = np.maximum.accumulate(D[::-1])[::-1] if side == "s" else np.maximum.accumulate(D)
    keep = E > floor
    if keep.sum() < 2:
        return DecayReport(times, D, np.inf, -np.inf, 0.0, True, side)
    A = np.column_stack([np.ones(keep.sum()), s[keep]])
    coef, res, *_ = np.linalg.lstsq(A, np.log(E[keep]), rcond=None)
    r = np.log(E[keep]) - A @ coef
    return DecayReport(times, D, float(-coef[1]), float(coef[0]), float(np.sqrt(np.mean(r ** 2))),
                       False, side)


def bowen_discrepancy(model, v, w, T, side="s", tau=32.0, every=8):
    """|tr U^u_v(t) - tr U^u_w(t)| along [0, T] with an exponential fit."""
    X = np.vstack([np.asarray(v, float), np.asarray(w, float)])
    _, u = unstable_along(model, X, T, tau, every=every)
    D = np.abs(u[0] - u[1])
    times = np.linspace(0, T, len(D))
    return fit_decay(times, D, side)


# ---------------------------------------------------------------------------
# randomized property suite

def _random_domain(rng, n, m, b, faces=0.25):
    """Random points of D = {0 <= U <= b}; a share `faces` of them has one
    eigenvalue on the lower face 0 and as many on the upper face b."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, m, m)))
    w = rng.uniform(0, b, size=(n, m))
    k = rng.random(n)
    w[k < faces, 0] = 0.0
    w[(k >= faces) & (k < 2 * faces), -1] = b
    return _sym(np.einsum("...ik,...k,...jk->...ij", Q, w, Q))


def _lo(A):
    return _extremes(_sym(A))[0]


def riccati_property_suite(n, rng, m=2, t1=20.0, step=0.01, b=1.5, tol=1e-8, chunk=500):
    """Randomized checks of the Riccati map on n random signals each:

    domain       U0 in D = {0 <= U <= b}  gives  R(U0) in D
    monotone     U1 >= U0 gives  R(U1) >= R(U0)
    trace_gap    tr(R U1 - R U0) is nonincreasing in t
    decay        tr gap(t) <= tr gap(0) exp(-2 int lambda_min(U0))
    convergence  R_{-tau,0}(0) is >=-nondecreasing in tau
    closed_form  R_{-tau,0}(0) = tanh(tau) for K = -1

    Violations are counted at tolerance tol relative to max(1, |U|)."""
    out = {k: dict(trials=0, violations=0, worst=0.0)
           for k in ("domain", "monotone", "trace_gap", "decay", "convergence", "closed_form")}

    def tally(key, excess):
        r = out[key]
        r["trials"] += int(np.size(excess))
        r["violations"] += int(np.sum(excess > tol))
        r["worst"] = max(r["worst"], float(np.max(excess)))

    done = 0
    while done < n:
        k = min(chunk, n - done)
        sig = random_signals(rng, k, 0.0, t1, step, m, b)
        U0 = _random_domain(rng, k, m, b)
        U1 = _random_domain(rng, k, m, b)
        # order the pair: U1 <- U0 + (U1 projected to the cone above U0)
        w, V = np.linalg.eigh(U1 - U0)
        D = np.einsum("...ik,...k,...jk->...ij", V, np.clip(w, 0, None), V)
        U1 = U0 + D
        V0, H0 = riccati_evolve(sig, U0, 0.0, t1, record=True)
        V1, H1 = riccati_evolve(sig, U1, 0.0, t1, record=True)
        sc = np.maximum(1.0, np.abs(V1).max(axis=(-1, -2)))
        hi = _extremes(V0)[1]
        tally("domain", np.maximum(-_lo(V0), hi - b) / sc)
        tally("monotone", (-_lo(H1 - H0)).max(axis=1) / sc)
        g0 = np.trace(D, axis1=-2, axis2=-1)
        gap = np.trace(H1 - H0, axis1=-2, axis2=-1)          # (k, steps+1)
        tally("trace_gap", np.diff(gap, axis=1).max(axis=1) / np.maximum(1.0, g0))
        lam = _lo(H0)
        h = 2 * sig.hs
        rate = np.minimum(lam[:, 1:], lam[:, :-1]) - np.abs(np.diff(lam, axis=1))
        decay = np.concatenate([np.zeros((k, 1)), np.cumsum(np.clip(rate, 0, None), axis=1)], axis=1)
        bound = g0[:, None] * np.exp(-2 * h * decay) * (1 + 1e-6)
        tally("decay", (gap - bound).max(axis=1) / np.maximum(1.0, g0))
        # U_tau on the same signals read backwards in time: run from 0 at
        # s = t1 - tau up to t1 for tau on a doubling ladder
        taus = [x for x in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0) if x < t1] + [t1]
        prev = None
        for tau in taus:
            s0 = sig.t0 + 2 * sig.hs * round((t1 - tau) / (2 * sig.hs))
            cur = riccati_evolve(sig, np.zeros((k, m, m)), s0, t1)
            if prev is not None:
                tally("convergence", -_lo(cur - prev) / np.maximum(1.0, np.abs(cur).max(axis=(-1, -2))))
            prev = cur
        done += k
    # K = -1 is time invariant, so one run from 0 gives R_{-tau,0}(0) at every grid tau
    sig = constant_signal(-1.0, 0.0, 6.0, step=step)
    _, H = riccati_evolve(sig, 0.0, 0.0, 6.0, record=True)
    taus = sig.times[::2]
    tally("closed_form", np.abs(H[:, 0, 0] - np.tanh(taus))[1:])
    for r in out.values():
        r["passed"] = r["violations"] == 0
    return out
