"""Orbit-segment collections B(eta), G(eta), C(eta), Reg(eta), the
bad-good-bad decomposition, specification gluing and orbit closing.

Integral conditions are evaluated on a sampled lambda profile with
trapezoid quadrature.  The array functions (suffix _profile) are the
reference implementation; the model-level functions compute the profile and
delegate to them.
"""
import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np

from . import linearization as lin

TOL = 1e-12


# ---------------------------------------------------------------------------
# array level

def cumulative(lam, h):
    lam = np.asarray(lam, float)
    I = np.zeros(lam.shape)
    I[..., 1:] = np.cumsum(0.5 * h * (lam[..., 1:] + lam[..., :-1]), axis=-1)
    return I


def in_B_profile(lam, h, eta):
    t = h * (len(lam) - 1)
    if t <= 0:
        return False
    return bool(cumulative(lam, h)[-1] < eta * t)


def in_G_profile(lam, h, eta):
    """Both one-sided averages stay >= eta for every tau on the grid."""
    I = cumulative(lam, h)
    N = len(lam) - 1
    k = np.arange(N + 1)
    fwd = I - eta * k * h
    bwd = (I[-1] - I[::-1]) - eta * k * h
    return bool(fwd.min() >= -TOL and bwd.min() >= -TOL)


def in_C_profile(lam, eta):
    return bool(lam[0] >= eta - TOL and lam[-1] >= eta - TOL)


@dataclass
class Decomposition:
    p: float
    g: float
    s: float
    eta: float
    kp: int = 0
    ks: int = 0
    verified: bool = False

    @property
    def t(self):
        return self.p + self.g + self.s


def decompose_profile(lam, h, eta):
    """(p, g, s) with p the largest prefix in B(eta) and s the largest
    suffix in B(eta) inside [p, t].  Exact on the quadrature grid; ties go
    to larger p, then larger s."""
    lam = np.asarray(lam, float)
    I = cumulative(lam, h)
    N = len(lam) - 1
    k = np.arange(N + 1)
    bad_pre = I - eta * k * h < 0
    bad_pre[0] = False
    kp = int(k[bad_pre].max()) if bad_pre.any() else 0
    j = np.arange(N - kp + 1)
    bad_suf = (I[-1] - I[N - j]) - eta * j * h < 0
    bad_suf[0] = False
    ks = int(j[bad_suf].max()) if bad_suf.any() else 0
    d = Decomposition(kp * h, (N - kp - ks) * h, ks * h, eta, kp, ks)
    d.verified = verify_decomposition(lam, h, d)
    return d


def verify_decomposition(lam, h, d):
    N = len(lam) - 1
    kp, ks = d.kp, d.ks
    ok = kp + ks <= N
    if kp > 0:
        ok &= in_B_profile(lam[:kp + 1], h, d.eta)
    if ks > 0:
        ok &= in_B_profile(lam[N - ks:], h, d.eta)
    if N - kp - ks > 0:
        ok &= in_G_profile(lam[kp:N - ks + 1], h, d.eta)
    return bool(ok)


def brute_prefix(lam, h, eta):
    """Oracle: largest p on the grid with (v, p) in B(eta), by direct loop."""
    best = 0
    for k in range(1, len(lam)):
        if in_B_profile(lam[:k + 1], h, eta):
            best = k
    return best * h


def brute_suffix(lam, h, eta, p):
    N = len(lam) - 1
    kp = int(round(p / h))
    best = 0
    for j in range(1, N - kp + 1):
        if in_B_profile(lam[N - j:], h, eta):
            best = j
    return best * h


def brute_in_G(lam, h, eta):
    N = len(lam) - 1
    for k in range(N + 1):
        if np.trapezoid(lam[:k + 1], dx=h) < eta * k * h - TOL:
            return False
        if np.trapezoid(lam[N - k:], dx=h) < eta * k * h - TOL:
            return False
    return True


# ---------------------------------------------------------------------------
# model level

def profile(model, v, t, tau=32.0, check=False):
    """lambda along [0, t].  With check=True, samples whose value moves by
    more than 1e-8 when the past is doubled count as non-converged and are
    set to 0, which is conservative toward B(eta)."""
    times, lu, ls, lam, S = lin.lambda_profile(model, v, t, tau)
    if check:
        _, lu2, ls2, lam2, _ = lin.lambda_profile(model, v, t, 2 * tau)
        bad = np.abs(lam2 - lam) > 1e-8
        lam = np.where(bad, 0.0, lam2)
    return times, np.maximum(lam, 0.0), S


def lambda_integral(model, v, t, tau=32.0):
    times, lam, _ = profile(model, v, t, tau)
    return float(cumulative(lam, times[1] - times[0] if len(times) > 1 else 0.0)[-1])


def in_G(model, v, t, eta, tau=32.0):
    times, lam, _ = profile(model, v, t, tau)
    return in_G_profile(lam, times[1] - times[0], eta)


def in_B(model, v, t, eta, tau=32.0):
    times, lam, _ = profile(model, v, t, tau)
    return in_B_profile(lam, times[1] - times[0], eta)


def in_reg(model, v, eta, tau=32.0):
    lam, _, _ = lin.lambda_batch(model, np.atleast_2d(v), tau)
    return lam >= eta - TOL


def decompose(model, v, t, eta, tau=32.0):
    times, lam, _ = profile(model, v, t, tau)
    return decompose_profile(lam, times[1] - times[0], eta)


def classify(model, v, t, eta, tau=32.0):
    times, lam, _ = profile(model, v, t, tau)
    h = times[1] - times[0]
    tags = []
    if in_B_profile(lam, h, eta):
        tags.append("B")
    if in_G_profile(lam, h, eta):
        tags.append("G")
    if in_C_profile(lam, eta):
        tags.append("C")
    if lam[0] >= eta - TOL:
        tags.append("Reg")
    return dict(tags=tags, lambda_integral=float(cumulative(lam, h)[-1]),
                decomposition=asdict(decompose_profile(lam, h, eta)))


def thickened_bad(lam_ext, h, n, eta, pad=1.0):
    """Membership of (x, n) in [B(eta)] from lambda sampled on [-pad, n+pad]:
    some (f_{-s} x, n + s + t) with s, t in [0, 1] lies in B(eta)."""
    k0 = int(round(pad / h))
    kn = k0 + int(round(n / h))
    ks = np.arange(0, int(round(1.0 / h)) + 1)
    I = cumulative(lam_ext, h)
    a = I[k0 - ks]                     # start at -s
    b = I[kn + ks]                     # end at n + t
    lenm = (n + ks[:, None] * h + ks[None, :] * h)
    val = b[None, :] - a[:, None] - eta * lenm
    return bool(val.min() < 0)


# ---------------------------------------------------------------------------
# segment store

def segment_record(model, v, t, eta, tau=32.0):
    rec = classify(model, v, t, eta, tau)
    rec.update(model=model.kind, v=[float(x) for x in np.asarray(v).ravel()], t=float(t), eta=eta)
    return rec


def write_segments(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_segments(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# transitions, gluing and closing

class GluingError(RuntimeError):
    pass


class ClosingError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (last residual {residual:.3g})")
        self.residual = residual


def _coords_chunked(model, target, Minv, S, chunk=20000):
    """Coordinates (unstable, stable, flow) of samples relative to target in
    the linearized splitting at target."""
    from .foliation import rel
    flat = S.reshape(-1, 3)
    out = np.empty(flat.shape)
    for i in range(0, len(flat), chunk):
        blk = flat[i:i + chunk]
        out[i:i + chunk] = rel(model, np.broadcast_to(target, blk.shape), blk) @ Minv.T
    return out.reshape(S.shape)


@dataclass
class Transition:
    a: float          # unstable arclength of the launch point from x
    tau: float        # flight time to the target
    y: np.ndarray     # launch point on W^u(x)
    arrival: np.ndarray
    dist: float
    coords: np.ndarray = None


def _leaf_spline(model, x, side, a_max, node_step):
    """Cubic spline through integrated leaf nodes, in x's chart, on [-a_max, a_max]."""
    from scipy.interpolate import CubicSpline
    from .foliation import _integrate, rel
    _, H = _integrate(model, np.vstack([x, x]), side, [a_max, -a_max], node_step, record=True)
    nodes = np.vstack([H[1, ::-1], H[0, 1:]])
    lift = x + rel(model, np.broadcast_to(x, nodes.shape), nodes)
    return CubicSpline(np.linspace(-a_max, a_max, len(nodes)), lift, axis=0)


def _embed(X):
    return np.column_stack([X[:, 0], X[:, 1], np.cos(X[:, 2]), np.sin(X[:, 2])])


def transition_search(model, x, target, a_max=0.04, tau_min=0.0, tau_max=12.0, hit=0.04,
                      n_leaf=6000, search_step=1 / 16, node_step=0.005, alpha_max=0.15, chunk=1.0):
    """Earliest time tau in [tau_min, tau_max] at which some point y of the
    local unstable leaf W^u_{a_max}(x) arrives within `hit` of target.

    The leaf arc is sampled densely (spline through integrated nodes) and
    flowed with a coarse step.  Arrivals are screened by their coordinates
    in the splitting (E^u, E^s, X) at target: the stable coordinate is
    nearly constant along the expanded arc, so a sample with small stable
    and moderate unstable/flow coordinates is refined to the nearby exact
    arrival by a 1D solve in the launch parameter."""
    from scipy.optimize import brentq
    from .foliation import _integrate, rel, tdist, leaf_tangent, flow_field

    x = model.normalize(np.asarray(x, float)[None])[0]
    target = model.normalize(np.asarray(target, float)[None])[0]
    spl = _leaf_spline(model, x, "u", a_max, node_step)
    A = np.linspace(-a_max, a_max, n_leaf)
    Y = model.normalize(spl(A))
    M = np.column_stack([leaf_tangent(model, target[None], "u")[0], leaf_tangent(model, target[None], "s")[0],
                         flow_field(model, target[None])[0]])
    Minv = np.linalg.inv(M)
    nchunk = max(int(round(chunk / search_step)), 1)
    nblocks = int(math.ceil(tau_max / (nchunk * search_step) - 1e-9))

    def coords(a, tau, exact=False):
        y = _integrate(model, x[None], "u", a) if exact else model.normalize(spl(a)[None])
        arr = model.endpoint(y, tau)
        return y[0], arr[0], rel(model, target[None], arr)[0] @ Minv.T

    cur = Y
    for blk in range(nblocks):
        t0 = blk * nchunk * search_step
        S, _ = model._run(cur, nchunk * search_step, every=1, nsteps=nchunk)
        S = S[..., :3]
        cur = S[:, -1]
        times = t0 + search_step * np.arange(S.shape[1])
        keep = (times >= tau_min - 1e-12) & (times <= tau_max + 1e-12)
        if blk > 0:
            keep[0] = False
        if not keep.any():
            continue
        C = _coords_chunked(model, target, Minv, S[:, keep])
        tk = times[keep]
        ok = (np.abs(C[..., 1]) < hit) & (np.abs(C[..., 0]) < alpha_max) & (np.abs(C[..., 2]) < 0.6 * search_step)
        cand = np.argwhere(ok)
        if not len(cand):
            continue
        cand = cand[np.lexsort((np.abs(C[cand[:, 0], cand[:, 1], 0]), cand[:, 1]))]
        tried = 0
        for i, k in cand:
            if tried >= 12:
                break
            tried += 1
            tau = tk[k]
            a = A[i]
            al = C[:, k, 0]
            for j in (i - 1, i):
                if 0 <= j < n_leaf - 1 and al[j] * al[j + 1] <= 0:
                    try:
                        a = brentq(lambda a: coords(a, tau)[2][0], A[j], A[j + 1], xtol=1e-15)
                    except ValueError:
                        pass
                    break
            for _ in range(3):
                y, arr, c = coords(a, tau, exact=True)
                tau -= c[2]
            y, arr, c = coords(a, tau, exact=True)
            d = tdist(model, arr[None], target[None])[0]
            if d < hit and tau >= tau_min - 1e-9:
                return Transition(float(a), float(tau), y, arr, float(d), c)
    return None


def two_sided_search(model, x, target, a_max=0.02, b_max=0.02, tau_back=7.0, tau_max=10.0, n_leaf=6000,
                     search_step=1 / 16, node_step=0.005, radius=0.1, spacing=0.1, tol=1e-10):
    """Return from x to target through a crossing of f_tau W^u_{a_max}(x) with
    f_{-tau_back} W^s_{b_max}(target).

    A one-sided search stalls once the flowed unstable arc is sampled more
    coarsely than the screening window; splitting the flight between the two
    leaves keeps both arcs finely sampled.  Near pairs are found with a
    k-d tree and the crossing is solved exactly for (a, b, tau) by Newton.
    The returned Transition has tau = tau + tau_back and arrival on
    W^s(target)."""
    from scipy.spatial import cKDTree
    from .foliation import rel, tdist

    x = model.normalize(np.asarray(x, float)[None])[0]
    target = model.normalize(np.asarray(target, float)[None])[0]
    su = _leaf_spline(model, x, "u", a_max, node_step)
    ss = _leaf_spline(model, target, "s", b_max, node_step)
    A = np.linspace(-a_max, a_max, n_leaf)
    B = np.linspace(-b_max, b_max, n_leaf)
    Z = model.endpoint(model.normalize(ss(B)), -tau_back)
    keep = np.ones(len(Z), bool)
    gz = np.linalg.norm(np.diff(_embed(Z), axis=0), axis=1)
    keep[1:] &= gz < spacing
    tree = cKDTree(_embed(Z[keep]))
    zi = np.flatnonzero(keep)

    def F(p):
        a, b, tau = p
        y = model.normalize(su(a)[None])
        arr = model.endpoint(y, tau) if tau > 0 else y
        z = model.endpoint(model.normalize(ss(b)[None]), -tau_back)
        return rel(model, z, arr)[0], y[0]

    def solve(p):
        p = np.array(p, float)
        for _ in range(12):
            r, _ = F(p)
            if np.abs(r).max() < tol:
                return p
            J = np.empty((3, 3))
            for j, h in enumerate((1e-8, 1e-8, 1e-7)):
                q = p.copy()
                q[j] += h
                J[:, j] = (F(q)[0] - r) / h
            try:
                p = p - np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                return None
            if abs(p[0]) > a_max or abs(p[1]) > b_max or p[2] < 0:
                return None
        return p if np.abs(F(p)[0]).max() < tol else None

    cur = model.normalize(su(A))
    n = int(math.ceil(tau_max / search_step - 1e-9))
    for k in range(n + 1):
        if k:
            cur = model.endpoint(cur, search_step, nsteps=1)
        E = _embed(cur)
        if np.median(np.linalg.norm(np.diff(E, axis=0), axis=1)) > spacing:
            break
        d, j = tree.query(E, distance_upper_bound=radius)
        hits = np.flatnonzero(np.isfinite(d))
        for i in hits[np.argsort(d[hits])][:8]:
            p = solve((A[i], B[zi[j[i]]], k * search_step))
            if p is None:
                continue
            _, y = F(p)
            arr = model.normalize(ss(p[1])[None])[0]
            return Transition(float(p[0]), float(p[2] + tau_back), y, arr,
                              float(tdist(model, arr[None], target[None])[0]))
    return None


def _reference_segment(segments, store=None):
    """Highest lambda-integral segment of length >= 1 among the stored ones."""
    cand = [r for r in (store or []) if r["t"] >= 1]
    if not cand:
        return None
    r = max(cand, key=lambda r: r["lambda_integral"] / r["t"])
    return np.asarray(r["v"]), r["t"]


@dataclass
class ShadowResult:
    w: np.ndarray
    starts: list
    transitions: list
    lengths: list
    distances: list = field(default_factory=list)
    rho: float = 0.0
    tau_bound: float = 0.0
    reference: object = None

    @property
    def verified(self):
        return all(d < self.rho for d in self.distances)

    def summary(self):
        return dict(w=[float(a) for a in self.w], starts=self.starts, transitions=self.transitions,
                    lengths=self.lengths, distances=self.distances, rho=self.rho,
                    tau_bound=self.tau_bound, verified=self.verified)


def newton_chain(model, Q, steps, h, cyclic=False, free_period=False, maxit=25, fd=1e-7, tol=1e-14):
    """Damped minimum-norm Newton on a chain of shooting nodes.

    Link k maps Q[k] by steps[k] integrator steps of size h onto Q[k+1]
    (onto Q[0] for the last link when cyclic).  With free_period the common
    step size h is an unknown as well (all links then share one step count).
    Returns (Q, h, residual history)."""
    from .foliation import rel, flow_field

    Q = model.normalize(np.asarray(Q, float))
    N = len(Q)
    steps = [int(m) for m in steps]
    L = N if cyclic else N - 1
    eye = np.eye(3)

    def advance(X, hh, idx):
        out = np.empty((len(idx), 3))
        for m in set(steps[k] for k in idx):
            sel = [i for i, k in enumerate(idx) if steps[k] == m]
            out[sel] = model.endpoint(X[sel], m * hh, nsteps=m)
        return out

    def residual(Q, hh):
        E = advance(Q[:L], hh, list(range(L)))
        nxt = [(k + 1) % N for k in range(L)]
        return np.vstack([rel(model, Q[j][None], E[k][None]) for k, j in enumerate(nxt)])

    R = residual(Q, h)
    nr = np.linalg.norm(R)
    hist = [nr]
    nu = 3 * N + (1 if free_period else 0)
    for it in range(maxit):
        if nr < tol:
            break
        X = np.repeat(Q[:L], 3, axis=0) + fd * np.tile(eye, (L, 1))
        Ep = advance(X, h, [k for k in range(L) for _ in range(3)])
        J = np.zeros((3 * L, nu))
        for k in range(L):
            j = (k + 1) % N
            Rp = rel(model, np.broadcast_to(Q[j], (3, 3)), Ep[3 * k:3 * k + 3])
            J[3 * k:3 * k + 3, 3 * k:3 * k + 3] += ((Rp - R[k]) / fd).T
            J[3 * k:3 * k + 3, 3 * j:3 * j + 3] -= eye
            if free_period:
                J[3 * k:3 * k + 3, -1] = flow_field(model, (Q[j] + R[k])[None])[0] * steps[k]
        step = np.linalg.lstsq(J, -R.ravel(), rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            Qn = model.normalize(Q + lam * step[:3 * N].reshape(N, 3))
            hn = h + lam * step[-1] if free_period else h
            Rn = residual(Qn, hn)
            nrn = np.linalg.norm(Rn)
            if nrn < nr:
                break
            lam *= 0.5
        else:
            break
        Q, h, R, nr = Qn, hn, Rn, nrn
        hist.append(nr)
    return Q, h, hist


def _nodes_along(model, x, m, per=64):
    """Shooting nodes on the orbit of x over m steps of the model step, one
    every `per` steps; returns (nodes, step counts of the links)."""
    cuts = list(range(0, m, per)) + [m]
    S, _ = model._run(np.asarray(x, float)[None], m * model.step, every=1, nsteps=m)
    nodes = S[0, cuts[:-1], :3]
    return nodes, np.diff(cuts)


def verify_shadowing(model, w, starts, segments):
    """d_{t_j}(f_{s_j} w, v_j) from one forward integration of w on the
    model step grid (starts and lengths are multiples of the step)."""
    h = model.step
    ks = [int(round(s / h)) for s in starts]
    ms = [int(round(t / h)) for _, t in segments]
    n1 = int(round(1.0 / h))
    total = ks[-1] + ms[-1] + n1
    S, _ = model._run(np.asarray(w, float)[None], total * h, every=1, nsteps=total)
    out = []
    for k, m, (v, _) in zip(ks, ms, segments):
        ref, _ = model._run(np.asarray(v, float)[None], (m + n1) * h, every=1, nsteps=m + n1)
        out.append(float(model.dist(S[0, k:k + m + n1 + 1, :3], ref[0, :, :3]).max()))
    return out


def shadow_segments(model, segments, rho, windows=None, store=None, tau_max=14.0, hit=None,
                    a_max=None, delta=None, kappa=None):
    """One orbit w visiting the given segments (v_j, t_j) in order: the
    segment j orbit f_{s_j} w stays within rho of v_j for time t_j.

    Each new segment is attached by a transition search from the unstable
    leaf at the end of the current piece to v_j, followed by the local
    product z = [f_tau y, v_j].  The pieces (segment, transition, segment,
    ...) form a pseudo-orbit whose jumps all lie along unstable leaves; a
    multiple-shooting Newton polish turns it into a true orbit.  Times are
    rounded to the integrator grid."""
    from .foliation import local_product, default_calibration

    h = model.step
    segs = [(model.normalize(np.asarray(v, float)[None])[0], h * round(float(t) / h)) for v, t in segments]
    if not segs:
        raise ValueError("no segments")
    hit = 0.6 * rho if hit is None else hit
    a_max = 0.6 * rho if a_max is None else a_max
    cal = default_calibration(model)
    delta = max(cal["delta"], hit) if delta is None else delta
    kappa = cal["kappa"] if kappa is None else kappa
    ref = _reference_segment(segs, store)
    # each transition is launched one time unit after the segment ends, so the
    # unstable offset of the launch point contracts over the whole d_t window
    n1 = int(round(1.0 / h))
    pieces = [(segs[0][0], int(round(segs[0][1] / h)) + n1)]
    starts, trans = [0.0], []
    s = segs[0][1]
    for j in range(1, len(segs)):
        v, t = segs[j]
        lo, hi = (0.0, tau_max) if windows is None else windows[j - 1]
        x = model.endpoint(pieces[-1][0][None], pieces[-1][1] * h, nsteps=pieces[-1][1])[0]
        tr = transition_search(model, x, v, a_max, lo, hi, hit)
        if tr is None:
            raise GluingError(f"step {j}: no transition within [{lo}, {hi}]")
        try:
            lp = local_product(model, tr.arrival, v, delta=delta, kappa=kappa, detail=True)
        except RuntimeError as e:
            raise GluingError(f"step {j}: local product failed: {e}") from e
        m_tr = int(round((tr.tau - lp.c) / h))
        tau = (m_tr + n1) * h
        if windows is not None and not (lo - h <= tau <= hi + h):
            raise GluingError(f"step {j}: transition {tau:.4g} outside window [{lo}, {hi}]")
        zs = model.endpoint(lp.point[None], -lp.c)[0] if lp.c != 0 else lp.point
        pieces.append((tr.y, m_tr))
        pieces.append((zs, int(round(t / h)) + (n1 if j < len(segs) - 1 else 0)))
        starts.append(s + tau)
        trans.append(float(tau))
        s = s + tau + t
    nodes, steps = [], []
    for x0, m in pieces:
        if m == 0:
            continue
        nd, st = _nodes_along(model, x0, m)
        nodes.append(nd)
        steps.extend(st)
    last = pieces[-1]
    end = model.endpoint(last[0][None], last[1] * h, nsteps=last[1])
    Q = np.vstack(nodes + [end])
    Q, _, hist = newton_chain(model, Q, steps, h)
    res = ShadowResult(Q[0], starts, trans, [t for _, t in segs], rho=rho, reference=ref,
                       tau_bound=float(max(trans)) if trans else 0.0)
    res.chain_residual = float(hist[-1])
    res.distances = verify_shadowing(model, Q[0], starts, segs)
    return res


@dataclass
class ClosedCandidate:
    w: np.ndarray
    period: float
    tau: float
    residual: float
    shadow: float
    iterations: int
    nsteps: int = 0
    single_shot: float = float("nan")   # d_K(f_P w, w) from one integration

    @property
    def converged(self):
        return self.residual < 1e-8

    def summary(self):
        return dict(w=[float(a) for a in self.w], period=float(self.period), tau=float(self.tau),
                    residual=float(self.residual), single_shot=float(self.single_shot), shadow=float(self.shadow),
                    iterations=self.iterations)


def closing_residual(model, w, P, nsteps=None):
    """d_K(f_P w, w), with f_P taken in nsteps uniform steps."""
    from .surface import knieper_distance
    e = model.endpoint(np.asarray(w)[None], P, nsteps=nsteps)[0]
    return float(knieper_distance(model, e, w))


def shooting_residual(model, Q, m, h):
    """Largest link defect d_K(f_{m h} Q_k, Q_{k+1}) of a cyclic chain.

    A single integration over the whole period multiplies the node error by
    about e^{chi P}, so past P ~ 15 it cannot resolve 1e-8 whatever the
    solver does; the link defects are what certify a nearby periodic orbit."""
    from .surface import knieper_distance
    E = model.endpoint(Q, m * h, nsteps=m)
    return float(max(knieper_distance(model, e, q) for e, q in zip(E, np.roll(Q, -1, axis=0))))


def refine_periodic(model, q0, P0, seg_len=1.0, nodes=False, **kw):
    """Periodic orbit through q0 with period near P0 by cyclic multiple
    shooting with the period free.  Returns (w, P, history, total steps),
    plus the link defect when nodes=True."""
    N = max(int(math.ceil(P0 / seg_len)), 1)
    m = max(int(math.ceil(P0 / N / model.step)), 1)
    q0 = model.normalize(np.asarray(q0, float)[None])[0]
    S, _ = model._run(q0[None], P0, every=m, nsteps=N * m)
    Q = S[0, :N, :3]
    Q, hh, hist = newton_chain(model, Q, [m] * N, P0 / (N * m), cyclic=True, free_period=True, **kw)
    out = (Q[0], float(hh * N * m), hist, N * m)
    return out + (shooting_residual(model, Q, m, hh),) if nodes else out


def close_orbit(model, v, t, eps, tau_max=16.0, hit=None, a_max=None):
    """A periodic orbit w with period t + tau shadowing (v, t).

    The return is found by a transition search from W^u_{a}(f_t v) back to v
    (leaf coordinates give the initial guess q0 = f_{-t} y on W^u(v)), then
    refined by damped Newton on the return map with the period free."""
    from .surface import bowen_distance

    v = model.normalize(np.asarray(v, float)[None])[0]
    hit = eps if hit is None else hit
    a_max = eps if a_max is None else a_max
    x = model.endpoint(v[None], t)[0]
    tr = transition_search(model, x, v, a_max, 0.0, tau_max, hit)
    if tr is None:
        # the sampled unstable arc is too coarse past tau ~ 12; meet halfway
        tr = two_sided_search(model, x, v, a_max, hit, tau_max=max(tau_max - 7.0, 0.0))
    if tr is None:
        raise ClosingError(f"no return within tau_max = {tau_max}", np.inf)
    q0 = model.endpoint(tr.y[None], -t)[0]
    P0 = t + tr.tau
    r0 = closing_residual(model, q0, P0)
    q, P, hist, nsteps, res = refine_periodic(model, q0, P0, nodes=True)
    # an input that is already closed may come back with refinement noise
    if not np.isfinite(res) or (res > r0 and res >= 1e-8):
        raise ClosingError("Newton refinement diverged", res)
    return ClosedCandidate(q, P, P - t, res, float(bowen_distance(model, v, q, t)), len(hist) - 1, nsteps,
                           closing_residual(model, q, P, nsteps))
