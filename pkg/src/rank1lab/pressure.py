"""Potentials, (t, eps)-separated sets, partition sums and pressure estimates.

Separation test.  For eps below the injectivity radius, d_t(x, y) < eps holds
exactly when the lifted orbits stay within eps in the universal cover over
[0, t+1].  Footprint distance between lifted geodesics is convex in time in
nonpositive curvature, so the maximum over the window is attained at one of
its ends; the test therefore needs only the start points and the lifted end
points.  On the cylinder the cover distance is evaluated with the local
formula sqrt(ds^2 + r(s_mid)^2 dphi^2), which is accurate at the eps scale.

Greedy maximal separated sets use a uniform cell grid on the reduced end
points (plus deck images for points near the octagon boundary) so each
insertion only inspects nearby members.
"""
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from numba import njit
from scipy.special import logsumexp

from . import _core
from . import linearization as lin
from .surface import (group_ball, inside_octagon, mobius, UnsupportedQuery, TWO_PI)


# ---------------------------------------------------------------------------
# potentials

class Potential:
    """phi on T^1 M.  along() samples phi on the orbit grid of the model step;
    integrate() is the trapezoid rule of those samples."""
    tag = "potential"

    def along(self, model, X, t, step=None):
        raise NotImplementedError

    def integrate(self, model, X, t, step=None):
        X = np.atleast_2d(X)
        if t == 0:
            return np.zeros(len(X))
        vals, h = self.along(model, X, t, step)
        return h * (vals.sum(axis=1) - 0.5 * (vals[:, 0] + vals[:, -1]))

    def integrate_grid(self, model, X, t_grid, step=None, chunk=8192):
        """Phi(x, t) for every row x and every t in t_grid: one orbit per row
        over [0, max t], cumulative trapezoid sums read off at each t."""
        X = np.atleast_2d(X)
        t_grid = np.asarray(t_grid, float)
        out = np.zeros((len(X), len(t_grid)))
        if len(X) == 0 or t_grid.max() <= 0:
            return out
        _, h = _grid(model, t_grid.max(), step)
        idx = np.rint(t_grid / h).astype(int)
        if np.abs(idx * h - t_grid).max() > 1e-9:
            # horizons off a common grid: integrate each on its own
            for k, t in enumerate(t_grid):
                out[:, k] = self.integrate(model, X, t, step)
            return out
        for i in range(0, len(X), chunk):
            vals, h = self.along(model, X[i:i + chunk], t_grid.max(), step)
            cum = np.zeros_like(vals)
            cum[:, 1:] = np.cumsum(0.5 * h * (vals[:, 1:] + vals[:, :-1]), axis=1)
            out[i:i + chunk] = cum[:, idx]
        return out

    def descriptor(self):
        return dict(tag=self.tag)

    def __add__(self, other):
        return LinearCombination([(1.0, self), (1.0, other)])


def _grid(model, t, step):
    h0 = model.step if step is None else step
    n = max(int(math.ceil(t / h0 - 1e-9)), 1)
    return n, t / n


class ZeroPotential(Potential):
    tag = "zero"

    def along(self, model, X, t, step=None):
        n, h = _grid(model, t, step)
        return np.zeros((len(np.atleast_2d(X)), n + 1)), h

    def integrate(self, model, X, t, step=None):
        return np.zeros(len(np.atleast_2d(X)))


class ConstantPotential(Potential):
    tag = "constant"

    def __init__(self, c):
        self.c = float(c)

    def along(self, model, X, t, step=None):
        n, h = _grid(model, t, step)
        return np.full((len(np.atleast_2d(X)), n + 1), self.c), h

    def integrate(self, model, X, t, step=None):
        return np.full(len(np.atleast_2d(X)), self.c * t)

    def descriptor(self):
        return dict(tag=self.tag, c=self.c)


class GeometricPotential(Potential):
    """q * phi^u with phi^u = -u^u (the unstable Riccati value)."""
    tag = "q*phi_u"

    def __init__(self, q=1.0, tau=16.0):
        self.q = float(q)
        self.tau = float(tau)

    def along(self, model, X, t, step=None):
        n, h = _grid(model, t, step)
        if self.q == 0:
            return np.zeros((len(np.atleast_2d(X)), n + 1)), h
        _, u = lin.unstable_along(model, np.atleast_2d(X), t, self.tau, step=h)
        return -self.q * u, h

    def descriptor(self):
        return dict(tag=self.tag, q=self.q, tau=self.tau)


class SampledField(Potential):
    """Values on a regular grid over the chart box (x, y, angle), linearly
    interpolated at reduced chart coordinates.  `holder` is declared, not
    checked."""
    tag = "sampled-field"

    def __init__(self, axes, values, holder=1.0, name="field"):
        from scipy.interpolate import RegularGridInterpolator
        self.axes = [np.asarray(a, float) for a in axes]
        self.values = np.asarray(values, float)
        self.holder = float(holder)
        self.name = name
        self._f = RegularGridInterpolator(self.axes, self.values, bounds_error=False, fill_value=None)

    def value(self, X):
        X = np.atleast_2d(X)
        Y = X[:, :3].copy()
        Y[:, 2] = (Y[:, 2] + np.pi) % TWO_PI - np.pi
        return self._f(Y)

    def along(self, model, X, t, step=None):
        n, h = _grid(model, t, step)
        S, _ = model._run(np.atleast_2d(X), t, every=1, nsteps=n)
        vals = self.value(S[..., :3].reshape(-1, 3)).reshape(S.shape[:2])
        return vals, h

    def descriptor(self):
        return dict(tag=self.tag, name=self.name, holder=self.holder, shape=list(self.values.shape))


def bump_field(model, center=(0.0, 0.0), width=0.5, height=1.0, n=33):
    """A smooth bump in the footprint, constant in the angle, sampled on a grid."""
    xs = np.linspace(-1, 1, n)
    ths = np.linspace(-np.pi, np.pi, 9)
    Xg, Yg = np.meshgrid(xs, xs, indexing="ij")
    from .surface import disc_distance
    if model.code <= 1:
        d = disc_distance(Xg + 1j * Yg, complex(*center))
        d = np.where(Xg ** 2 + Yg ** 2 < 1, d, 10.0)
    else:
        d = np.hypot(Xg - center[0], Yg - center[1])
    base = height * np.exp(-(d / width) ** 2)
    vals = np.repeat(base[:, :, None], len(ths), axis=2)
    return SampledField([xs, xs, ths], vals, holder=1.0, name="bump")


class LinearCombination(Potential):
    tag = "linear-combination"

    def __init__(self, terms):
        self.terms = [(float(c), p) for c, p in terms]

    def along(self, model, X, t, step=None):
        out, h = None, None
        for c, p in self.terms:
            v, h = p.along(model, X, t, step)
            out = c * v if out is None else out + c * v
        return out, h

    def integrate(self, model, X, t, step=None):
        return sum(c * p.integrate(model, X, t, step) for c, p in self.terms)

    def descriptor(self):
        return dict(tag=self.tag, terms=[[c, p.descriptor()] for c, p in self.terms])


class ErgodicAverage(Potential):
    """phi_T(v) = (1/T) int_0^T phi(f_s v) ds."""
    tag = "ergodic-average"

    def __init__(self, base, T):
        if T <= 0:
            raise ValueError("T must be positive")
        self.base = base
        self.T = float(T)

    def along(self, model, X, t, step=None):
        if isinstance(self.base, ConstantPotential):
            return self.base.along(model, X, t, step)
        n, h = _grid(model, t, step)
        m = max(int(round(self.T / h)), 1)
        vals, _ = self.base.along(model, X, (n + m) * h, h)
        C = np.zeros(vals.shape)
        C[:, 1:] = np.cumsum(0.5 * h * (vals[:, 1:] + vals[:, :-1]), axis=1)
        return (C[:, m:m + n + 1] - C[:, :n + 1]) / (m * h), h

    def descriptor(self):
        return dict(tag=self.tag, T=self.T, base=self.base.descriptor())


def ergodic_average_potential(model, potential, T):
    return ErgodicAverage(potential, T)


def potential_from_spec(spec):
    """Build a potential from a small dict, e.g. {"tag": "q*phi_u", "q": 0.5}."""
    tag = spec.get("tag", "zero")
    if tag == "zero":
        return ZeroPotential()
    if tag == "constant":
        return ConstantPotential(spec["c"])
    if tag in ("q*phi_u", "geometric"):
        return GeometricPotential(spec.get("q", 1.0), spec.get("tau", 16.0))
    if tag == "linear-combination":
        return LinearCombination([(c, potential_from_spec(p)) for c, p in spec["terms"]])
    if tag == "ergodic-average":
        return ErgodicAverage(potential_from_spec(spec["base"]), spec["T"])
    raise ValueError(f"unknown potential tag {tag!r}")


# ---------------------------------------------------------------------------
# seeds

def seed_patch(model, n, center, radius, seed=0):
    """Scrambled Sobol points in a box of half-width `radius` (in orthonormal
    units) around `center`."""
    from scipy.stats import qmc
    c = model.normalize(np.asarray(center, float)[None])[0]
    m = int(math.ceil(math.log2(max(n, 2))))
    U = qmc.Sobol(d=3, scramble=True, seed=seed).random_base2(m)[:n]
    U = 2 * U - 1
    if model.code <= 1:
        em = _core.conformal(model.code, model.p, c[0], c[1])[0]
        sx, sy = radius * em, radius * em
    elif model.code == 2:
        sx, sy = radius, radius / _core.profile(model.p, c[0])[0]
    else:
        sx, sy = radius, 0.0
    X = np.column_stack([c[0] + sx * U[:, 0], c[1] + sy * U[:, 1], c[2] + radius * U[:, 2]])
    return X


def seed_sing(model, n, seed=0):
    """Sobol points on the Sing parameterization (height, phase, orientation)."""
    from scipy.stats import qmc
    if model.code != 2:
        return np.empty((0, 3))
    w = model.params["w"]
    m = int(math.ceil(math.log2(max(n, 2))))
    U = qmc.Sobol(d=3, scramble=True, seed=seed).random_base2(m)[:n]
    th = np.where(U[:, 2] < 0.5, 0.5 * np.pi, -0.5 * np.pi)
    return np.column_stack([-w + 2 * w * U[:, 0], TWO_PI * U[:, 1], th])


# ---------------------------------------------------------------------------
# orbit ends

@dataclass
class OrbitEnds:
    """Start and lifted end points of seeds at horizons t (window [0, t+1])."""
    X: np.ndarray
    times: np.ndarray
    start: np.ndarray        # complex cover start (octagon) or (s, phi) pairs
    red: np.ndarray          # (N, nt) reduced ends
    cover: np.ndarray        # (N, nt) lifted ends


def _flow_chunk(args):
    model, X, T, n, idx = args
    S, G = model._run(X, T, every=1, nsteps=n)
    return S[:, idx], G[:, idx]


def run_chunks(model, X, T, n, idx, workers=1):
    """States and cover elements at step indices idx.  With workers > 1 the
    seeds are split into contiguous chunks flowed in separate processes and
    concatenated in seed order; every trajectory is computed independently,
    so the result does not depend on the number of workers."""
    if workers <= 1 or len(X) < 2 * workers:
        return _flow_chunk((model, X, T, n, idx))
    from concurrent.futures import ProcessPoolExecutor
    parts = np.array_split(X, workers)
    with ProcessPoolExecutor(workers) as ex:
        res = list(ex.map(_flow_chunk, [(model, P, T, n, idx) for P in parts]))
    return np.concatenate([r[0] for r in res]), np.concatenate([r[1] for r in res])


def orbit_ends(model, X, t_grid, step=1 / 16, workers=1):
    """Flow seeds to max(t)+1 and record start/end data at each t+1."""
    X = np.atleast_2d(np.asarray(X, float))
    t_grid = np.asarray(t_grid, float)
    T = t_grid.max() + 1.0
    n = int(math.ceil(T / step - 1e-9))
    h = T / n
    idx = np.rint((t_grid + 1.0) / h).astype(int)
    S, G = run_chunks(model, X, T, n, idx, workers)
    idx = np.arange(len(idx))
    if model.code <= 1:
        z0 = X[:, 0] + 1j * X[:, 1]
        red = S[:, idx, 0] + 1j * S[:, idx, 1]
        cov = model.cover_positions(S[:, idx], G[:, idx])
        return OrbitEnds(X, t_grid, z0, red, cov)
    if model.code == 2:
        start = X[:, 0] + 1j * X[:, 1]
        cov = S[:, idx, 0] + 1j * S[:, idx, 1]
        red = S[:, idx, 0] + 1j * (S[:, idx, 1] % TWO_PI)
        return OrbitEnds(X, t_grid, start, red, cov)
    raise UnsupportedQuery("separated sets need a surface model")


# ---------------------------------------------------------------------------
# greedy kernels

@njit(cache=True)
def _hdist(z, w):
    num = abs(z - w)
    den = (1.0 - abs(z) ** 2) * (1.0 - abs(w) ** 2)
    if den <= 0.0:
        return np.inf
    return 2.0 * np.arcsinh(num / np.sqrt(den))


@njit(cache=True)
def _cdist(p, a, q):
    """Cylinder cover distance between (s, phi) pairs stored as complex."""
    ds = a.real - q.real
    sm = 0.5 * (a.real + q.real)
    r = _core.profile(p, sm)[0]
    dphi = a.imag - q.imag
    return np.sqrt(ds * ds + r * r * dphi * dphi)


@njit(cache=True)
def _greedy(kind, p, order, start, cover, cells_ptr, cells, own, eps, ncell):
    """Greedy maximal (t, eps)-separated subset of the seeds in `order`.
    cells[cells_ptr[i]:cells_ptr[i+1]] are the grid cells where seed i is
    registered once accepted; own[i, :] lists the cells to scan for i."""
    N = len(order)
    head = -np.ones(ncell, dtype=np.int64)
    nxt = np.empty(cells_ptr[-1] + 1, dtype=np.int64)
    who = np.empty(cells_ptr[-1] + 1, dtype=np.int64)
    used = 0
    acc = np.zeros(len(start), dtype=np.bool_)
    for ii in range(N):
        i = order[ii]
        ok = True
        for c in own[i]:
            if c < 0:
                continue
            e = head[c]
            while e >= 0:
                j = who[e]
                if kind <= 1:
                    d0 = _hdist(start[i], start[j])
                    d1 = _hdist(cover[i], cover[j])
                else:
                    d0 = _cdist(p, start[i], start[j])
                    d1 = _cdist(p, cover[i], cover[j])
                if d0 < eps and d1 < eps:
                    ok = False
                    break
                e = nxt[e]
            if not ok:
                break
        if ok:
            acc[i] = True
            for k in range(cells_ptr[i], cells_ptr[i + 1]):
                c = cells[k]
                who[used] = i
                nxt[used] = head[c]
                head[c] = used
                used += 1
    return acc


_NEIGH = {}


def _octagon_neighbors(model):
    key = id(model.deck)
    if key not in _NEIGH:
        Ms = group_ball(2 * model.r_v + 1e-6)[1:]
        _NEIGH[key] = Ms
    return _NEIGH[key]


def _cell_tables(model, red, eps):
    """Cell registrations (with boundary images on the octagon) and scan lists."""
    N = len(red)
    idx_all = [np.arange(N)]
    if model.code <= 1:
        cs = eps / 2
        nx = int(math.ceil(2.0 / cs)) + 2

        def cell(z):
            ix = np.clip(((z.real + 1) / cs).astype(int) + 1, 0, nx - 1)
            iy = np.clip(((z.imag + 1) / cs).astype(int) + 1, 0, nx - 1)
            return ix, iy

        ix, iy = cell(red)
        cell_all = [ix * nx + iy]
        near = np.flatnonzero(~inside_octagon(red, model.deck, tol=-eps))
        if len(near):
            for M in _octagon_neighbors(model):
                gz = mobius(M, red[near])
                keep = inside_octagon(gz, model.deck, tol=eps) & (np.abs(gz) < 1)
                if keep.any():
                    gx, gy = cell(gz[keep])
                    idx_all.append(near[keep])
                    cell_all.append(gx * nx + gy)
        n1, n2, wrap = nx, nx, False
    else:
        a = model.params["a"]
        smax = max(np.abs(red.real).max(), 1.0) + 1.0
        n1 = int(math.ceil(2 * smax / eps)) + 2
        n2 = max(int(TWO_PI * a / eps), 1)
        ix = ((red.real + smax) / eps).astype(int) + 1
        iy = (red.imag / (TWO_PI / n2)).astype(int) % n2
        cell_all = [ix * n2 + iy]
        wrap = True
    own = np.full((N, 9), -1, dtype=np.int64)
    k = 0
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            jx, jy = ix + dx, iy + dy
            if wrap:
                jy = jy % n2
                good = (jx >= 0) & (jx < n1)
            else:
                good = (jx >= 0) & (jx < n1) & (jy >= 0) & (jy < n2)
            own[good, k] = (jx * n2 + jy)[good]
            k += 1
    I = np.concatenate(idx_all)
    C = np.concatenate(cell_all).astype(np.int64)
    o = np.argsort(I, kind="stable")
    ptr = np.zeros(N + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(np.bincount(I, minlength=N))
    return ptr, C[o], own, n1 * n2


# ---------------------------------------------------------------------------
# separated sets

@dataclass
class SeparatedSet:
    t: float
    eps: float
    members: np.ndarray            # (m, 3)
    index: np.ndarray = None       # indices into the seed array
    constraint: str = "full"

    def __len__(self):
        return len(self.members)


def greedy_separated(model, ends, k, eps, mask=None, rng=None, order=None):
    """Indices of a greedy maximal (t_k, eps)-separated subset of the seeds."""
    tables = getattr(ends, "_tables", None)
    if tables is None:
        tables = ends._tables = {}
    N = len(ends.X)
    if mask is None:
        mask = np.ones(N, dtype=bool)
    cand = np.flatnonzero(mask)
    if len(cand) == 0:
        return cand
    if order is None:
        rng = np.random.default_rng(0) if rng is None else rng
        order = cand[rng.permutation(len(cand))]
    else:
        order = np.asarray(order, dtype=np.int64)
        order = order[mask[order]]
    if (k, eps) not in tables:
        tables[(k, eps)] = _cell_tables(model, ends.red[:, k], eps)
    ptr, cells, own, ncell = tables[(k, eps)]
    acc = _greedy(model.code, model.p, order.astype(np.int64), ends.start, ends.cover[:, k],
                  ptr, cells, own, float(eps), ncell)
    return np.flatnonzero(acc)


def build_separated_set(model, seeds, t, eps, constraint="full", restarts=1, rng=None, step=1 / 16,
                        ends=None):
    """Largest of `restarts` greedy maximal (t, eps)-separated subsets of seeds."""
    seeds = np.atleast_2d(np.asarray(seeds, float)).reshape(-1, 3)
    if len(seeds) == 0:
        return SeparatedSet(t, eps, np.empty((0, 3)), np.empty(0, dtype=int), constraint)
    rng = np.random.default_rng(0) if rng is None else rng
    ends = orbit_ends(model, seeds, [t], step) if ends is None else ends
    best = None
    for _ in range(restarts):
        idx = greedy_separated(model, ends, 0, eps, rng=rng)
        if best is None or len(idx) > len(best):
            best = idx
    return SeparatedSet(t, eps, seeds[best], best, constraint)


def audit_separation(model, S, pairs=10000, rng=None, step=None):
    """Direct d_t check (sampled footprints over [0, t+1]) on all pairs when
    |E| <= 2000 and on `pairs` random pairs otherwise.  Returns the minimum
    pairwise d_t found."""
    from .surface import _as_array
    E = S.members
    m = len(E)
    if m < 2:
        return np.inf
    if m <= 2000 and m * (m - 1) // 2 <= max(pairs, 2000 * 1999 // 2):
        I, J = np.triu_indices(m, 1)
    else:
        rng = np.random.default_rng(1) if rng is None else rng
        I = rng.integers(0, m, pairs)
        J = rng.integers(0, m, pairs)
        keep = I != J
        I, J = I[keep], J[keep]
    F, G = model.flow_states(E, S.t + 1.0, every=4, step=step)
    if model.code <= 1:
        Z = model.cover_positions(F, G)
        from .surface import disc_distance
        best = np.inf
        for a in range(0, len(I), 20000):
            i, j = I[a:a + 20000], J[a:a + 20000]
            d = disc_distance(Z[i], Z[j]).max(axis=1)
            dm = np.array([model.dist(F[p], F[q]).max() for p, q in zip(i[d < 1.0], j[d < 1.0])])
            best = min(best, min(d.min(), dm.min() if len(dm) else np.inf))
        return float(best)
    best = np.inf
    for a in range(0, len(I), 20000):
        i, j = I[a:a + 20000], J[a:a + 20000]
        d = model.dist(F[i], F[j]).max(axis=1)
        best = min(best, d.min())
    return float(best)


def partition_sum(members_phi):
    """log of sum exp(Phi(x, t)) over the members (log-sum-exp); -inf when empty."""
    v = np.asarray(members_phi, float)
    if v.size == 0:
        return -np.inf
    return float(logsumexp(v))


def log_partition(model, S, potential, step=None):
    if len(S) == 0:
        return -np.inf
    return partition_sum(potential.integrate(model, S.members, S.t, step))


# ---------------------------------------------------------------------------
# pressure estimates

@dataclass
class PressureEstimate:
    value: float
    eps: list
    t_grid: list
    log_lambda: dict               # eps -> list over t (best over restarts)
    slopes: dict
    intercepts: dict
    residuals: dict
    counts: dict = field(default_factory=dict)
    spread: dict = field(default_factory=dict)
    extrapolated: float = None
    density_change: dict = field(default_factory=dict)
    density_warning: bool = False
    monotone_in_eps: bool = True
    constraint: str = "full"
    potential: dict = field(default_factory=dict)
    fit_times: list = field(default_factory=list)

    def recompute(self, eps):
        t = np.asarray(self.t_grid, float)
        y = np.asarray(self.log_lambda[eps], float)
        keep = np.isin(t, self.fit_times) & np.isfinite(y)
        return float(np.polyfit(t[keep], y[keep], 1)[0])

    def uncertainty(self):
        """Spread of the per-eps slopes plus the regression residual."""
        s = [v for v in self.slopes.values() if np.isfinite(v)]
        r = [v for v in self.residuals.values() if np.isfinite(v)]
        if not s:
            return np.inf
        return float((max(s) - min(s)) + (max(r) if r else 0.0))

    def to_dict(self):
        def f(x):
            if isinstance(x, dict):
                return {str(k): f(v) for k, v in x.items()}
            if isinstance(x, (list, tuple, np.ndarray)):
                return [f(v) for v in x]
            if isinstance(x, (float, np.floating)):
                return float(x) if np.isfinite(x) else ("-inf" if x < 0 else "inf")
            if isinstance(x, (np.integer,)):
                return int(x)
            return x
        return f(asdict(self))


def fit_upper_half(t_grid, logL):
    """Least squares slope of log Lambda against t over the upper half of the grid."""
    t = np.asarray(t_grid, float)
    y = np.asarray(logL, float)
    k = len(t) // 2
    tt, yy = t[k:], y[k:]
    keep = np.isfinite(yy)
    if keep.sum() < 2:
        return -np.inf, -np.inf, 0.0, list(tt)
    A = np.column_stack([tt[keep], np.ones(keep.sum())])
    coef = np.linalg.lstsq(A, yy[keep], rcond=None)[0]
    res = yy[keep] - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res ** 2))), list(tt)


def pressure_estimate(model, seeds, potential=None, eps_list=(0.2, 0.1), t_grid=(1, 2, 3, 4, 5, 6, 7, 8),
                      constraint="full", restarts=3, seed=0, step=1 / 16, mask=None, density_check=True,
                      ends=None, workers=1, table=None):
    """Pressure from the growth of log Lambda(t) over greedy separated sets.

    mask (N, nt) restricts the seeds per horizon (collections such as
    [B(eta)]); the same random insertion orders are used for every horizon.
    table (N, nt) holds precomputed Phi(x, t); by default it is integrated
    here at the separated-set step."""
    potential = ZeroPotential() if potential is None else potential
    seeds = np.atleast_2d(np.asarray(seeds, float)).reshape(-1, 3)
    t_grid = [float(t) for t in t_grid]
    N = len(seeds)
    rng = np.random.default_rng(seed)
    orders = [rng.permutation(N) for _ in range(restarts)]
    if N:
        ends = orbit_ends(model, seeds, t_grid, step, workers) if ends is None else ends
    if table is None:
        table = potential.integrate_grid(model, seeds, t_grid, step) if N else np.zeros((0, len(t_grid)))
    out = dict(logL={}, slopes={}, inter={}, res={}, counts={}, spread={}, dens={})
    for eps in eps_list:
        logL, cnt, spr, dch = [], [], [], []
        for k, t in enumerate(t_grid):
            m = np.ones(N, dtype=bool) if mask is None else np.asarray(mask)[:, k]
            vals = []
            best = None
            for od in orders:
                idx = greedy_separated(model, ends, k, eps, mask=m, order=od) if N else np.empty(0, int)
                val = partition_sum(table[idx, k])
                vals.append(val)
                if best is None or val > best[0]:
                    best = (val, len(idx))
            logL.append(best[0])
            cnt.append(best[1])
            fin = [v for v in vals if np.isfinite(v)]
            spr.append(float(np.std(fin)) if len(fin) > 1 else 0.0)
            if density_check and N >= 4:
                half = np.zeros(N, dtype=bool)
                half[orders[0][: N // 2]] = True
                idx = greedy_separated(model, ends, k, eps, mask=m & half, order=orders[0])
                vh = partition_sum(table[idx, k])
                dch.append(float(abs(best[0] - vh) / max(abs(best[0]), 1e-12)) if np.isfinite(vh) and np.isfinite(best[0]) else np.inf)
        s, c, r, ft = fit_upper_half(t_grid, logL)
        out["logL"][eps], out["slopes"][eps], out["inter"][eps], out["res"][eps] = logL, s, c, r
        out["counts"][eps], out["spread"][eps], out["dens"][eps] = cnt, spr, dch
    eps_sorted = sorted(eps_list)
    value = out["slopes"][eps_sorted[0]]
    extra = None
    if len(eps_sorted) >= 2:
        e1, e2 = eps_sorted[0], eps_sorted[1]
        p1, p2 = out["slopes"][e1], out["slopes"][e2]
        if np.isfinite(p1) and np.isfinite(p2):
            extra = float(p1 + (p1 - p2) * e1 / (e2 - e1))
    mono = all(out["slopes"][a] >= out["slopes"][b] - 0.1 for a, b in zip(eps_sorted, eps_sorted[1:]))
    dens_flag = any(np.isfinite(d) and d > 0.05 for v in out["dens"].values() for d in v[len(v) // 2:])
    return PressureEstimate(value, list(eps_list), t_grid, out["logL"], out["slopes"], out["inter"], out["res"],
                            out["counts"], out["spread"], extra, out["dens"], dens_flag, mono, constraint,
                            potential.descriptor(), fit_upper_half(t_grid, [0] * len(t_grid))[3])


def pressure_csv(est, path):
    """Plot-ready table: t, eps, log Lambda, (1/t) log Lambda, count."""
    import csv
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "eps", "log_lambda", "log_lambda_over_t", "count"])
        for eps in est.eps:
            for t, y, c in zip(est.t_grid, est.log_lambda[eps], est.counts[eps]):
                wr.writerow([t, eps, f"{y:.12g}", f"{y / t:.12g}" if t else "nan", c])


# ---------------------------------------------------------------------------
# collections

def bad_mask(model, seeds, t_grid, eta_list, pad=1.0, tau=16.0, step=1 / 32):
    """[B(eta)] membership of (x, t) for each seed x, horizon t and eta:
    array (n_eta, N, nt)."""
    from .orbitsets import thickened_bad
    seeds = np.atleast_2d(seeds)
    T = max(t_grid) + 2 * pad
    start = model.endpoint(seeds, -pad, step=step)
    _, uu, us, lam, _ = lin.lambda_profile(model, start, T, tau, step=step)
    lam = np.maximum(np.atleast_2d(lam), 0.0)
    h = T / (lam.shape[1] - 1)
    out = np.zeros((len(eta_list), len(seeds), len(t_grid)), dtype=bool)
    for a, eta in enumerate(eta_list):
        for i in range(len(seeds)):
            for k, t in enumerate(t_grid):
                n_t = int(round((t + 2 * pad) / h)) + 1
                out[a, i, k] = thickened_bad(lam[i, :n_t], h, t, eta, pad)
    return out


def bad_pressure_sweep(model, seeds, potential, eta_list, eps, t_grid, restarts=3, seed=0, step=1 / 16,
                       masks=None, workers=1):
    """P([B(eta)], phi) for each eta, sharing seeds, flows and insertion orders."""
    seeds = np.atleast_2d(seeds)
    masks = bad_mask(model, seeds, t_grid, eta_list) if masks is None else masks
    ends = orbit_ends(model, seeds, t_grid, step, workers)
    table = potential.integrate_grid(model, seeds, t_grid, step)
    out = []
    for a, eta in enumerate(eta_list):
        est = pressure_estimate(model, seeds, potential, [eps], t_grid, constraint=f"[B({eta})]",
                                restarts=restarts, seed=seed, step=step, mask=masks[a],
                                density_check=False, ends=ends, table=table)
        out.append((float(eta), est))
    return out


# ---------------------------------------------------------------------------
# gap criteria

@dataclass
class GapVerdict:
    verdict: str              # "true", "false" or "inconclusive"
    margin: float
    uncertainty: float
    p_sing: float
    p_full: float

    def to_dict(self):
        f = lambda x: float(x) if np.isfinite(x) else ("-inf" if x < 0 else "inf")
        return dict(verdict=self.verdict, margin=f(self.margin), uncertainty=f(self.uncertainty),
                    p_sing=f(self.p_sing), p_full=f(self.p_full))


def gap_check(p_sing, p_full, u_sing=0.0, u_full=0.0):
    """P(Sing, phi) < P(phi)?  Overlapping uncertainty intervals give
    'inconclusive'; P(empty) = -inf always gives 'true'."""
    if p_sing == -np.inf:
        return GapVerdict("true", np.inf, u_full, p_sing, p_full)
    margin = p_full - p_sing
    unc = u_sing + u_full
    if margin > unc:
        v = "true"
    elif margin < -unc:
        v = "false"
    else:
        v = "inconclusive"
    return GapVerdict(v, margin, unc, p_sing, p_full)


def potential_range(model, potential, n=400, rng=None, sing=False):
    """(sup, inf) of phi sampled on Liouville vectors (or on Sing)."""
    rng = np.random.default_rng(7) if rng is None else rng
    X = model.sing_sample(n, rng) if sing else model.random_vectors(n, rng)
    h = 1 / 64
    vals, _ = potential.along(model, X, h, h)
    v = vals[:, 0]
    return float(v.max()), float(v.min())


def bounded_range_check(model, potential, h_full, h_sing):
    """sup_Sing phi - inf phi < h_top(F) - h_top(Sing) from estimates."""
    if isinstance(potential, ZeroPotential):
        spread = 0.0
    else:
        sup_sing = potential_range(model, potential, sing=True)[0] if model.code == 2 else -np.inf
        inf_all = potential_range(model, potential)[1]
        spread = sup_sing - inf_all
    return bool(spread < h_full - h_sing)


# ---------------------------------------------------------------------------
# empirical measures

@dataclass
class BinnedMeasure:
    edges: list              # bin edges per coordinate (x, y, angle)
    mass: np.ndarray

    @property
    def total(self):
        return float(self.mass.sum())

    def tv(self, other):
        return float(0.5 * np.abs(self.mass - other.mass).sum())


def default_bins(model, n=6, n_angle=4):
    if model.code <= 1:
        e = np.linspace(-1, 1, n + 1)
        return [e, e, np.linspace(-np.pi, np.pi, n_angle + 1)]
    if model.code == 2:
        sm = model.params["s_max"]
        return [np.linspace(-sm, sm, 2 * n + 1), np.linspace(0, TWO_PI, n + 1), np.linspace(-np.pi, np.pi, n_angle + 1)]
    L = model.params["length"]
    return [np.linspace(0, L, n + 1), np.array([-1.0, 1.0]), np.linspace(-np.pi, np.pi, n_angle + 1)]


def bin_samples(model, S, bins, weights=None):
    S = np.atleast_2d(S)
    P = S[:, :3].copy()
    P[:, 2] = (P[:, 2] + np.pi) % TWO_PI - np.pi
    if model.code == 2:
        P[:, 1] = P[:, 1] % TWO_PI
    H, _ = np.histogramdd(P, bins=bins, weights=weights)
    tot = H.sum()
    return BinnedMeasure(bins, H / tot if tot > 0 else H)


def empirical_measure(model, v, t, bins=None):
    """E_{v,t}: time average of the Dirac masses along f_s v, s in [0, t]."""
    bins = default_bins(model) if bins is None else bins
    seg = model.flow(v, t)
    w = np.ones(len(seg.samples))
    w[0] = w[-1] = 0.5
    return bin_samples(model, seg.samples, bins, w)


def convex_combination(measures, weights):
    w = np.asarray(weights, float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")
    w = w / w.sum()
    mass = sum(wi * m.mass for wi, m in zip(w, measures))
    return BinnedMeasure(measures[0].edges, mass)


def liouville_measure(model, bins=None, n=200000, seed=3):
    bins = default_bins(model) if bins is None else bins
    X = model.random_vectors(n, np.random.default_rng(seed))
    return bin_samples(model, X, bins)
