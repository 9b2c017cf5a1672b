"""Surface models of nonpositive curvature and their geodesic flows.

Four models are built in:

constant-octagon       genus 2, curvature -1, regular octagon in the Poincare
                       disc with opposite sides paired
perturbed-octagon      the same octagon with metric e^{2u} g_hyp, u a radial
                       bump supported inside the inscribed disc
flat-cylinder-funnels  surface of revolution ds^2 + r(s)^2 dphi^2, flat core
                       |s| <= w, convex quintic blend, then cosh growth
synthetic-driver       a single line carrying a prescribed curvature profile,
                       used to drive the linearized dynamics

Points of the unit tangent bundle are stored as rows (x, y, theta).  theta
is measured in the orthonormal frame of the chart.
"""
import configparser
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _core

TWO_PI = 2.0 * np.pi


class ModelError(ValueError):
    pass


class UnsupportedQuery(ModelError):
    pass


@dataclass(frozen=True)
class UnitTangentVector:
    chart: int
    x: float
    y: float
    angle: float

    @property
    def array(self):
        return np.array([self.x, self.y, self.angle])

    @classmethod
    def from_array(cls, a, chart=0):
        return cls(int(chart), float(a[0]), float(a[1]), float(a[2]))


@dataclass
class OrbitSegment:
    v: np.ndarray
    t: float
    step: float
    samples: np.ndarray          # (n, 3)
    cover: np.ndarray = None     # (n, 4) accumulated deck element, octagons only
    escaped: bool = False

    @property
    def times(self):
        n = len(self.samples)
        return np.linspace(0.0, self.t, n)

    @property
    def end(self):
        return self.samples[-1].copy()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "chart", "x", "y", "angle"])
            for t, s in zip(self.times, self.samples):
                wr.writerow([f"{t:.10g}", 0, f"{s[0]:.15g}", f"{s[1]:.15g}", f"{s[2]:.15g}"])


# ---------------------------------------------------------------------------
# octagon geometry

def octagon_geometry():
    """Regular octagon with interior angles pi/4 centred at 0 in the disc."""
    n = 8
    beta = np.pi / 4
    r_in = np.arccosh(np.cos(beta / 2) / np.sin(np.pi / n))
    r_v = np.arccosh(1.0 / (np.tan(np.pi / n) * np.tan(beta / 2)))
    L = 2.0 * r_in
    m = np.tanh(r_in / 2)
    Rc = (1 + m * m) / (2 * m)
    rho = (1 - m * m) / (2 * m)
    deck = np.zeros((8, 6))
    for k in range(8):
        al = k * np.pi / 4
        deck[k, 0] = Rc * np.cos(al)
        deck[k, 1] = Rc * np.sin(al)
        deck[k, 2] = rho
        # translation by -L along direction al: maps the region beyond side k inside
        deck[k, 3] = np.cosh(L / 2)
        b = -np.exp(1j * al) * np.sinh(L / 2)
        deck[k, 4] = b.real
        deck[k, 5] = b.imag
    return dict(r_in=r_in, r_v=r_v, L=L, deck=deck)


def su11(a, b):
    return np.array([[a, b], [np.conj(b), np.conj(a)]], dtype=complex)


def side_pairings():
    """The eight side maps as SU(1,1) matrices (m_k pushes the exterior of
    side k back across it; m_{k+4} = m_k^{-1})."""
    geo = octagon_geometry()
    return [su11(d[3], complex(d[4], d[5])) for d in geo["deck"]]


def mobius(M, z):
    return (M[0, 0] * z + M[0, 1]) / (M[1, 0] * z + M[1, 1])


def mobius_vec(M, X):
    """Apply a disc isometry to rows (x, y, theta)."""
    z = X[..., 0] + 1j * X[..., 1]
    den = M[1, 0] * z + M[1, 1]
    zn = (M[0, 0] * z + M[0, 1]) / den
    out = np.empty(np.shape(X), dtype=float)
    out[..., 0] = zn.real
    out[..., 1] = zn.imag
    out[..., 2] = X[..., 2] - 2.0 * np.angle(den)
    return out


def displacement(M):
    """Hyperbolic distance from 0 to M(0)."""
    return 2.0 * np.arctanh(min(abs(M[0, 1] / M[1, 1]), 1 - 1e-16))


def trace_length(M):
    """Translation length 2 arccosh(|tr|/2) of a hyperbolic element."""
    tr = abs((M[0, 0] + M[1, 1]).real)
    return 2.0 * np.arccosh(max(tr / 2.0, 1.0))


def _key(M):
    if M[0, 0].real < 0 or (M[0, 0].real == 0 and M[0, 0].imag < 0):
        M = -M
    return tuple(np.round([M[0, 0].real, M[0, 0].imag, M[0, 1].real, M[0, 1].imag], 6))


def group_ball(radius):
    """Deck elements moving the octagon centre by at most `radius`."""
    gens = side_pairings()
    L = octagon_geometry()["L"]
    seen = {_key(np.eye(2, dtype=complex)): np.eye(2, dtype=complex)}
    frontier = [np.eye(2, dtype=complex)]
    while frontier:
        nxt = []
        for M in frontier:
            for g in gens:
                P = M @ g
                k = _key(P)
                if k in seen:
                    continue
                d = displacement(P)
                if d <= radius + L:
                    seen[k] = P
                    nxt.append(P)
        frontier = nxt
    out = [M for M in seen.values() if displacement(M) <= radius + 1e-9]
    out.sort(key=lambda M: (displacement(M), _key(M)))
    return out


def inside_octagon(z, deck=None, tol=0.0):
    if deck is None:
        deck = octagon_geometry()["deck"]
    z = np.asarray(z)
    ok = np.ones(z.shape, dtype=bool)
    for k in range(8):
        ok &= np.abs(z - complex(deck[k, 0], deck[k, 1])) >= deck[k, 2] - tol
    return ok


def disc_distance(z, w):
    # arcsinh form keeps full relative accuracy for nearby points
    den = (1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2)
    return 2.0 * np.arcsinh(np.abs(z - w) / np.sqrt(np.maximum(den, 1e-300)))


def cylinder_blend(l=1.0):
    """Quintic coefficients of r(x)/a = 1 + c3 x^3 + c4 x^4 + c5 x^5 meeting
    cosh(x) to second order at x = l."""
    A = np.array([[l ** 3, l ** 4, l ** 5],
                  [3 * l ** 2, 4 * l ** 3, 5 * l ** 4],
                  [6 * l, 12 * l ** 2, 20 * l ** 3]])
    rhs = np.array([np.cosh(l) - 1, np.sinh(l), np.cosh(l)])
    return np.linalg.solve(A, rhs)


# ---------------------------------------------------------------------------

DEFAULTS = {
    "constant-octagon": dict(step=1 / 64, translate_radius=6.5),
    "perturbed-octagon": dict(amplitude=0.15, bump_radius=1.4, step=1 / 64, translate_radius=6.5),
    "flat-cylinder-funnels": dict(a=1.0, w=1.0, blend=1.0, s_max=4.0, step=1 / 64),
    "synthetic-driver": dict(amplitude=1.0, frequency=0.5, power=4.0, length=200.0, step=1 / 64),
}


@dataclass
class SurfaceModel:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        prm = dict(DEFAULTS[self.kind])
        for k, v in self.params.items():
            if k not in prm and k != "b":
                raise ModelError(f"unknown parameter {k!r} for {self.kind}")
            prm[k] = float(v)
        self.params = prm
        self.code = _core.KIND_CODES[self.kind]
        self.step = prm["step"]
        if self.step <= 0:
            raise ModelError("integrator step must be positive")
        self.deck = np.zeros((8, 6))
        if self.code <= 1:
            geo = octagon_geometry()
            self.deck = geo["deck"]
            self.r_in, self.r_v, self.systole = geo["r_in"], geo["r_v"], geo["L"]
            if self.code == 1:
                if prm["bump_radius"] >= self.r_in:
                    raise ModelError("bump must be supported inside the inscribed disc")
                self.p = np.array([prm["amplitude"], prm["bump_radius"]])
            else:
                self.p = np.zeros(2)
            self._translates = None
        elif self.code == 2:
            c3, c4, c5 = cylinder_blend(prm["blend"])
            self.p = np.array([prm["a"], prm["w"], prm["blend"], c3, c4, c5])
        else:
            self.p = np.array([prm["amplitude"], prm["frequency"], prm["power"]])
        kmin = self.curvature_range()[0]
        bb = math.sqrt(max(-kmin, 0.0)) * 1.01 + 1e-3
        self.b = float(prm.get("b", bb))
        if self.b ** 2 < -kmin - 1e-12:
            raise ModelError("curvature bound b violated on the verification grid")
        self._Lambda = None

    # ---------------------------------------------------------------- io
    @classmethod
    def load(cls, path):
        txt = open(path).read()
        return cls.from_text(txt)

    @classmethod
    def from_text(cls, txt):
        cp = configparser.ConfigParser()
        if not txt.lstrip().startswith("["):
            txt = "[model]\n" + txt
        cp.read_string(txt)
        sec = cp[cp.sections()[0]]
        kind = sec.get("kind")
        if kind is None:
            raise ModelError("model file lacks 'kind'")
        prm = {k: float(v) for k, v in sec.items() if k != "kind"}
        return cls(kind, prm)

    def to_text(self):
        lines = [f"kind = {self.kind}"] + [f"{k} = {v!r}" for k, v in sorted(self.params.items())]
        return "\n".join(lines) + "\n"

    def describe(self):
        return dict(kind=self.kind, params=dict(self.params), b=self.b,
                    sing=self.sing_descriptor())

    def sing_descriptor(self):
        if self.code == 2:
            return dict(type="flat-core-circles", s_range=[-self.params["w"], self.params["w"]],
                        angles=[0.5 * np.pi, -0.5 * np.pi], radius=self.params["a"])
        return dict(type="empty")

    # ------------------------------------------------------------ geometry
    def curvature(self, x, y=0.0):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = np.empty(x.shape)
        for i in np.ndindex(x.shape):
            out[i] = _core.curvature(self.code, self.p, x[i], y[i])
        return out

    def verification_grid(self, n=60):
        if self.code <= 1:
            rh = np.linspace(0, self.r_v, n)
            ang = np.linspace(0, TWO_PI, 2 * n, endpoint=False)
            R, A = np.meshgrid(np.tanh(rh / 2), ang)
            z = (R * np.exp(1j * A)).ravel()
            z = z[inside_octagon(z, self.deck, tol=1e-9)]
            return z.real, z.imag
        if self.code == 2:
            s = np.linspace(-self.params["s_max"], self.params["s_max"], 40 * n + 1)
            return s, np.zeros_like(s)
        x = np.linspace(0, TWO_PI / self.params["frequency"], 40 * n)
        return x, np.zeros_like(x)

    def curvature_range(self):
        x, y = self.verification_grid()
        K = self.curvature(x, y)
        return float(K.min()), float(K.max())

    def metric(self, x, y):
        """Metric tensor in chart coordinates, shape (..., 2, 2)."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        g = np.zeros(x.shape + (2, 2))
        if self.code <= 1:
            em = np.vectorize(lambda a, b: _core.conformal(self.code, self.p, a, b)[0])(x, y)
            g[..., 0, 0] = g[..., 1, 1] = em ** -2
        elif self.code == 2:
            r = np.vectorize(lambda a: _core.profile(self.p, a)[0])(x)
            g[..., 0, 0] = 1.0
            g[..., 1, 1] = r ** 2
        else:
            g[..., 0, 0] = 1.0
            g[..., 1, 1] = 1.0
        return g

    def velocity(self, X):
        X = np.atleast_2d(X)
        return np.array([_core.velocity(self.code, self.p, a, b, c) for a, b, c in X[:, :3]])

    def speed(self, X):
        X = np.atleast_2d(X)
        V = self.velocity(X)
        g = self.metric(X[:, 0], X[:, 1])
        return np.sqrt(np.einsum("ni,nij,nj->n", V, g, V))

    @staticmethod
    def flip(X):
        X = np.array(X, dtype=float, copy=True)
        X[..., 2] = X[..., 2] + np.pi
        X[..., 2] = (X[..., 2] + np.pi) % TWO_PI - np.pi
        return X

    def normalize(self, X):
        """Reduce rows into the fundamental domain (octagon) or wrap angles."""
        X = np.array(np.atleast_2d(X), dtype=float)
        if self.code <= 1:
            S, _ = self._run(X, 0.0, 1, 1)
            return S[:, 0, :3]
        X[:, 2] = (X[:, 2] + np.pi) % TWO_PI - np.pi
        if self.code == 2:
            X[:, 1] = X[:, 1] % TWO_PI
        return X

    # ---------------------------------------------------------------- flow
    def _run(self, X, t, every=1, nsteps=None, mode=0, A0=None, step=None):
        X = np.ascontiguousarray(np.atleast_2d(X)[:, :3], dtype=float)
        h0 = self.step if step is None else step
        if nsteps is None:
            nsteps = int(math.ceil(abs(t) / h0 - 1e-9)) if t != 0 else 0
        h = (t / nsteps) if nsteps else 0.0
        if A0 is None:
            A0 = np.zeros((len(X), 2))
        A0 = np.ascontiguousarray(A0, dtype=float)
        if nsteps == 0:
            nsteps, every, h = 0, 1, 0.0
        return _core.flow_batch(self.code, self.p, self.deck, X, A0, h, nsteps,
                                max(every, 1), mode, self.code <= 1)

    def flow_states(self, X, t, every=1, step=None):
        """Samples (N, n, 3) of the orbits of the rows of X over [0, t]."""
        S, G = self._run(X, t, every, step=step)
        return S[..., :3], G

    def endpoint(self, X, t, step=None, nsteps=None):
        if t == 0:
            return self.normalize(X)
        h0 = self.step if step is None else step
        n = max(int(math.ceil(abs(t) / h0 - 1e-9)), 1) if nsteps is None else int(nsteps)
        S, _ = self._run(X, t, every=n, nsteps=n)
        return S[:, -1, :3]

    def flow(self, v, t, step=None):
        v = _as_array(v)
        h = self.step if step is None else step
        if h <= 0:
            raise ModelError("step must be positive")
        S, G = self._run(v[None], t, 1, step=h)
        seg = OrbitSegment(v=v, t=float(t), step=abs(t) / max(len(S[0]) - 1, 1),
                           samples=S[0, :, :3].copy(), cover=G[0].copy())
        if not np.all(np.isfinite(seg.samples)):
            raise ModelError("integrator diverged; reduce the step")
        seg.escaped = self.escaped(seg.samples)
        return seg

    def escaped(self, samples):
        if self.code == 2:
            return bool(np.any(np.abs(samples[:, 0]) > self.params["s_max"]))
        return False

    # ----------------------------------------------------------- distances
    @property
    def translates(self):
        if self.code > 1:
            return None
        if self._translates is None:
            Ms = group_ball(self.params["translate_radius"])
            self._translates = np.array([[M[0, 0], M[0, 1], M[1, 0], M[1, 1]] for M in Ms])
        return self._translates

    def dist(self, P, Q):
        """Footprint distance on the surface between rows of P and Q."""
        P, Q = np.broadcast_arrays(np.asarray(P, float)[..., :2], np.asarray(Q, float)[..., :2])
        if self.code <= 1:
            z = P[..., 0] + 1j * P[..., 1]
            w = Q[..., 0] + 1j * Q[..., 1]
            T = self.translates
            gw = (T[:, 0, None] * w.ravel() + T[:, 1, None]) / (T[:, 2, None] * w.ravel() + T[:, 3, None])
            d = disc_distance(np.broadcast_to(z.ravel(), gw.shape), gw).min(axis=0)
            return d.reshape(np.broadcast(z, w).shape)
        if self.code == 2:
            ds = P[..., 0] - Q[..., 0]
            dphi = (P[..., 1] - Q[..., 1] + np.pi) % TWO_PI - np.pi
            sm = 0.5 * (P[..., 0] + Q[..., 0])
            r = np.vectorize(lambda a: _core.profile(self.p, a)[0])(sm)
            return np.sqrt(ds ** 2 + (r * dphi) ** 2)
        return np.abs(P[..., 0] - Q[..., 0])

    def cover_positions(self, S, G):
        """Lift reduced disc samples back to the universal cover."""
        z = S[..., 0] + 1j * S[..., 1]
        a = G[..., 0] + 1j * G[..., 1]
        b = G[..., 2] + 1j * G[..., 3]
        return (a * z + b) / (np.conj(b) * z + np.conj(a))

    def samples_per_unit(self):
        return int(round(1.0 / self.step))

    def footprints(self, X, t):
        """Footprint samples over [0, t+1] on the d_K grid."""
        return self.flow_states(X, t + 1.0)[0]

    def _max_dist(self, SX, SY):
        return float(np.max(self.dist(SX, SY)))

    def knieper_distance(self, v, w):
        return bowen_distance(self, v, w, 0.0)

    # ------------------------------------------------------------ sampling
    def random_vectors(self, n, rng):
        """Liouville-distributed vectors over the fundamental domain / window."""
        out = np.empty((0, 3))
        while len(out) < n:
            m = 2 * (n - len(out)) + 16
            if self.code <= 1:
                # hyperbolic polar coordinates with density sinh(r)
                u = rng.random(m)
                r = np.arccosh(1 + u * (np.cosh(self.r_v) - 1))
                a = rng.random(m) * TWO_PI
                z = np.tanh(r / 2) * np.exp(1j * a)
                keep = inside_octagon(z, self.deck)
                X = np.column_stack([z.real, z.imag, rng.random(m) * TWO_PI - np.pi])[keep]
            elif self.code == 2:
                sm = self.params["s_max"]
                s = rng.uniform(-sm, sm, m)
                r = np.vectorize(lambda a: _core.profile(self.p, a)[0])(s)
                keep = rng.random(m) * np.cosh(sm) * self.params["a"] <= r
                X = np.column_stack([s, rng.random(m) * TWO_PI, rng.random(m) * TWO_PI - np.pi])[keep]
            else:
                x = rng.uniform(0, self.params["length"], m)
                th = np.where(rng.random(m) < 0.5, 0.0, np.pi)
                X = np.column_stack([x, np.zeros(m), th])
            out = np.vstack([out, X])
        return out[:n]

    # ---------------------------------------------------------- singular set
    def sing_sample(self, n, rng=None):
        if self.code != 2:
            raise UnsupportedQuery(f"{self.kind} has an empty singular set")
        rng = np.random.default_rng(0) if rng is None else rng
        w = self.params["w"]
        s = rng.uniform(-w, w, n)
        phi = rng.uniform(0, TWO_PI, n)
        th = np.where(rng.random(n) < 0.5, 0.5 * np.pi, -0.5 * np.pi)
        return np.column_stack([s, phi, th])

    def in_sing(self, X, tol=1e-12):
        X = np.atleast_2d(X)
        if self.code != 2:
            return np.zeros(len(X), dtype=bool)
        w = self.params["w"]
        return (np.abs(X[:, 0]) <= w + tol) & (np.abs(np.cos(X[:, 2])) <= tol)

    def sing_distance(self, v, refine=True):
        """d_K(v, Sing); +inf for an empty singular set."""
        if self.code != 2:
            return np.inf
        v = _as_array(v)
        return float(sing_distance_batch(self, v[None], refine=refine)[0])


def _as_array(v):
    if isinstance(v, UnitTangentVector):
        return v.array
    return np.asarray(v, dtype=float).reshape(3)


def builtin_models():
    return {k: SurfaceModel(k) for k in DEFAULTS}


# ---------------------------------------------------------------------------
# metrics on T^1 M

def bowen_distance(model, v, w, t):
    """d_t(v, w) = max over the sampled window [0, t+1] of footprint distance."""
    if t < 0:
        raise ValueError("horizon must be nonnegative")
    X = np.vstack([_as_array(v), _as_array(w)])
    S, _ = model.flow_states(X, t + 1.0)
    return model._max_dist(S[0], S[1])


def bowen_ball_member(model, v, w, t, eps):
    return bowen_distance(model, v, w, t) < eps


def knieper_distance(model, v, w):
    return bowen_distance(model, v, w, 0.0)


def flow(model, v, t, step=None):
    return model.flow(v, t, step)


def sing_distance(model, v):
    return model.sing_distance(v)


def sing_sample(model, n, rng=None):
    return model.sing_sample(n, rng)


def _sing_footprints(model, s0, phi0, sgn, times):
    a = model.params["a"]
    return np.stack([np.broadcast_to(s0[..., None], s0.shape + times.shape),
                     phi0[..., None] + sgn[..., None] * times / a], axis=-1)


def sing_distance_batch(model, X, refine=False, grid=7):
    """Upper bounds on d_K(x, Sing) from a local search over the Sing
    parameters (height, phase, orientation); refine=True polishes the best
    candidate with Nelder-Mead."""
    from scipy.optimize import minimize

    X = np.atleast_2d(X)
    F, _ = model.flow_states(X, 1.0)
    n1 = F.shape[1]
    times = np.linspace(0, 1, n1)
    w = model.params["w"]
    out = np.empty(len(X))
    for i, (x, Fi) in enumerate(zip(X, F)):
        best = np.inf
        best_par = None
        s_c = np.clip(x[0], -w, w)
        for sgn in (1.0, -1.0):
            ds = np.linspace(-0.2, 0.2, grid)
            dp = np.linspace(-0.2, 0.2, grid)
            S0, P0 = np.meshgrid(np.clip(s_c + ds, -w, w), x[1] + dp, indexing="ij")
            Y = _sing_footprints(model, S0, P0, np.full(S0.shape, sgn), times)
            d = model.dist(np.broadcast_to(Fi[None, None, :, :2], Y.shape[:-1] + (2,)), Y).max(axis=-1)
            j = np.unravel_index(np.argmin(d), d.shape)
            if d[j] < best:
                best, best_par = d[j], (S0[j], P0[j], sgn)
        if refine:
            sgn = best_par[2]

            def f(q):
                s0 = np.clip(q[0], -w, w)
                Y = _sing_footprints(model, np.array(s0), np.array(q[1]), np.array(sgn), times)
                return float(model.dist(Fi[:, :2], Y).max())

            res = minimize(f, [best_par[0], best_par[1]], method="Nelder-Mead",
                           options=dict(xatol=1e-10, fatol=1e-12, maxiter=2000))
            best = min(best, res.fun)
        out[i] = best
    return out


def near_sing_sample(model, n, rng=None, tilt=(1e-8, 1e-7), margin=0.1):
    """Core vectors tilted off the circle direction by a tiny angle.  They
    stay in the flat core for a time of order (w - |s|)/tilt in both
    directions, so lambda is of order tilt, yet none of them lies in Sing."""
    if model.code != 2:
        raise UnsupportedQuery(f"{model.kind} has an empty singular set")
    rng = np.random.default_rng(0) if rng is None else rng
    w = model.params["w"] - margin
    s = rng.uniform(-w, w, n)
    phi = rng.uniform(0, TWO_PI, n)
    d = np.exp(rng.uniform(np.log(tilt[0]), np.log(tilt[1]), n)) * np.where(rng.random(n) < 0.5, 1, -1)
    th = np.where(rng.random(n) < 0.5, 0.5 * np.pi, -0.5 * np.pi) + d
    return np.column_stack([s, phi, th])


def asymptotic_vectors(model, s0, phi0=0.0):
    """Vectors in the blend at heights s0 > w heading inward with Clairaut
    constant equal to the core radius, so their forward orbits spiral onto
    the boundary circle of the core."""
    s0 = np.atleast_1d(np.asarray(s0, float))
    if model.code != 2 or np.any(s0 <= model.params["w"]):
        raise ValueError("needs the cylinder model and heights above the core")
    r = np.array([_core.profile(model.p, s)[0] for s in s0])
    th = np.pi - np.arcsin(model.params["a"] / r)
    return np.column_stack([s0, np.full_like(s0, phi0), th])


def sing_approach(model, X, T=30.0, every=1.0, tol=1e-6):
    """d_K(f_t x, Sing) on t = 0, every, ..., T in both time directions.
    A row passes when in one direction the distances never rise by more than
    tol over the running minimum and end no higher than they started."""
    X = np.atleast_2d(X)
    k = max(int(round(every / model.step)), 1)
    out = []
    for sgn in (1, -1):
        Y = X if sgn > 0 else model.flip(X)
        S, _ = model.flow_states(Y, T, every=k)
        S = S if sgn > 0 else model.flip(S.reshape(-1, 3)).reshape(S.shape)
        d = sing_distance_batch(model, S.reshape(-1, 3)).reshape(S.shape[:2])
        run = np.minimum.accumulate(d, axis=1)
        ok = np.all(d <= run + tol, axis=1) & (d[:, -1] <= d[:, 0] + tol)
        out.append((d, ok))
    (df, okf), (db, okb) = out
    return dict(forward=df, backward=db, ok=okf | okb, direction=np.where(okf, 1, np.where(okb, -1, 0)))
