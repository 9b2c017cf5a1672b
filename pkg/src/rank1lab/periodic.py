"""Closed geodesics, Gurevic-type pressure and equidistribution.

On the octagon models closed geodesics are enumerated through the deck
group: elements whose axis comes within the circumradius of the centre and
whose translation length is at most L_max represent every free homotopy
class of length <= L_max.  Each axis is walked through the octagon side by
side using its ideal endpoints, which gives the cutting sequence exactly.
The cutting sequence up to rotation and reversal is the conjugacy key; it
also decides primality (a proper power is not prime).

On the perturbed octagon each constant-curvature geodesic is continued in
the bump amplitude with the periodic-orbit Newton solver; negative curvature
keeps one closed geodesic per free homotopy class, so the key carries over.
"""
import json
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import logsumexp

from .surface import (SurfaceModel, side_pairings, octagon_geometry, mobius, UnsupportedQuery, TWO_PI)
from .orbitsets import refine_periodic, closing_residual
from . import linearization as lin


log = logging.getLogger(__name__)


class EnumerationError(RuntimeError):
    pass


@dataclass
class ClosedGeodesic:
    word: tuple                 # cutting sequence (side indices)
    key: str                    # canonical cyclic word up to reversal
    length: float
    v: np.ndarray               # a vector on the orbit
    residual: float
    prime: bool
    regular: bool = True
    lam_min: float = float("nan")
    phi: dict = field(default_factory=dict)
    multiplicity: int = 1       # power of the primitive class

    def to_dict(self):
        d = asdict(self)
        d["word"] = list(self.word)
        d["v"] = [float(x) for x in self.v]
        d["residual"] = float(self.residual)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["word"] = tuple(d["word"])
        d["v"] = np.asarray(d["v"], float)
        return cls(**d)


# ---------------------------------------------------------------------------
# words

def least_rotation(word):
    w = tuple(int(k) for k in word)
    return min((w[i:] + w[:i] for i in range(len(w))), default=w)


def word_key(forward, backward):
    """Key of an unoriented closed geodesic from the cutting sequences of its
    two orientations."""
    return "-".join(str(k) for k in min(least_rotation(forward), least_rotation(backward)))


def primitive_root(word):
    """Shortest u with word = u^k; returns (u, k)."""
    w = tuple(word)
    n = len(w)
    for d in range(1, n + 1):
        if n % d == 0 and w[:d] * (n // d) == w:
            return w[:d], n // d
    return w, 1


# ---------------------------------------------------------------------------
# ideal-endpoint geometry

_GEO = None


def _geometry():
    global _GEO
    if _GEO is None:
        geo = octagon_geometry()
        deck = geo["deck"]
        c = deck[:, 0] + 1j * deck[:, 1]
        rho = deck[:, 2]
        half = np.arccos(1.0 / np.abs(c))
        e1 = np.exp(1j * (np.angle(c) - half))
        e2 = np.exp(1j * (np.angle(c) + half))
        _GEO = dict(c=c, rho=rho, e1=e1, e2=e2, gens=side_pairings(), r_v=geo["r_v"])
    return _GEO


def _outer(z, g):
    """Is the ideal point z beyond side k (inside the side circle)?"""
    return np.abs(z - g["c"]) < g["rho"]


def _frame(p, q):
    """Closest point c0 to the origin and direction theta of the geodesic q -> p.
    By symmetry the tangent there is parallel to the chord p - q."""
    return (p + q) / (2.0 + abs(p - q)), float(np.angle(p - q))


def _crossing(u1, u2):
    """x in (-1, 1) where the geodesic u1-u2 meets the real diameter.

    x is the small root of x^2 - 2 (N/D) x + 1 with N = Re(u1 + u2) and
    D = |u1 + u2|^2 / 2; written as D / (N + sgn(N) sqrt(N^2 - D^2)) it stays
    accurate when the geodesic is close to a diameter (D -> 0)."""
    sm = u1 + u2
    D = 0.5 * abs(sm) ** 2
    N = sm.real
    rt = math.sqrt(max(-2.0 * D * u1.imag * u2.imag, 0.0))
    den = N + (rt if N >= 0 else -rt)
    if den == 0.0:
        return 0.0
    return float(D / den)


def chord(p, q):
    """Entry/exit parameters (on the real diameter after moving the geodesic
    there) and exit side of the geodesic q -> p through the octagon, or None
    if it misses the octagon."""
    g = _geometry()
    op, oq = _outer(p, g), _outer(q, g)
    if np.any(op & oq):
        return None
    c0, th = _frame(p, q)

    def pre(w):
        return np.exp(-1j * th) * (w - c0) / (1.0 - np.conj(c0) * w)

    lo, hi, side = -1.0, 1.0, -1
    for k in range(8):
        if op[k] == oq[k]:
            continue
        x = _crossing(pre(g["e1"][k]), pre(g["e2"][k]))
        if op[k]:
            if x < hi:
                hi, side = x, k
        else:
            lo = max(lo, x)
    if side < 0 or lo >= hi:
        return None
    return lo, hi, side, c0, th


def _point(c0, th, x):
    """Vector at parameter x of the geodesic through c0 with direction th."""
    e = np.exp(1j * th)
    z = (e * x + c0) / (1.0 + np.conj(c0) * e * x)
    ang = th - 2.0 * np.angle(1.0 + np.conj(c0) * e * x)
    return np.array([z.real, z.imag, (ang + np.pi) % TWO_PI - np.pi])


def axis_endpoints(M):
    """Attracting and repelling fixed points of a hyperbolic disc isometry."""
    a, b = M[0, 0], M[0, 1]
    A, B, C = np.conj(b), np.conj(a) - a, -b
    disc = np.sqrt(B * B - 4 * A * C + 0j)
    roots = [(-B + disc) / (2 * A), (-B - disc) / (2 * A)]
    roots = [r / abs(r) for r in roots]
    der = [abs(1.0 / (np.conj(b) * r + np.conj(a)) ** 2) for r in roots]
    i = int(np.argmin(der))
    return roots[i], roots[1 - i]


def _shift_left(p, q, s=5e-8):
    """A geodesic slightly to the left of q -> p (perpendicular translation at
    its closest point to the centre)."""
    c0, th = _frame(p, q)
    e = np.exp(1j * th)
    M = lambda z: (e * z + c0) / (1.0 + np.conj(c0) * e * z)
    ps = M((1 + 1j * s) / (1 - 1j * s))
    qs = M((-1 + 1j * s) / (1 + 1j * s))
    return ps / abs(ps), qs / abs(qs)


def cutting_sequence(p, q, max_len=400):
    """Walk the closed geodesic with ideal endpoints (q -> p) through the
    octagon until it returns to the starting lift.

    Exit sides are read from a geodesic shifted slightly to the left, so a
    passage through a vertex is resolved the same way on every lift.  Returns
    (word, length, v) with v the point of the lift nearest the centre, or None
    when the shifted geodesic misses the octagon."""
    g = _geometry()
    if chord(*_shift_left(p, q)) is None:
        return None
    p0, q0 = p, q
    word, length = [], 0.0
    best = None
    for _ in range(max_len):
        sh = chord(*_shift_left(p, q))
        if sh is None:
            raise EnumerationError("chord walk left the octagon")
        k = sh[2]
        # the shifted chord also exists along sides and through vertices
        lo, hi = sh[:2]
        length += 2.0 * (np.arctanh(hi) - np.arctanh(lo))
        c0, th = _frame(p, q)
        if best is None or abs(c0) < best[0] - 1e-12:
            best = (abs(c0), np.array([c0.real, c0.imag, th]))
        word.append(k)
        M = g["gens"][k]
        p, q = mobius(M, p), mobius(M, q)
        p, q = p / abs(p), q / abs(q)
        if abs(p - p0) < 1e-8 and abs(q - q0) < 1e-8:
            v = best[1]
            v[2] = (v[2] + np.pi) % TWO_PI - np.pi
            return tuple(word), float(length), v
    raise EnumerationError("cutting sequence did not close")


# ---------------------------------------------------------------------------
# group enumeration

def _batch_key(a, b):
    s = np.where((a.real < 0) | ((a.real == 0) & (a.imag < 0)), -1.0, 1.0)
    a, b = a * s, b * s
    k = np.round(np.column_stack([a.real, a.imag, b.real, b.imag]), 6)
    return k + 0.0, a, b


def hyperbolic_elements(L_max):
    """Deck elements (a, b) with translation length <= L_max whose axis
    passes within the circumradius of the centre."""
    g = _geometry()
    r_v = g["r_v"]
    R = L_max + 2 * r_v
    prune = R + r_v
    ga = np.array([M[0, 0] for M in g["gens"]])
    gb = np.array([M[0, 1] for M in g["gens"]])
    seen = set()
    fa, fb = np.array([1.0 + 0j]), np.array([0j])
    seen.add((1.0, 0.0, 0.0, 0.0))
    keep_a, keep_b = [], []
    while len(fa):
        na = (fa[:, None] * ga[None] + fb[:, None] * np.conj(gb)[None]).ravel()
        nb = (fa[:, None] * gb[None] + fb[:, None] * np.conj(ga)[None]).ravel()
        disp = 2.0 * np.arctanh(np.minimum(np.abs(nb / na), 1 - 1e-16))
        ok = disp <= prune
        k, na, nb = _batch_key(na[ok], nb[ok])
        _, first = np.unique(k, axis=0, return_index=True)
        new = [i for i in first if tuple(k[i]) not in seen]
        for i in new:
            seen.add(tuple(k[i]))
        fa, fb = na[new], nb[new]
        keep_a.append(fa)
        keep_b.append(fb)
    A = np.concatenate(keep_a)
    B = np.concatenate(keep_b)
    ell = 2.0 * np.arccosh(np.maximum(np.abs(A.real), 1.0))
    disp = 2.0 * np.arctanh(np.minimum(np.abs(B / A), 1 - 1e-16))
    ok = (ell <= L_max + 1e-9) & (ell > 1e-6) & (disp <= R)
    return A[ok], B[ok], ell[ok]


# ---------------------------------------------------------------------------
# enumeration

def _lam_min(model, V, lengths, n=8, tau=16.0):
    if len(V) == 0:
        return np.empty(0)
    pts = []
    for v, ell in zip(V, lengths):
        S, _ = model._run(v[None], ell, every=max(int(ell / n / (1 / 32)), 1), step=1 / 32)
        pts.append(S[0, :n, :3])
    P = np.concatenate(pts)
    lam, _, _ = lin.lambda_batch(model, P, tau=tau, step=1 / 32)
    return lam.reshape(len(V), n).min(axis=1)


def _phi_values(model, V, lengths, potentials):
    out = [dict() for _ in V]
    for name, pot in (potentials or {}).items():
        for i, (v, ell) in enumerate(zip(V, lengths)):
            out[i][name] = float(pot.integrate(model, v[None], ell)[0])
    return out


def enumerate_closed_geodesics(model, L_max, potentials=None, eta=0.0, check=True, progress=None):
    """Closed geodesics of length <= L_max, one per unoriented free homotopy
    class, sorted by length.

    potentials: dict name -> Potential; Phi(gamma) is stored per name.
    A geodesic is flagged regular when its sampled lambda exceeds eta."""
    if model.code == 0:
        return _enumerate_constant(model, L_max, potentials, eta, check)
    if model.code == 1:
        return _enumerate_perturbed(model, L_max, potentials, eta, progress)
    if model.code == 2:
        return _enumerate_cylinder(model, L_max)
    raise UnsupportedQuery("closed geodesics are not defined for the synthetic driver")


def _backward_word(p, q):
    """Cutting sequence of the reversed orientation.  Its shifted copy lies on
    the other side, so it may miss the octagon on this lift; the tiles within
    two sides always contain one it crosses."""
    g = _geometry()
    lifts = [(p, q)]
    for k in range(8):
        M = g["gens"][k]
        lifts.append((mobius(M, p), mobius(M, q)))
        for j in range(8):
            if j != (k + 4) % 8:
                N = g["gens"][j] @ M
                lifts.append((mobius(N, p), mobius(N, q)))
    for pp, qq in lifts:
        res = cutting_sequence(qq / abs(qq), pp / abs(pp))
        if res is not None:
            return res[0]
    raise EnumerationError("no lift for the reversed orientation")


def _enumerate_constant(model, L_max, potentials, eta, check):
    A, B, ell = hyperbolic_elements(L_max)
    found = {}
    for a, b, l in zip(A, B, ell):
        M = np.array([[a, b], [np.conj(b), np.conj(a)]])
        p, q = axis_endpoints(M)
        res = cutting_sequence(p, q)
        if res is None:
            continue
        word, length, v = res
        # the walk stops after the primitive period; powers show in the trace
        mult = int(round(l / length))
        if mult < 1 or abs(l - mult * length) > 1e-5:
            raise EnumerationError(f"chord length {length} disagrees with trace length {l}")
        key = word_key(word, _backward_word(p, q)) + (f"^{mult}" if mult > 1 else "")
        if key in found:
            continue
        found[key] = (tuple(word) * mult, float(l), v, mult)
    items = sorted(found.items(), key=lambda kv: (kv[1][1], kv[0]))
    V = np.array([it[1][2] for it in items]).reshape(-1, 3)
    lengths = np.array([it[1][1] for it in items])
    lam = _lam_min(model, V, lengths)
    phis = _phi_values(model, V, lengths, potentials)
    out = []
    for i, (key, (word, length, v, mult)) in enumerate(items):
        r = closing_residual(model, v, length, nsteps=int(math.ceil(length * 256))) if check else float("nan")
        out.append(ClosedGeodesic(word, key, length, v, r, mult == 1, bool(lam[i] > eta),
                                  float(lam[i]), phis[i], mult))
    return out


def continue_geodesic(model, g, amplitudes=None, seg_len=1.0):
    """Follow a constant-curvature closed geodesic to `model` (a perturbed
    octagon) through intermediate bump amplitudes.  Returns (v, period,
    residual)."""
    A = model.params["amplitude"]
    amplitudes = np.linspace(0, A, 4)[1:] if amplitudes is None else amplitudes
    v, P = np.asarray(g.v, float), g.length
    for amp in amplitudes:
        m = SurfaceModel("perturbed-octagon", {**{k: model.params[k] for k in ("bump_radius", "step")},
                                               "amplitude": float(amp)})
        v, P, hist, _ = refine_periodic(m, v, P, seg_len=seg_len)
        if not np.isfinite(P) or abs(P - g.length) > 0.5 * g.length:
            raise EnumerationError("continuation lost the orbit")
    fine = refine_periodic(model, v, P, seg_len=seg_len)
    v, P = fine[0], fine[1]
    return v, P, closing_residual(model, v, P, nsteps=fine[3])


def fingerprint(model, v, P, n=8):
    """Footprint histogram (n x n bins over the disc) of the orbit of v."""
    S, _ = model._run(np.asarray(v, float)[None], P, every=1, step=1 / 64)
    H, _, _ = np.histogram2d(S[0, :-1, 0], S[0, :-1, 1], bins=n, range=[[-1, 1], [-1, 1]])
    return H / H.sum()


def same_orbit(a, b, tol=1e-4, hist_tol=0.05):
    """(length, histogram) fingerprints agree."""
    return abs(a[0] - b[0]) < tol and np.abs(a[1] - b[1]).sum() < hist_tol


def _enumerate_perturbed(model, L_max, potentials, eta, progress):
    base = SurfaceModel("constant-octagon", {"step": model.step})
    # the conformal factor is e^u with |u| <= |A|; for A >= 0 lengths only grow
    A = model.params["amplitude"]
    seeds = _enumerate_constant(base, L_max * math.exp(max(-A, 0.0)), None, 0.0, check=False)
    out, prints, failed = [], [], []
    for g in seeds:
        try:
            v, P, r = continue_geodesic(model, g)
        except (EnumerationError, np.linalg.LinAlgError, ValueError) as e:
            failed.append((g.key, str(e)))
            continue
        if r > 1e-8 or (A >= 0 and P < g.length - 1e-6):
            failed.append((g.key, f"residual {r:.2e}, period {P:.6f}"))
            continue
        if P > L_max:
            continue
        fp = (P, fingerprint(model, v, P))
        if any(same_orbit(fp, q) for q in prints):
            failed.append((g.key, "duplicate orbit"))
            continue
        prints.append(fp)
        out.append(ClosedGeodesic(g.word, g.key, P, v, r, g.prime, True, float("nan"), {}, g.multiplicity))
        if progress:
            progress(len(out))
    V = np.array([c.v for c in out]).reshape(-1, 3)
    L = np.array([c.length for c in out])
    lam = _lam_min(model, V, L)
    phis = _phi_values(model, V, L, potentials)
    for c, l, ph in zip(out, lam, phis):
        c.lam_min, c.regular, c.phi = float(l), bool(l > eta), ph
    out.sort(key=lambda c: (c.length, c.key))
    for key, why in failed:
        log.info("seed %s not continued: %s", key, why)
    return out


def _enumerate_cylinder(model, L_max):
    """The only closed geodesics are the core circles; they form a flat
    family inside Sing, so none is regular."""
    a = model.params["a"]
    out = []
    k = 1
    while k * TWO_PI * a <= L_max:
        for sgn in (1, -1):
            v = np.array([0.0, 0.0, sgn * 0.5 * np.pi])
            word = (k if sgn > 0 else -k,)
            out.append(ClosedGeodesic(word, f"core^{k}{'+' if sgn > 0 else '-'}", k * TWO_PI * a, v, 0.0,
                                      k == 1, False, 0.0, {}, k))
        k += 1
    return out


# ---------------------------------------------------------------------------
# stores

def save_geodesics(path, geos, model=None):
    with open(path, "w") as fh:
        if model is not None:
            fh.write(json.dumps(dict(model=model.describe())) + "\n")
        for g in geos:
            fh.write(json.dumps(g.to_dict(), sort_keys=True) + "\n")


def load_geodesics(path):
    out = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            if "word" in d:
                out.append(ClosedGeodesic.from_dict(d))
    return out


# ---------------------------------------------------------------------------
# Gurevic pressure

@dataclass
class GurevicEstimate:
    value: float
    uncertainty: float
    windows: list
    log_sums: list
    counts: list
    residual: float
    undersampled: bool
    variants: dict = field(default_factory=dict)

    def to_dict(self):
        f = lambda x: float(x) if np.isfinite(x) else ("-inf" if x < 0 else "inf")
        return dict(value=f(self.value), uncertainty=f(self.uncertainty),
                    windows=[float(w) for w in self.windows], log_sums=[f(x) for x in self.log_sums],
                    counts=[int(c) for c in self.counts], residual=f(self.residual),
                    undersampled=self.undersampled, variants={k: f(v) for k, v in self.variants.items()})


def _phi_of(g, phi):
    if phi is None:
        return 0.0
    if callable(phi):
        return float(phi(g))
    return float(g.phi[phi])


def _pool(geos, regular_only):
    return [g for g in geos if g.prime and (g.regular or not regular_only)]


def window_sums(geos, phi=None, delta=0.5, T_grid=(), regular_only=True, weight_length=True):
    """log sum |gamma| e^{Phi(gamma)} over prime (regular) geodesics with length
    in [T, T + delta), for T in T_grid.  The |gamma| factor lies in
    [T, T + delta] and does not change the exponential growth rate; it removes
    the 1/T factor in the number of prime orbits."""
    pool = _pool(geos, regular_only)
    L = np.array([g.length for g in pool])
    P = np.array([_phi_of(g, phi) for g in pool]) + (np.log(L) if weight_length and len(L) else 0.0)
    out, cnt = [], []
    for T in T_grid:
        sel = (L >= T) & (L < T + delta)
        cnt.append(int(sel.sum()))
        out.append(float(logsumexp(P[sel])) if sel.any() else -np.inf)
    return out, cnt


def _fit(T, y):
    T, y = np.asarray(T, float), np.asarray(y, float)
    keep = np.isfinite(y)
    if keep.sum() < 2 or np.ptp(T[keep]) == 0:
        return -np.inf, 0.0
    coef = np.polyfit(T[keep], y[keep], 1)
    res = float(np.sqrt(np.mean((np.polyval(coef, T[keep]) - y[keep]) ** 2)))
    return float(coef[0]), res


def cumulative_sums(geos, phi=None, regular_only=True):
    """Distinct lengths T and log sum_{|gamma| <= T} |gamma| e^{Phi(gamma)}."""
    pool = _pool(geos, regular_only)
    if not pool:
        return np.empty(0), np.empty(0)
    L = np.array([g.length for g in pool])
    P = np.array([_phi_of(g, phi) for g in pool]) + np.log(L)
    T = np.unique(np.round(L, 9))
    return T, np.array([logsumexp(P[L <= t + 1e-9]) for t in T])


def gurevic_pressure(geos, phi=None, delta=0.5, L_max=None, regular_only=True, min_count=5):
    """Growth rate of the weighted sums over regular prime closed geodesics.

    Below length 8 the octagon spectrum is a handful of highly degenerate
    lengths, so most windows of width delta are empty and a windowed slope
    depends on where the grid falls.  The value is therefore the slope of the
    cumulative sums (same growth rate as the windowed ones) over the upper
    half of the length range.  The windowed sums are reported; their slope
    and the full-range cumulative slope enter the uncertainty (half-range of
    the three, plus the fit residual).  Returns -inf when no geodesic
    qualifies."""
    pool = _pool(geos, regular_only)
    if L_max is not None:
        pool = [g for g in pool if g.length <= L_max + 1e-9]
    if not pool:
        return GurevicEstimate(-np.inf, 0.0, [], [], [], 0.0, True, {})
    L_max = max(g.length for g in pool) if L_max is None else L_max
    T_min = min(g.length for g in pool)
    T, y = cumulative_sums(pool, phi, regular_only)
    upper = T >= T_min + 0.5 * (L_max - T_min) - 1e-9
    if upper.sum() < 2:
        upper = np.zeros(len(T), bool)
        upper[-2:] = True
    slope, res = _fit(T[upper], y[upper])
    full, _ = _fit(T, y)
    W = np.arange(T_min - 0.5 * delta, L_max - delta + 1e-9, delta / 2)
    logs, cnt = window_sums(pool, phi, delta, W, regular_only)
    wslope, _ = _fit(W, logs)
    variants = dict(cumulative_upper=slope, cumulative_full=full, windowed=wslope)
    vals = [v for v in variants.values() if np.isfinite(v)]
    unc = 0.5 * (max(vals) - min(vals)) + res if len(T) > 1 else np.inf
    under = bool(len(pool) < min_count or upper.sum() < 3)
    return GurevicEstimate(slope, float(unc), list(W), logs, cnt, res, under, variants)


def counting_growth(geos, L_max, T_min=None, regular_only=True):
    """Slope of log N(T), N the number of prime geodesics of length <= T, over
    the upper half of [T_min, L_max]."""
    pool = sorted(g.length for g in _pool(geos, regular_only))
    if not pool:
        return -np.inf
    T_min = pool[0] if T_min is None else T_min
    T = np.linspace(T_min, L_max, 17)[8:]
    N = np.searchsorted(pool, T, side="right")
    return float(np.polyfit(T, np.log(np.maximum(N, 1)), 1)[0])


# ---------------------------------------------------------------------------
# equidistribution

def orbit_measure(model, g, bins, step=1 / 32):
    from .pressure import bin_samples
    S, _ = model._run(np.asarray(g.v)[None], g.length, every=1, step=step)
    return bin_samples(model, S[0, :-1, :3], bins)


def equidistribution_measure(model, geos, T, delta=0.5, phi=None, bins=None):
    """Weighted average of the normalized orbit measures of prime geodesics
    with length in [T, T + delta), weights e^{Phi(gamma)}."""
    from .pressure import default_bins, convex_combination
    bins = default_bins(model) if bins is None else bins
    pool = [g for g in geos if g.prime and T <= g.length < T + delta]
    if not pool:
        return None
    w = np.array([_phi_of(g, phi) for g in pool])
    w = np.exp(w - w.max())
    return convex_combination([orbit_measure(model, g, bins) for g in pool], w)
