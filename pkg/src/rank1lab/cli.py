"""rank1lab command line: run / validate / models.

A config is an INI file:

    [experiment]
    kind = entropy
    model = constant-octagon      ; built-in name or path to a model file
    seed = 0
    output = runs/entropy

    [parameters]
    eps = 0.2, 0.1
    t_grid = 1, 2, 3, 4, 5, 6, 7, 8

    [model]                       ; optional overrides of model parameters
    amplitude = 0.15

Exit codes: 0 ok, 2 invalid config, 3 model error, 4 computation failure
(partial outputs are kept and the report is marked failed).
"""
import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from .surface import DEFAULTS, ModelError, SurfaceModel

log = logging.getLogger("rank1lab")

SCHEMA = "rank1lab-report/1"
EXIT_CONFIG, EXIT_MODEL, EXIT_COMPUTE = 2, 3, 4

OCTAGONS = ("constant-octagon", "perturbed-octagon")
SURFACES = OCTAGONS + ("flat-cylinder-funnels",)
WITH_SING = ("flat-cylinder-funnels",)


# ---------------------------------------------------------------------------
# parameter schema: name -> (type, default, check)

def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _all(check):
    return lambda xs: len(xs) > 0 and all(check(x) for x in xs)


def _increasing(xs):
    return len(xs) > 0 and all(b > a for a, b in zip(xs, xs[1:]))


T_GRID = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
PATCH = dict(
    patch_center=("floats", [0.1, 0.05, 0.3], lambda xs: len(xs) == 3),
    patch_radius=("float", 0.025, _nonneg),
)
SEPARATED = dict(
    eps=("floats", [0.2, 0.1], _all(_pos)),
    t_grid=("floats", T_GRID, lambda xs: _increasing(xs) and xs[0] > 0),
    seeds=("int", 100000, _pos),
    restarts=("int", 3, _pos),
    step=("float", 1 / 16, _pos),
)

KINDS = {
    "entropy": dict(models=SURFACES, params=dict(SEPARATED, **PATCH)),
    "q-sweep": dict(models=OCTAGONS, params=dict(
        SEPARATED, **PATCH, q_list=("floats", [0.0, 0.5], lambda xs: len(xs) > 0),
        l_max=("float", 6.0, _nonneg), delta=("float", 0.5, _pos), tau=("float", 16.0, _pos))),
    "gap": dict(models=SURFACES, params=dict(
        SEPARATED, **PATCH, q_list=("floats", [-1.0, 0.0, 1.0], lambda xs: len(xs) > 0),
        sing_seeds=("int", 4096, _pos), tau=("float", 16.0, _pos))),
    "eta-sweep": dict(models=WITH_SING, params=dict(
        SEPARATED, eta_list=("floats", [0.4, 0.2, 0.1, 0.05, 0.02], _all(_pos)),
        window=("float", 2.0, _pos), sing_seeds=("int", 4096, _pos), band=("float", 0.1, _nonneg))),
    "bowen-decay": dict(models=SURFACES, params=dict(
        segments=("int", 20, _pos), eta=("float", 0.3, _nonneg), T=("float", 15.0, _pos),
        rho=("float", 1e-3, _pos), candidates=("int", 200, _pos))),
    "riccati-properties": dict(models=tuple(DEFAULTS), params=dict(
        trials=("int", 10000, _pos), tol=("float", 1e-8, _pos), dim=("int", 2, _pos),
        horizon=("float", 4.0, _pos), rk_step=("float", 0.01, _pos), b=("float", 1.5, _pos))),
    "regularize-demo": dict(models=WITH_SING, params=dict(
        vectors=("int", 100, _pos), t=("float", 40.0, _pos), eta0=("float", 0.08, _pos),
        R=("float", 2.5, _pos), eta=("float", 0.05, _pos), delta=("float", 0.1, _pos),
        calibration_vectors=("int", 10, _pos), margin=("float", 0.5, _nonneg))),
    "equidistribution": dict(models=OCTAGONS, params=dict(
        l_max=("float", 6.0, _pos), delta=("float", 0.5, _pos), T_list=("floats", [3.0, 4.5, 5.5], _all(_pos)),
        bins=("int", 6, _pos), angle_bins=("int", 4, _pos), reference_samples=("int", 200000, _pos))),
    "glue-close-demo": dict(models=OCTAGONS, params=dict(
        segments=("int", 3, _pos), segment_length=("float", 3.0, _pos), eta=("float", 0.3, _nonneg),
        rho=("float", 0.05, _pos), closings=("int", 20, _pos), closing_length=("float", 3.0, _pos),
        closing_eps=("float", 0.02, _pos), candidates=("int", 400, _pos),
        length_check=("float", 6.0, _nonneg))),
}


def _parse(kind, text):
    text = text.strip()
    if kind == "int":
        v = float(text)
        if v != int(v):
            raise ValueError("not an integer")
        return int(v)
    if kind == "float":
        return float(text)
    if kind == "floats":
        return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    return text


# ---------------------------------------------------------------------------
# config loading and validation

def read_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    return cp


def resolve_model(ref, overrides=None, base=None):
    """SurfaceModel for a built-in name or a model file path."""
    if ref in DEFAULTS:
        return SurfaceModel(ref, dict(overrides or {}))
    p = Path(ref)
    if base is not None and not p.is_absolute():
        p = Path(base) / p
    if not p.is_file():
        raise FileNotFoundError(ref)
    m = SurfaceModel.load(p)
    return SurfaceModel(m.kind, {**m.params, **overrides}) if overrides else m


def validate(cp, base=None):
    """Every violated constraint as 'section.field: message'.  Returns
    (problems, resolved) with resolved = (kind, model ref, params, seed)."""
    problems = []
    if "experiment" not in cp:
        return ["experiment: missing section"], None
    ex = cp["experiment"]
    kind = ex.get("kind")
    if kind is None:
        problems.append("experiment.kind: missing")
    elif kind not in KINDS:
        problems.append(f"experiment.kind: unknown kind {kind!r} (expected one of {', '.join(KINDS)})")
    for k in ex:
        if k not in ("kind", "model", "seed", "output"):
            problems.append(f"experiment.{k}: unknown field")
    seed = 0
    if "seed" in ex:
        try:
            seed = _parse("int", ex["seed"])
            if seed < 0:
                problems.append("experiment.seed: must be nonnegative")
        except ValueError:
            problems.append(f"experiment.seed: not an integer ({ex['seed']!r})")
    ref = ex.get("model")
    model = None
    overrides = {}
    if "model" in cp:
        for k, v in cp["model"].items():
            try:
                overrides[k] = float(v)
            except ValueError:
                problems.append(f"model.{k}: not a number ({v!r})")
    if ref is None:
        problems.append("experiment.model: missing")
    else:
        try:
            model = resolve_model(ref, overrides, base)
        except FileNotFoundError:
            problems.append(f"experiment.model: unresolved model reference {ref!r}")
        except (ModelError, ValueError, configparser.Error) as e:
            problems.append(f"experiment.model: model error: {e}")
    params = {}
    if kind in KINDS:
        spec = KINDS[kind]
        given = cp["parameters"] if "parameters" in cp else {}
        for k in given:
            if k not in spec["params"]:
                problems.append(f"parameters.{k}: unknown parameter for {kind}")
        for k, (tp, default, check) in spec["params"].items():
            if k in given:
                try:
                    val = _parse(tp, given[k])
                except ValueError:
                    problems.append(f"parameters.{k}: cannot parse {given[k]!r} as {tp}")
                    continue
            else:
                val = default
            if not check(val):
                problems.append(f"parameters.{k}: value {given.get(k, val)!r} violates its constraint")
            params[k] = val
        if model is not None and model.kind not in spec["models"]:
            problems.append(f"experiment.model: {kind} needs one of {', '.join(spec['models'])}, got {model.kind}")
    for s in cp.sections():
        if s not in ("experiment", "parameters", "model"):
            problems.append(f"{s}: unknown section")
    return problems, (kind, model, params, seed)


def config_hash(cp):
    """sha256 of the canonical form (sorted sections and keys)."""
    canon = {s: dict(sorted(cp[s].items())) for s in sorted(cp.sections())}
    canon.get("experiment", {}).pop("output", None)
    return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# report helpers

def clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [clean(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if x != x else ("inf" if x > 0 else "-inf")
    return x


def estimate(name, value, uncertainty, **extra):
    return dict(name=name, value=value, uncertainty=uncertainty, **extra)


REQUIRED = ("schema", "kind", "config_hash", "seed", "model", "parameters", "results", "status", "execution")


def check_report(rep):
    """Problems with a report dict; empty when it satisfies the schema."""
    out = [f"missing field {k!r}" for k in REQUIRED if k not in rep]
    if rep.get("schema") != SCHEMA:
        out.append(f"schema is {rep.get('schema')!r}, expected {SCHEMA!r}")
    m = rep.get("model", {})
    if not isinstance(m, dict) or "kind" not in m or "params" not in m:
        out.append("model lacks kind/params")
    res = rep.get("results", {})
    if not isinstance(res, dict) or "estimates" not in res:
        out.append("results lack an estimates list")
    else:
        for i, e in enumerate(res["estimates"]):
            for k in ("name", "value", "uncertainty"):
                if k not in e:
                    out.append(f"estimate {i} lacks {k!r}")
    return out


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([f"{v:.12g}" if isinstance(v, (float, np.floating)) else v for v in r])
    return path


class Run:
    """Output bundle of one experiment; results accumulate as they come."""

    def __init__(self, out, kind, model, params, seed, chash, workers):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.kind, self.model, self.params, self.seed = kind, model, params, seed
        self.chash, self.workers = chash, workers
        self.results = dict(estimates=[])
        self.files = []

    def add(self, name, value, uncertainty, **extra):
        self.results["estimates"].append(estimate(name, value, uncertainty, **extra))

    def csv(self, name, header, rows):
        self.files.append(name)
        return write_csv(self.out / name, header, rows)

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def report(self, status="ok", error=None):
        rep = dict(schema=SCHEMA, kind=self.kind, config_hash=self.chash, seed=self.seed,
                   model=self.model.describe(), parameters=self.params, results=self.results,
                   status=status, error=error, files=sorted(set(self.files)),
                   execution=dict(workers=self.workers))
        rep = clean(rep)
        with open(self.out / "report.json", "w") as fh:
            json.dump(rep, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return rep


def versions():
    import matplotlib
    import numba
    import scipy
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return dict(python=platform.python_version(), numpy=np.__version__, scipy=scipy.__version__,
                numba=numba.__version__, matplotlib=matplotlib.__version__, rank1lab=pkg)


# ---------------------------------------------------------------------------
# experiments

def _seeds(model, p, seed):
    from . import pressure as pr
    if p.get("patch_radius", 0) > 0:
        return pr.seed_patch(model, p["seeds"], p["patch_center"], p["patch_radius"], seed=seed)
    return model.random_vectors(p["seeds"], np.random.default_rng(seed))


def _separated(run, model, seeds, potential, p, seed, name, constraint="full", mask=None):
    from . import pressure as pr
    est = pr.pressure_estimate(model, seeds, potential, p["eps"], p["t_grid"], constraint=constraint,
                               restarts=p["restarts"], seed=seed, step=p["step"], mask=mask,
                               workers=run.workers)
    pr.pressure_csv(est, run.path(f"{name}.csv"))
    run.add(name, est.value, est.uncertainty(), extrapolated=est.extrapolated, slopes=est.slopes,
            residuals=est.residuals, density_warning=est.density_warning, potential=est.potential,
            constraint=constraint)
    return est


def exp_entropy(run, model, p, seed):
    from . import plots
    from .pressure import ZeroPotential
    est = _separated(run, model, _seeds(model, p, seed), ZeroPotential(), p, seed, "entropy")
    run.results["log_lambda"] = est.log_lambda
    run.results["counts"] = est.counts
    plots.growth(est, run.path("entropy.png"))


def exp_q_sweep(run, model, p, seed):
    from . import plots, periodic as pe
    from .pressure import GeometricPotential
    seeds = _seeds(model, p, seed)
    geos = []
    if p["l_max"] > 0:
        geos = pe.enumerate_closed_geodesics(model, p["l_max"], {"phi_u": GeometricPotential(1.0, p["tau"])})
        pe.save_geodesics(run.path("geodesics.jsonl"), geos, model)
    rows, sep, sep_u, gur, gur_u = [], [], [], [], []
    for q in p["q_list"]:
        est = _separated(run, model, seeds, GeometricPotential(q, p["tau"]), p, seed, f"pressure_q{q:g}")
        sep.append(est.value)
        sep_u.append(est.uncertainty())
        if geos:
            g = pe.gurevic_pressure(geos, phi=lambda c, q=q: q * c.phi["phi_u"], delta=p["delta"],
                                    L_max=p["l_max"])
            agree = bool(abs(g.value - est.value) <= g.uncertainty + est.uncertainty())
            run.add(f"gurevic_q{q:g}", g.value, g.uncertainty, agrees_with_separated=agree,
                    windows=g.windows, log_sums=g.log_sums, counts=g.counts, variants=g.variants)
            gur.append(g.value)
            gur_u.append(g.uncertainty)
        rows.append([q, est.value, est.uncertainty(), gur[-1] if geos else "", gur_u[-1] if geos else ""])
    run.csv("q_sweep.csv", ["q", "separated", "separated_unc", "gurevic", "gurevic_unc"], rows)
    ref = (lambda q: 1 - q) if model.kind == "constant-octagon" else None
    plots.pressure_vs_q(p["q_list"], sep, sep_u, gur or None, gur_u or None, ref, run.path("q_sweep.png"))


def exp_gap(run, model, p, seed):
    from . import pressure as pr
    rows = []
    sing = pr.seed_sing(model, p["sing_seeds"], seed=seed)
    full = _seeds(model, p, seed)
    verdicts = []
    for q in p["q_list"]:
        pot = pr.GeometricPotential(q, p["tau"]) if q != 0 else pr.ZeroPotential()
        e_full = _separated(run, model, full, pot, p, seed, f"full_q{q:g}")
        if len(sing):
            e_sing = _separated(run, model, sing, pot, p, seed, f"sing_q{q:g}", constraint="Sing")
            ps, us = e_sing.value, e_sing.uncertainty()
        else:
            ps, us = -np.inf, 0.0
            run.add(f"sing_q{q:g}", ps, us, constraint="Sing", note="empty singular set")
        v = pr.gap_check(ps, e_full.value, us, e_full.uncertainty())
        verdicts.append(dict(q=q, **v.to_dict()))
        rows.append([q, ps, us, e_full.value, e_full.uncertainty(), v.verdict])
    run.results["gap"] = verdicts
    run.csv("gap.csv", ["q", "p_sing", "u_sing", "p_full", "u_full", "verdict"], rows)


def exp_eta_sweep(run, model, p, seed):
    from . import plots, pressure as pr
    rng = np.random.default_rng(seed)
    w = model.params["w"] + p["window"]
    seeds = model.random_vectors(4 * p["seeds"], rng)
    seeds = seeds[np.abs(seeds[:, 0]) <= w][: p["seeds"]]
    zero = pr.ZeroPotential()
    eps = min(p["eps"])
    sweep = pr.bad_pressure_sweep(model, seeds, zero, p["eta_list"], eps, p["t_grid"],
                                  restarts=p["restarts"], seed=seed, step=p["step"], workers=run.workers)
    sing = pr.seed_sing(model, p["sing_seeds"], seed=seed)
    e_sing = pr.pressure_estimate(model, sing, zero, [eps], p["t_grid"], constraint="Sing",
                                  restarts=p["restarts"], seed=seed, step=p["step"], workers=run.workers)
    run.add("sing", e_sing.value, e_sing.uncertainty(), constraint="Sing")
    rows, vals, uncs = [], [], []
    for eta, est in sweep:
        run.add(f"bad_eta{eta:g}", est.value, est.uncertainty(), constraint=est.constraint,
                counts=est.counts[eps])
        rows.append([eta, est.value, est.uncertainty(), est.counts[eps][-1]])
        vals.append(est.value)
        uncs.append(est.uncertainty())
    order = np.argsort(p["eta_list"])[::-1]
    v = np.array(vals)[order]
    fin = np.where(np.isfinite(v), v, -1e9)
    mono = bool(np.all(np.diff(fin) <= p["band"]))
    near = bool(abs(v[-1] - e_sing.value) <= p["band"] + e_sing.uncertainty() + np.array(uncs)[order][-1])
    run.results["monotone_within_band"] = mono
    run.results["approaches_sing"] = near
    run.csv("eta_sweep.csv", ["eta", "pressure", "uncertainty", "count_at_max_t"], rows)
    plots.eta_sweep(p["eta_list"], vals, uncs, e_sing.value, run.path("eta_sweep.png"))


def exp_bowen(run, model, p, seed):
    from . import foliation as fo, linearization as lin, orbitsets as ob, plots
    rng = np.random.default_rng(seed)
    cand = model.random_vectors(p["candidates"], rng)
    rows, curves, rates, ratios = [], [], [], []
    for i, v in enumerate(cand):
        if len(rows) >= p["segments"]:
            break
        if model.code == 2 and np.abs(v[0]) > model.params["s_max"] - 1:
            continue
        if not ob.in_G(model, v, p["T"], p["eta"]):
            continue
        w = fo.stable_partner(model, v, p["rho"], p["T"])
        rep = lin.bowen_discrepancy(model, v, w, p["T"])
        rows.append([i, rep.rate, rep.ratio(), rep.discrepancy[0], rep.discrepancy[-1], rep.residual])
        curves.append((rep.times, rep.discrepancy))
        rates.append(rep.rate)
        ratios.append(rep.ratio())
    if len(rows) < p["segments"]:
        raise RuntimeError(f"only {len(rows)} G(eta) segments among {p['candidates']} candidates")
    rates = np.array(rates)
    run.add("decay_rate_min", float(rates.min()), float(np.std(rates)), median=float(np.median(rates)))
    run.add("ratio_max", float(max(ratios)), 0.0)
    run.csv("bowen_decay.csv", ["candidate", "rate", "ratio_T_to_0", "d0", "dT", "fit_residual"], rows)
    run.csv("bowen_curves.csv", ["segment", "t", "discrepancy"],
            [[k, t, d] for k, (tt, dd) in enumerate(curves) for t, d in zip(tt, dd)])
    plots.decay_curves(curves, run.path("bowen_decay.png"))


def exp_riccati(run, model, p, seed):
    from . import linearization as lin, plots
    rng = np.random.default_rng(seed)
    res = lin.riccati_property_suite(p["trials"], rng, m=p["dim"], t1=p["horizon"], step=p["rk_step"],
                                     b=p["b"], tol=p["tol"])
    for k, r in res.items():
        run.add(k, r["violations"], 0, trials=r["trials"], worst=r["worst"], passed=r["passed"])
    run.results["all_passed"] = all(r["passed"] for r in res.values())
    run.csv("riccati_properties.csv", ["property", "trials", "violations", "worst"],
            [[k, r["trials"], r["violations"], r["worst"]] for k, r in res.items()])
    plots.property_table(list(res), [r["worst"] for r in res.values()], p["tol"], run.path("riccati_properties.png"))


def exp_regularize(run, model, p, seed):
    from . import foliation as fo, plots
    rng = np.random.default_rng(seed)
    cal_v = model.sing_sample(p["calibration_vectors"], np.random.default_rng(seed + 1000))
    T = fo.calibrate_T(model, cal_v, p["t"], p["eta0"], p["R"], p["delta"], p["margin"])
    run.add("calibrated_T", T, p["margin"])
    V = model.sing_sample(p["vectors"], rng)
    rows, dists = [], []
    times = None
    for i, v in enumerate(V):
        seg = fo.regularize_segment(model, v, p["t"], p["eta0"], p["R"], T=T, eta=p["eta"], delta=p["delta"])
        rows.append([i, seg.lam_start, seg.lam_end, seg.near_sing, seg.endpoints_regular, seg.near_sing_ok,
                     seg.rho_s, seg.rho_u])
        dists.append(seg.sing_dist)
        times = seg.times
    ok_end = sum(r[4] for r in rows)
    ok_sing = sum(r[5] for r in rows)
    run.add("endpoints_regular", ok_end, 0, of=len(rows))
    run.add("near_sing", ok_sing, 0, of=len(rows), worst=max(r[3] for r in rows))
    run.csv("regularize.csv", ["vector", "lam_start", "lam_end", "near_sing", "endpoints_regular",
                               "near_sing_ok", "rho_s", "rho_u"], rows)
    plots.sing_profiles(times, dists, T, p["t"], p["delta"], run.path("regularize.png"))


def exp_equidistribution(run, model, p, seed):
    from . import periodic as pe, plots, pressure as pr
    geos = pe.enumerate_closed_geodesics(model, p["l_max"])
    pe.save_geodesics(run.path("geodesics.jsonl"), geos, model)
    bins = pr.default_bins(model, p["bins"], p["angle_bins"])
    ref = pr.liouville_measure(model, bins, p["reference_samples"], seed=seed)
    # sampling noise of the reference: TV between two halves of the sample
    rows, Ts, tvs = [], [], []
    for T in p["T_list"]:
        mu = pe.equidistribution_measure(model, geos, T, p["delta"], bins=bins)
        if mu is None:
            rows.append([T, 0, "nan"])
            continue
        n = sum(1 for g in geos if g.prime and T <= g.length < T + p["delta"])
        tv = mu.tv(ref)
        run.add(f"tv_T{T:g}", tv, float(np.sqrt(bins_count(bins) / max(p["reference_samples"], 1))),
                geodesics=n)
        rows.append([T, n, tv])
        Ts.append(T)
        tvs.append(tv)
    run.csv("equidistribution.csv", ["T", "geodesics", "tv"], rows)
    if Ts:
        plots.tv_curve(Ts, tvs, run.path("equidistribution.png"))


def bins_count(bins):
    return int(np.prod([len(e) - 1 for e in bins]))


def exp_glue_close(run, model, p, seed):
    from . import orbitsets as ob, periodic as pe, plots
    rng = np.random.default_rng(seed)
    cand = model.random_vectors(p["candidates"], rng)
    # gluing: segments in C(eta) (= G(eta) here, both ends regular)
    segs = []
    for v in cand:
        if len(segs) >= p["segments"]:
            break
        if ob.in_G(model, v, p["segment_length"], p["eta"]):
            segs.append((v, p["segment_length"]))
    sh = ob.shadow_segments(model, segs, p["rho"])
    run.results["gluing"] = sh.summary()
    run.add("gluing_max_distance", float(max(sh.distances)), 0.0, verified=sh.verified, rho=p["rho"])
    rows = []
    for i, v in enumerate(cand):
        if len(rows) >= p["closings"]:
            break
        if not ob.in_G(model, v, p["closing_length"], p["eta"]):
            continue
        try:
            c = ob.close_orbit(model, v, p["closing_length"], p["closing_eps"])
        except ob.ClosingError as e:
            log.info("closing failed for candidate %d: %s", i, e)
            continue
        rows.append([i, c.period, c.residual, c.shadow, c.iterations, c.single_shot])
    if not rows:
        raise RuntimeError("no segment could be closed")
    res = np.array([r[2] for r in rows])
    shd = np.array([r[3] for r in rows])
    run.add("closing_residual_max", float(res.max()), 0.0, closed=len(rows))
    run.add("closing_shadow_max", float(shd.max()), 0.0, bound=4 * p["closing_eps"])
    run.csv("closing.csv", ["candidate", "period", "residual", "shadow", "iterations", "single_shot"], rows)
    plots.residuals(res, shd, p["closing_eps"], run.path("closing.png"))
    if p["length_check"] > 0:
        base = SurfaceModel("constant-octagon")
        geos = pe.enumerate_closed_geodesics(base, p["length_check"])
        errs = []
        for g in geos:
            q, P, _, _ = ob.refine_periodic(base, g.v, g.length)
            errs.append(abs(P - g.length))
        run.add("octagon_length_error_max", float(max(errs)), 0.0, geodesics=len(geos))


RUNNERS = {
    "entropy": exp_entropy,
    "q-sweep": exp_q_sweep,
    "gap": exp_gap,
    "eta-sweep": exp_eta_sweep,
    "bowen-decay": exp_bowen,
    "riccati-properties": exp_riccati,
    "regularize-demo": exp_regularize,
    "equidistribution": exp_equidistribution,
    "glue-close-demo": exp_glue_close,
}


# ---------------------------------------------------------------------------
# commands

def run_config(path, out=None, seed=None, workers=None):
    """Run one experiment; returns (exit code, report dict or None)."""
    path = Path(path)
    try:
        cp = read_config(path)
    except (OSError, configparser.Error) as e:
        log.error("cannot read config: %s", e)
        return EXIT_CONFIG, None
    if seed is not None:
        cp.setdefault("experiment", {})
        cp["experiment"]["seed"] = str(seed)
    problems, resolved = validate(cp, base=path.parent)
    if problems:
        for q in problems:
            log.error(q)
        model_only = all(q.startswith("experiment.model: model error") for q in problems)
        return (EXIT_MODEL if model_only else EXIT_CONFIG), None
    kind, model, params, seed = resolved
    if out is None:
        out = cp["experiment"].get("output", f"runs/{kind}")
        out = Path(out) if Path(out).is_absolute() else path.parent / out
    workers = (os.cpu_count() or 1) if workers is None else max(int(workers), 1)
    chash = config_hash(cp)
    run = Run(out, kind, model, params, seed, chash, workers)
    t0 = time.perf_counter()
    status, code, err = "ok", 0, None
    try:
        RUNNERS[kind](run, model, params, seed)
    except ModelError as e:
        status, code, err = "failed", EXIT_MODEL, f"model error: {e}"
    except Exception as e:
        log.exception("computation failed")
        status, code, err = "failed", EXIT_COMPUTE, f"{type(e).__name__}: {e}"
    rep = run.report(status, err)
    manifest = dict(config=str(path), config_hash=chash, kind=kind, seed=seed, workers=workers,
                    versions=versions(), runtime_seconds=round(time.perf_counter() - t0, 3),
                    status=status, outputs=sorted(set(run.files + ["report.json"])))
    with open(run.out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return code, rep


def list_models():
    out = []
    for kind, m in sorted((k, SurfaceModel(k)) for k in DEFAULTS):
        d = m.describe()
        lo, hi = m.curvature_range()
        d["curvature_range"] = [float(lo), float(hi)]
        out.append(d)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(prog="rank1lab", description="geodesic-flow pressure experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides experiment.output)")
    r.add_argument("--seed", type=int, help="random seed (overrides experiment.seed)")
    r.add_argument("--workers", type=int, help="worker processes (default: available cores)")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    m = sub.add_parser("models", help="list built-in models")
    m.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.cmd == "models":
        cat = list_models()
        if args.json:
            print(json.dumps(clean(cat), indent=2, sort_keys=True))
        else:
            for d in cat:
                prm = ", ".join(f"{k}={v:g}" for k, v in sorted(d["params"].items()))
                print(f"{d['kind']:24s} K in [{d['curvature_range'][0]:.3f}, {d['curvature_range'][1]:.3f}]")
                print(f"    params: {prm}")
                print(f"    Sing:   {json.dumps(clean(d['sing']), sort_keys=True)}")
        return 0

    if args.cmd == "validate":
        try:
            cp = read_config(args.config)
        except (OSError, configparser.Error) as e:
            print(f"config: {e}")
            return EXIT_CONFIG
        problems, _ = validate(cp, base=Path(args.config).parent)
        for q in problems:
            print(q)
        if not problems:
            print("ok")
        return EXIT_CONFIG if problems else 0

    code, rep = run_config(args.config, args.out, args.seed, args.workers)
    if rep is not None:
        for e in rep["results"].get("estimates", []):
            print(f"{e['name']:28s} {e['value']!s:>22}  +- {e['uncertainty']}")
        if rep["status"] != "ok":
            print(f"failed: {rep['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
