import numpy as np
import pytest

from rank1lab import foliation as fo
from rank1lab import linearization as lin
from rank1lab.surface import knieper_distance


V0 = np.array([0.1, 0.05, 0.3])


def _flow(model, v, t):
    return model.endpoint(np.atleast_2d(v), t)[0] if t else model.normalize(np.atleast_2d(v))[0]


def test_advance_zero(perturbed):
    w = fo.leaf_advance(perturbed, V0, "s", 0.0)
    assert np.allclose(w, perturbed.normalize(V0[None])[0])


def test_octagon_stable_contraction(octagon):
    rho = 0.01
    w = fo.leaf_advance(octagon, V0, "s", rho)
    for t in (1.0, 2.0, 3.0):
        d = fo.leaf_distance(octagon, _flow(octagon, V0, t), _flow(octagon, w, t), "s")
        assert d == pytest.approx(rho * np.exp(-t), rel=0.05)


def test_octagon_unstable_expansion(octagon):
    rho = 0.001
    w = fo.leaf_advance(octagon, V0, "u", rho)
    d = fo.leaf_distance(octagon, _flow(octagon, V0, 2.0), _flow(octagon, w, 2.0), "u")
    assert d == pytest.approx(rho * np.exp(2.0), rel=0.05)


def test_flat_core_parallel_leaf(cylinder):
    v = np.array([0.0, 0.0, 0.5 * np.pi])
    w = fo.leaf_advance(cylinder, v, "s", 0.3)
    ds = [fo.leaf_distance(cylinder, _flow(cylinder, v, t), _flow(cylinder, w, t), "s") for t in (0.0, 1.0, 3.0, 6.0)]
    assert np.ptp(ds) < 1e-6
    assert ds[0] == pytest.approx(0.3, abs=1e-6)


def test_leaf_round_trip(perturbed, rng):
    for v in perturbed.random_vectors(4, rng):
        for side in ("s", "u"):
            w = fo.leaf_advance(perturbed, v, side, 0.05, orientation=-1)
            assert fo.leaf_distance(perturbed, v, w, side) == pytest.approx(0.05, abs=1e-6)


def test_cs_distance_of_flow_displacement(perturbed):
    for tau in (0.01, -0.02):
        w = _flow(perturbed, V0, tau)
        assert fo.leaf_distance(perturbed, V0, w, "cs") == pytest.approx(abs(tau), abs=1e-6)


def test_stable_distance_nonincreasing(perturbed, rng):
    for v in perturbed.random_vectors(3, rng):
        w = fo.leaf_advance(perturbed, v, "s", 0.02)
        d = [fo.leaf_distance(perturbed, _flow(perturbed, v, t), _flow(perturbed, w, t), "s")
             for t in np.arange(0.0, 4.5, 0.5)]
        assert np.all(np.diff(d) <= 1e-7)


def test_du_bounds_knieper(perturbed, rng):
    # d_K <= e^Lambda d^u, and Lambda is the largest curvature magnitude root
    Lam = perturbed.b
    for v in perturbed.random_vectors(3, rng):
        w = fo.leaf_advance(perturbed, v, "u", 0.05)
        assert knieper_distance(perturbed, v, w) <= np.exp(Lam) * 0.05 + 1e-9


def test_leaf_membership_audit(perturbed):
    for side in ("s", "u"):
        w = fo.leaf_advance(perturbed, V0, side, 0.01)
        d, ok = fo.leaf_membership(perturbed, V0, w, side)
        assert ok and d.max() < 0.011


def test_not_on_leaf(octagon):
    w = fo.leaf_advance(octagon, V0, "u", 0.05)
    with pytest.raises(fo.NotOnLeafError) as e:
        fo.leaf_distance(octagon, V0, w, "s")
    assert e.value.residual > 1e-6


def test_leaf_curve_csv(tmp_path, octagon):
    c = fo.leaf_curve(octagon, V0, "s", 0.2, n=11, with_lambda=True)
    assert len(c.samples) == 11 and np.allclose(c.lam, 1.0, atol=1e-6)
    assert np.allclose(c.samples[5], octagon.normalize(V0[None])[0])
    p = tmp_path / "leaf.csv"
    c.to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0] == "arclength,chart,x,y,angle,lambda" and len(rows) == 12


def test_stable_partner_distance(perturbed):
    w = fo.stable_partner(perturbed, V0, 1e-3, 10.0)
    assert fo.tdist(perturbed, V0[None], w[None])[0] == pytest.approx(1e-3, rel=1e-4)
    d, ok = fo.leaf_membership(perturbed, V0, w, "s", T=10.0)
    assert ok


# local product

def test_local_product_diagonal(octagon):
    v = octagon.normalize(V0[None])[0]
    assert np.allclose(fo.local_product(octagon, v, v), v)


def test_local_product_on_cs_leaf(perturbed):
    w2 = perturbed.normalize(V0[None])[0]
    w1 = fo.leaf_advance(perturbed, _flow(perturbed, w2, 0.01), "s", 0.01)
    lp = fo.local_product(perturbed, w1, w2, detail=True)
    assert knieper_distance(perturbed, lp.point, w1) < 1e-6
    assert abs(lp.a) < 1e-6


def test_local_product_generic(octagon, rng):
    cal = fo.default_calibration(octagon)
    kappa = cal["kappa"]
    for _ in range(3):
        w1 = octagon.random_vectors(1, rng)[0]
        d = rng.normal(size=3)
        w2 = octagon.normalize((w1 + 0.01 * d / np.linalg.norm(d))[None])[0]
        lp = fo.local_product(octagon, w1, w2, detail=True)
        dk = knieper_distance(octagon, w1, w2)
        # independent membership checks for both leaves
        assert fo.leaf_distance(octagon, w1, lp.point, "u") == pytest.approx(lp.du, abs=1e-6)
        assert fo.leaf_distance(octagon, w2, lp.point, "cs") == pytest.approx(lp.dcs, abs=1e-6)
        assert lp.du <= kappa * dk + 1e-6 and lp.dcs <= kappa * dk + 1e-6
        # idempotence [w1, [w1, w2]] = [w1, w2]
        again = fo.local_product(octagon, w1, lp.point)
        assert knieper_distance(octagon, again, lp.point) < 1e-6


# projections

def test_project_identity_on_octagon(octagon, rng):
    for v in octagon.random_vectors(3, rng):
        w = fo.project_to_reg(octagon, v, "s", 0.5, 1.0)
        assert np.allclose(w, octagon.normalize(v[None])[0])


def test_project_sing_vector(cylinder, rng):
    cal = fo.default_calibration(cylinder)
    v = cylinder.sing_sample(1, rng)[0]
    for side in ("s", "u"):
        w, info = fo.project_to_reg(cylinder, v, side, cal["eta0"], cal["R"], info=True)
        assert lin.lambda_batch(cylinder, w[None], 16.0)[0][0] >= cal["eta0"] - 1e-9
        d = fo.leaf_distance(cylinder, v, w, side, r_search=cal["R"] + 0.5)
        assert d <= cal["R"] and d == pytest.approx(abs(info["rho"]), abs=1e-6)


def test_project_not_found(cylinder, rng):
    v = cylinder.sing_sample(1, rng)[0]
    v[0] = 0.0
    with pytest.raises(fo.NotFoundError) as e:
        fo.project_to_reg(cylinder, v, "s", 0.08, 0.2)
    assert e.value.max_lam < 0.08


def test_regularize_sing_vector(cylinder, rng):
    cal = fo.default_calibration(cylinder)
    v = cylinder.sing_sample(1, rng)[0]
    seg = fo.regularize_segment(cylinder, v, 40.0, cal["eta0"], cal["R"], eta=0.05, delta=0.1)
    assert seg.endpoints_regular and seg.near_sing_ok
    # only [T, t - T] is asserted; the ends may be far from Sing
    assert seg.sing_dist[0] >= seg.near_sing


def test_regularize_identity_when_regular(octagon):
    seg = fo.regularize_segment(octagon, V0, 5.0, 0.5, 1.0)
    assert np.allclose(seg.w, octagon.normalize(V0[None])[0], atol=1e-9)
    assert seg.endpoints_regular


def test_contraction_on_good_segment(perturbed):
    from rank1lab.orbitsets import in_G
    eta, T = 0.3, 8.0
    rng = np.random.default_rng(2)
    v = next(x for x in perturbed.random_vectors(40, rng) if in_G(perturbed, x, T, eta))
    w = fo.leaf_advance(perturbed, v, "s", 0.01)
    w2 = fo.leaf_advance(perturbed, v, "s", 0.01, orientation=-1)
    d0 = fo.leaf_distance(perturbed, w, w2, "s")
    for t in (2.0, 4.0, 8.0):
        d = fo.leaf_distance(perturbed, _flow(perturbed, w, t), _flow(perturbed, w2, t), "s")
        assert d <= d0 * np.exp(-0.5 * eta * t) * 1.05


def test_weak_expansivity(octagon):
    # backward flow of unstable displacements shrinks below eps
    R, eps = 0.5, 0.01
    x = _flow(octagon, V0, 8.0)
    y = fo.leaf_advance(octagon, x, "u", R)
    back = octagon.endpoint(y[None], -8.0)[0]
    assert fo.leaf_distance(octagon, octagon.normalize(V0[None])[0], back, "u") < eps
