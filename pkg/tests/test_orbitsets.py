import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rank1lab import orbitsets as ob
from rank1lab import periodic as pe
from rank1lab.surface import knieper_distance, bowen_distance, sing_approach, near_sing_sample, asymptotic_vectors

H = 1 / 64
V0 = np.array([0.1, 0.05, 0.3])


# profile level

@pytest.mark.parametrize("c", [0.0, 0.2, 0.5, 1.0])
def test_constant_profile(c):
    lam = np.full(641, c)
    t = 640 * H
    assert ob.cumulative(lam, H)[-1] == pytest.approx(c * t, abs=1e-12)
    for eta in (0.1, 0.5, 0.9):
        assert ob.in_G_profile(lam, H, eta) == (c >= eta)
        assert ob.in_B_profile(lam, H, eta) == (c < eta)


def test_two_phase_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(20, 200))
        k = int(rng.integers(0, n))
        c = rng.uniform(0, 1.5)
        lam = np.r_[np.zeros(k), np.full(n + 1 - k, c)]
        eta = rng.uniform(0.05, 1.0)
        assert ob.in_G_profile(lam, H, eta) == ob.brute_in_G(lam, H, eta)


def test_bad_prefix_of_length_three():
    eta = 0.4
    lam = np.r_[np.full(3 * 64, eta / 2), np.full(7 * 64 + 1, 1.0)]
    d = ob.decompose_profile(lam, H, eta)
    assert d.p == pytest.approx(ob.brute_prefix(lam, H, eta))
    assert d.p >= 3.0 and d.s == ob.brute_suffix(lam, H, eta, d.p) and d.verified


def test_all_good_profile():
    d = ob.decompose_profile(np.full(321, 1.0), H, 0.5)
    assert (d.p, d.g, d.s) == (0.0, 5.0, 0.0)


def test_all_bad_profile():
    d = ob.decompose_profile(np.zeros(321), H, 0.5)
    assert (d.p, d.g, d.s) == (5.0, 0.0, 0.0) and d.verified


profiles = st.lists(st.floats(0.0, 2.0), min_size=2, max_size=60).map(np.array)


@settings(max_examples=200, deadline=None)
@given(lam=profiles, eta=st.floats(0.05, 1.5))
def test_decomposition_property(lam, eta):
    h = 0.1
    d = ob.decompose_profile(lam, h, eta)
    assert d.kp + (len(lam) - 1 - d.kp - d.ks) + d.ks == len(lam) - 1
    assert d.p + d.g + d.s == pytest.approx(h * (len(lam) - 1))
    assert d.verified
    assert d.p == pytest.approx(ob.brute_prefix(lam, h, eta))
    assert d.s == pytest.approx(ob.brute_suffix(lam, h, eta, d.p))


@settings(max_examples=200, deadline=None)
@given(lam=profiles, eta=st.floats(0.05, 1.5))
def test_in_G_property(lam, eta):
    assert ob.in_G_profile(lam, 0.1, eta) == ob.brute_in_G(lam, 0.1, eta)


@settings(max_examples=200, deadline=None)
@given(lam=profiles, eta=st.floats(0.05, 1.5))
def test_good_implies_regular_endpoints(lam, eta):
    if ob.in_G_profile(lam, 0.1, eta):
        # at one grid step the average is the trapezoid of the end samples
        assert lam[0] + lam[1] >= 2 * eta - 1e-9 and lam[-1] + lam[-2] >= 2 * eta - 1e-9


def test_good_subset_of_C():
    rng = np.random.default_rng(1)
    for _ in range(300):
        lam = rng.uniform(0, 2, int(rng.integers(2, 50)))
        lam = np.r_[lam[0], lam, lam[-1]]
        if ob.in_G_profile(lam, 0.1, 0.5):
            assert ob.in_C_profile(lam, 0.5)


def test_thickened_bad():
    lam = np.full(1 + 64 * 12, 1.0)
    assert not ob.thickened_bad(lam, H, 10.0, 0.5)
    lam[:64] = 0.0          # [-1, 0) is singular
    assert not ob.thickened_bad(lam, H, 10.0, 0.5)
    assert ob.thickened_bad(lam, H, 0.5, 0.6)


# model level

def test_octagon_integral_and_membership(octagon):
    assert ob.lambda_integral(octagon, V0, 4.0) == pytest.approx(4.0, abs=1e-6)
    assert ob.in_G(octagon, V0, 4.0, 0.9) and not ob.in_B(octagon, V0, 4.0, 0.9)
    d = ob.decompose(octagon, V0, 4.0, 0.9)
    assert (d.p, d.s) == (0.0, 0.0) and d.g == pytest.approx(4.0)


def test_sing_segment(cylinder, rng):
    v = cylinder.sing_sample(1, rng)[0]
    assert ob.lambda_integral(cylinder, v, 5.0) == pytest.approx(0.0, abs=1e-9)
    for eta in (0.01, 0.3):
        assert not ob.in_G(cylinder, v, 5.0, eta) and ob.in_B(cylinder, v, 5.0, eta)
    d = ob.decompose(cylinder, v, 5.0, 0.1)
    assert d.p == pytest.approx(5.0) and d.g == 0 and d.s == 0


@pytest.mark.parametrize("kind", ["perturbed", "cylinder"])
def test_decomposition_on_model(kind, request, rng):
    model = request.getfixturevalue(kind)
    X = model.random_vectors(10, rng)
    if model.code == 2:
        X = X[np.abs(X[:, 0]) < 2.5]
    for v in X:
        d = ob.decompose(model, v, 6.0, 0.3)
        assert d.p + d.g + d.s == pytest.approx(6.0, abs=1e-9) and d.verified


def test_nesting(perturbed, rng):
    X = perturbed.random_vectors(60, rng)
    etas = [0.6, 0.4, 0.2, 0.1]
    M = np.array([ob.in_reg(perturbed, X, e) for e in etas])
    assert np.all(M[:-1] <= M[1:])


def test_segment_store(tmp_path, octagon):
    rec = ob.segment_record(octagon, V0, 3.0, 0.5)
    assert "G" in rec["tags"] and "C" in rec["tags"] and "Reg" in rec["tags"]
    p = tmp_path / "segs.jsonl"
    ob.write_segments(p, [rec, rec])
    back = ob.read_segments(p)
    assert back == [rec, rec]


def test_near_sing_vectors_approach_sing(cylinder, rng):
    X = near_sing_sample(cylinder, 5, rng)
    assert np.all(sing_approach(cylinder, X)["ok"])
    A = asymptotic_vectors(cylinder, [1.5, 2.0])
    out = sing_approach(cylinder, A)
    assert np.all(out["direction"] == 1)
    assert np.all(out["forward"][:, -1] < 0.05)


# gluing and closing

def test_shadow_single_segment(octagon):
    sh = ob.shadow_segments(octagon, [(V0, 3.0)], 0.05)
    assert sh.transitions == [] and sh.verified
    assert knieper_distance(octagon, sh.w, V0) < 1e-9


def test_shadow_two_copies(octagon):
    sh = ob.shadow_segments(octagon, [(V0, 4.0)] * 2, 0.05)
    assert sh.verified and len(sh.transitions) == 1
    # independent re-check of the second visit with the sampled Bowen metric
    w = octagon.endpoint(sh.w[None], sh.starts[1])[0]
    assert bowen_distance(octagon, V0, w, 4.0) < 0.05


def test_shadow_three_segments(perturbed):
    rng = np.random.default_rng(3)
    segs = [(v, 3.0) for v in perturbed.random_vectors(20, rng) if ob.in_C_profile(ob.profile(perturbed, v, 3.0)[1], 0.3)][:3]
    sh = ob.shadow_segments(perturbed, segs, 0.05)
    assert sh.verified and len(sh.transitions) == 2
    assert all(0 <= tau <= sh.tau_bound for tau in sh.transitions)


def test_shadow_windows(octagon):
    sh = ob.shadow_segments(octagon, [(V0, 3.0)] * 2, 0.05, windows=[(6.0, 12.0)])
    assert 6.0 - octagon.step <= sh.transitions[0] <= 12.0 + octagon.step and sh.verified


def test_close_known_geodesic(octagon):
    g = pe.enumerate_closed_geodesics(octagon, 3.2, check=False)[0]
    v = g.v + np.array([1e-3, -1e-3, 1e-3])
    c = ob.close_orbit(octagon, v, g.length - 0.5, 0.02)
    assert c.period == pytest.approx(g.length, abs=1e-6)
    assert c.residual < 1e-8 and c.shadow <= 0.08


def test_close_already_periodic(octagon):
    g = pe.enumerate_closed_geodesics(octagon, 3.2, check=False)[0]
    c = ob.close_orbit(octagon, g.v, g.length - 0.5, 0.02)
    assert c.period == pytest.approx(g.length, abs=1e-8)
    assert bowen_distance(octagon, g.v, c.w, g.length) < 1e-6


def test_close_generic_good_segment(perturbed):
    rng = np.random.default_rng(2)
    v = next(x for x in perturbed.random_vectors(40, rng) if ob.in_G(perturbed, x, 10.0, 0.3))
    c = ob.close_orbit(perturbed, v, 10.0, 0.02)
    assert c.residual < 1e-8 and c.shadow <= 4 * 0.02
    assert ob.closing_residual(perturbed, c.w, c.period, c.nsteps) == pytest.approx(c.single_shot)


def test_close_gives_up(octagon):
    with pytest.raises(ob.ClosingError):
        ob.close_orbit(octagon, V0, 2.0, 0.02, tau_max=0.5)


def test_two_sided_search(octagon):
    from rank1lab import foliation as fo
    x = octagon.endpoint(V0[None], 2.0)[0]
    tr = ob.two_sided_search(octagon, x, V0, tau_back=5.0, tau_max=6.0)
    assert tr is not None and tr.tau >= 5.0
    # launch on W^u(x), arrival on W^s(V0), joined by the flow
    assert fo.leaf_distance(octagon, x, tr.y, "u") == pytest.approx(abs(tr.a), abs=1e-6)
    assert fo.leaf_distance(octagon, V0, tr.arrival, "s") <= 0.02 + 1e-6
    assert knieper_distance(octagon, octagon.endpoint(tr.y[None], tr.tau)[0], tr.arrival) < 1e-6
