import numpy as np
import pytest

from rank1lab import pressure as pr
from rank1lab import periodic as pe
from rank1lab.surface import knieper_distance

CENTER = (0.1, 0.05, 0.3)


@pytest.fixture(scope="module")
def octagon_seeds(octagon):
    return pr.seed_patch(octagon, 1500, CENTER, 0.025, seed=1)


@pytest.fixture(scope="module")
def octagon_zero(octagon, octagon_seeds):
    return pr.pressure_estimate(octagon, octagon_seeds, None, [0.2], [1, 2, 3, 4, 5, 6], restarts=2)


def _pairwise_min(model, X, t):
    F, _ = model.flow_states(X, t + 1.0, every=4)
    best = np.inf
    for i in range(len(X) - 1):
        best = min(best, model.dist(F[i][None], F[i + 1:]).max(axis=-1).min())
    return best


def test_singleton(octagon):
    S = pr.build_separated_set(octagon, np.array(CENTER), 5.0, 0.1)
    assert len(S) == 1 and np.allclose(S.members[0], CENTER)


def test_empty_seed_set(octagon):
    S = pr.build_separated_set(octagon, np.empty((0, 3)), 5.0, 0.1)
    assert len(S) == 0
    assert pr.log_partition(octagon, S, pr.ZeroPotential()) == -np.inf
    est = pr.pressure_estimate(octagon, np.empty((0, 3)), None, [0.2], [1, 2, 3, 4])
    assert est.value == -np.inf


def test_large_eps_at_time_zero(cylinder, rng):
    X = cylinder.random_vectors(200, rng)
    X = X[np.abs(X[:, 0]) < 3]
    S = pr.build_separated_set(cylinder, X, 0.0, 100.0)
    assert len(S) == 1


def test_separation_and_maximality(perturbed, rng):
    X = pr.seed_patch(perturbed, 300, CENTER, 0.05, seed=2)
    S = pr.build_separated_set(perturbed, X, 3.0, 0.05)
    assert pr.audit_separation(perturbed, S) >= 0.05
    # no seed outside the set can be added
    F, _ = perturbed.flow_states(X, 4.0, every=4)
    M = F[S.index]
    for i in np.setdiff1d(np.arange(len(X)), S.index):
        assert perturbed.dist(F[i][None], M).max(axis=-1).min() < 0.05 + 1e-6


def test_sing_set_cardinality(cylinder):
    X = pr.seed_sing(cylinder, 256, seed=3)
    sizes = []
    for t in (2.0, 5.0, 10.0):
        S = pr.build_separated_set(cylinder, X, t, 0.1, constraint="Sing")
        assert _pairwise_min(cylinder, S.members, t) >= 0.1 - 1e-9
        sizes.append(len(S))
    # same-orientation core orbits keep their distance: the count is flat in t
    assert sizes[0] == sizes[1] == sizes[2]


def test_adding_seeds_never_lowers_lambda(octagon):
    X = pr.seed_patch(octagon, 800, CENTER, 0.025, seed=4)
    ends = pr.orbit_ends(octagon, X, [4.0])
    order = np.arange(len(X))
    m_small = np.zeros(len(X), dtype=bool)
    m_small[:400] = True
    a = pr.greedy_separated(octagon, ends, 0, 0.1, mask=m_small, order=order)
    b = pr.greedy_separated(octagon, ends, 0, 0.1, order=order)
    assert len(b) >= len(a)


def test_partition_sum_examples(octagon):
    assert pr.partition_sum(np.zeros(7)) == pytest.approx(np.log(7))
    assert pr.partition_sum([2.5 * 3.0]) == pytest.approx(2.5 * 3.0)
    assert pr.partition_sum([]) == -np.inf
    assert pr.partition_sum([1000.0, 1000.0]) == pytest.approx(1000 + np.log(2))


def test_geometric_potential_shift_on_octagon(octagon, octagon_seeds):
    t = 4.0
    S = pr.build_separated_set(octagon, octagon_seeds[:300], t, 0.2)
    for q in (0.5, 1.0, -1.0):
        val = pr.log_partition(octagon, S, pr.GeometricPotential(q), step=1 / 64)
        assert val == pytest.approx(np.log(len(S)) - q * t, abs=1e-4)


def test_octagon_entropy_smoke(octagon_zero):
    # small run; the full-size check lives in the acceptance suite
    assert 0.6 < octagon_zero.value < 1.2
    assert octagon_zero.recompute(0.2) == pytest.approx(octagon_zero.slopes[0.2], abs=1e-12)


def test_constant_shift_law(octagon, octagon_seeds, octagon_zero):
    est = pr.pressure_estimate(octagon, octagon_seeds, pr.ConstantPotential(0.7), [0.2], [1, 2, 3, 4, 5, 6],
                               restarts=2)
    assert est.value - octagon_zero.value == pytest.approx(0.7, abs=2 * est.residuals[0.2] + 1e-9)


def test_q_shift_law(octagon, octagon_seeds, octagon_zero):
    est = pr.pressure_estimate(octagon, octagon_seeds, pr.GeometricPotential(0.5), [0.2], [1, 2, 3, 4, 5, 6],
                               restarts=2)
    assert est.value - octagon_zero.value == pytest.approx(-0.5, abs=0.01)


def test_pressure_csv(tmp_path, octagon_zero):
    p = tmp_path / "p.csv"
    pr.pressure_csv(octagon_zero, p)
    rows = p.read_text().splitlines()
    assert rows[0] == "t,eps,log_lambda,log_lambda_over_t,count" and len(rows) == 7


def test_sing_pressure_zero(cylinder):
    X = pr.seed_sing(cylinder, 256, seed=5)
    for q in (-1.0, 0.0, 1.0):
        est = pr.pressure_estimate(cylinder, X, pr.GeometricPotential(q), [0.2, 0.1], [2, 4, 6, 8, 10],
                                   constraint="Sing", restarts=1)
        assert abs(est.value) < 0.05


def test_octagon_has_no_sing(octagon):
    X = pr.seed_sing(octagon, 100)
    est = pr.pressure_estimate(octagon, X, pr.ConstantPotential(0.3), [0.2], [1, 2, 3, 4])
    v = pr.gap_check(est.value, 1.3, 0.0, 0.1)
    assert v.verdict == "true" and v.margin == np.inf
    assert v.to_dict()["p_sing"] == "-inf"


def test_gap_verdicts():
    assert pr.gap_check(0.0, 0.5, 0.05, 0.05).verdict == "true"
    assert pr.gap_check(0.0, 0.05, 0.05, 0.05).verdict == "inconclusive"
    assert pr.gap_check(0.0, -0.5, 0.05, 0.05).verdict == "false"


def test_bounded_range_zero_potential(cylinder):
    assert pr.bounded_range_check(cylinder, pr.ZeroPotential(), 0.8, 0.0)
    assert not pr.bounded_range_check(cylinder, pr.ZeroPotential(), 0.0, 0.0)


def test_bad_sweep_vacuous_and_empty(octagon, octagon_seeds):
    X = octagon_seeds[:600]
    grid = [1, 2, 3, 4]
    sweep = pr.bad_pressure_sweep(octagon, X, pr.ZeroPotential(), [2.0, 0.5], 0.2, grid, restarts=1)
    full = pr.pressure_estimate(octagon, X, None, [0.2], grid, restarts=1, density_check=False)
    # eta above max lambda: the constraint is vacuous
    assert sweep[0][1].value == pytest.approx(full.value, abs=1e-12)
    # lambda = 1 everywhere leaves no long B(0.5) segments
    assert sweep[1][1].value <= 0.2


def test_ergodic_average_constant(octagon, rng):
    X = octagon.random_vectors(5, rng)
    avg = pr.ergodic_average_potential(octagon, pr.ConstantPotential(0.4), 5.0)
    vals, _ = avg.along(octagon, X, 2.0)
    assert np.allclose(vals, 0.4, atol=1e-12)


def test_ergodic_average_small_T(octagon, rng):
    X = octagon.random_vectors(5, rng)
    base = pr.bump_field(octagon)
    a, _ = base.along(octagon, X, 2.0)
    b, _ = pr.ergodic_average_potential(octagon, base, 1e-3).along(octagon, X, 2.0)
    assert np.abs(a - b).max() < 1e-2


def test_ergodic_average_same_pressure(octagon, octagon_seeds):
    base = pr.bump_field(octagon, center=(0.1, 0.0), width=0.5)
    grid = [1, 2, 3, 4, 5, 6]
    e1 = pr.pressure_estimate(octagon, octagon_seeds, base, [0.2], grid, restarts=1, density_check=False)
    e2 = pr.pressure_estimate(octagon, octagon_seeds, pr.ErgodicAverage(base, 5.0), [0.2], grid, restarts=1,
                              density_check=False)
    assert abs(e1.value - e2.value) < 0.1


def test_free_energy_lower_bound(octagon, octagon_seeds):
    base = pr.bump_field(octagon, center=(0.1, 0.0), width=0.5)
    est = pr.pressure_estimate(octagon, octagon_seeds, base, [0.2], [1, 2, 3, 4, 5, 6], restarts=1,
                               density_check=False)
    geos = pe.enumerate_closed_geodesics(octagon, 4.0, potentials={"bump": base}, check=False)
    for g in geos:
        assert est.value >= g.phi["bump"] / g.length - 0.1


def test_potential_spec_round_trip():
    spec = {"tag": "linear-combination", "terms": [[2.0, {"tag": "constant", "c": 0.5}],
                                                   [1.0, {"tag": "q*phi_u", "q": 0.3}]]}
    p = pr.potential_from_spec(spec)
    assert p.descriptor()["tag"] == "linear-combination"
    avg = pr.potential_from_spec({"tag": "ergodic-average", "T": 2.0, "base": {"tag": "constant", "c": 1.0}})
    assert avg.T == 2.0
    with pytest.raises(ValueError):
        pr.potential_from_spec({"tag": "nope"})


# measures

def test_empirical_measure_on_closed_geodesic(octagon):
    # systole through the centre, perpendicular to a side; the orbit is
    # hyperbolic, so roundoff leaves it after ~30 time units but three
    # periods still trace it
    L = 2 * np.arccosh(1 + np.sqrt(2))
    v = np.zeros(3)
    assert knieper_distance(octagon, octagon.endpoint(v[None], L)[0], v) < 1e-9
    mu = pr.empirical_measure(octagon, v, 3 * L)
    assert mu.total == pytest.approx(1.0, abs=1e-9)
    nu = pr.empirical_measure(octagon, v, L)
    assert mu.tv(nu) < 1e-2 and (mu.mass > 0).sum() <= 8
    assert np.array_equal(mu.mass > 0, nu.mass > 0)


def test_convex_combination(octagon, rng):
    X = octagon.random_vectors(2, rng)
    a = pr.empirical_measure(octagon, X[0], 5.0)
    b = pr.empirical_measure(octagon, X[1], 5.0)
    assert np.array_equal(pr.convex_combination([a, b], [1, 0]).mass, a.mass)
    c = pr.convex_combination([a, b], [0.3, 0.7])
    assert c.total == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        pr.convex_combination([a, b], [-1, 2])


def test_sing_orbit_measure_in_core(cylinder, rng):
    v = cylinder.sing_sample(1, rng)[0]
    mu = pr.empirical_measure(cylinder, v, 30.0)
    s_edges = mu.edges[0]
    mid = 0.5 * (s_edges[1:] + s_edges[:-1])
    outside = np.abs(mid) - 0.5 * np.diff(s_edges) > cylinder.params["w"]
    assert mu.mass[outside].sum() == 0.0 and mu.total == pytest.approx(1.0)
