import numpy as np
import pytest

from rank1lab import periodic as pe
from rank1lab import pressure as pr
from rank1lab.surface import side_pairings, trace_length

SYSTOLE = 2 * np.arccosh(1 + np.sqrt(2))


@pytest.fixture(scope="module")
def geos(octagon):
    return pe.enumerate_closed_geodesics(octagon, 7.2, potentials={"half": pr.GeometricPotential(0.5)})


def test_below_systole_empty(octagon):
    assert pe.enumerate_closed_geodesics(octagon, SYSTOLE - 0.01) == []


def test_systoles(geos):
    sys = [g for g in geos if abs(g.length - SYSTOLE) < 1e-6]
    # the regular genus-2 octagon surface has 12 systoles
    assert len(sys) == 12
    for M in side_pairings():
        assert trace_length(M) == pytest.approx(SYSTOLE, abs=1e-12)


def test_lengths_match_trace_formula(geos):
    A, B, ell = pe.hyperbolic_elements(7.2)
    spectrum = np.unique(np.round(ell, 6))
    for g in geos:
        assert np.min(np.abs(spectrum - g.length)) < 1e-6


def test_residual_invariant(geos):
    assert max(g.residual for g in geos) < 1e-8
    assert all(g.length > 0 for g in geos)


def test_keys_unique(geos):
    keys = [g.key for g in geos]
    assert len(keys) == len(set(keys))


def test_primality(geos):
    for g in geos:
        root, k = pe.primitive_root(g.word)
        assert g.prime == (k == 1) == (g.multiplicity == 1)
    # squares of the systoles sit at twice the length and are not prime
    doubles = [g for g in geos if abs(g.length - 2 * SYSTOLE) < 1e-6]
    assert doubles and not any(g.prime for g in doubles)


def test_word_helpers():
    assert pe.least_rotation((3, 1, 2)) == (1, 2, 3)
    assert pe.primitive_root((1, 2, 1, 2, 1, 2)) == ((1, 2), 3)
    assert pe.primitive_root((1, 2, 3)) == ((1, 2, 3), 1)
    assert pe.word_key((2, 5, 1), (0, 3)) == "0-3"


def test_regular_on_octagon(geos):
    assert all(g.regular and g.lam_min == pytest.approx(1.0, abs=1e-6) for g in geos)


def test_phi_is_length_weight(geos):
    for g in geos:
        assert g.phi["half"] == pytest.approx(-0.5 * g.length, abs=1e-6)


def test_counting_growth(geos):
    # N(T) ~ e^T / T, whose log-slope is 1 - 1/T around the fit range
    c = pe.counting_growth(geos, 7.2)
    assert 1 - 1 / 5.0 - 0.1 < c < 1.0


def test_gurevic_values(geos):
    est = pe.gurevic_pressure(geos, None, L_max=6.0)
    assert 0.8 <= est.value <= 1.2
    half = pe.gurevic_pressure(geos, "half", L_max=6.0)
    assert half.value == pytest.approx(est.value - 0.5, abs=0.05)
    assert est.to_dict()["value"] == est.value


def test_gurevic_empty():
    est = pe.gurevic_pressure([], None)
    assert est.value == -np.inf and est.undersampled
    assert est.to_dict()["value"] == "-inf"


def test_gurevic_excludes_singular(cylinder):
    geos = pe.enumerate_closed_geodesics(cylinder, 13.0)
    assert len(geos) == 4 and not any(g.regular for g in geos)
    assert pe.gurevic_pressure(geos, None).value == -np.inf


def test_window_sums(geos):
    logs, cnt = pe.window_sums(geos, None, 0.5, [3.0, 4.0], weight_length=False)
    assert cnt == [12, 0] and logs[0] == pytest.approx(np.log(12)) and logs[1] == -np.inf


def test_store_round_trip(tmp_path, geos, octagon):
    p = tmp_path / "g.jsonl"
    pe.save_geodesics(p, geos[:5], octagon)
    back = pe.load_geodesics(p)
    assert [g.key for g in back] == [g.key for g in geos[:5]]
    assert np.allclose(back[0].v, geos[0].v) and back[0].phi == geos[0].phi


def test_single_orbit_measure(octagon, geos):
    g = geos[0]
    bins = pr.default_bins(octagon)
    mu = pe.equidistribution_measure(octagon, [g], g.length - 0.1, 0.5, bins=bins)
    ref = pe.orbit_measure(octagon, g, bins)
    assert np.allclose(mu.mass, ref.mass) and mu.total == pytest.approx(1.0, abs=1e-12)


def test_equidistribution_improves(octagon, geos):
    liou = pr.liouville_measure(octagon)
    tv3 = pe.equidistribution_measure(octagon, geos, 3.0, delta=1.0).tv(liou)
    tv6 = pe.equidistribution_measure(octagon, geos, 6.0, delta=1.0).tv(liou)
    assert tv6 < tv3
    assert pe.equidistribution_measure(octagon, geos, 100.0) is None


def test_perturbed_enumeration(perturbed):
    geos = pe.enumerate_closed_geodesics(perturbed, 3.1)
    assert len(geos) >= 4
    for g in geos:
        assert g.residual < 1e-8 and g.length <= 3.1
        # a nonnegative bump only lengthens curves
        assert g.length >= SYSTOLE - 1e-6
    prints = [(g.length, pe.fingerprint(perturbed, g.v, g.length)) for g in geos]
    for i in range(len(prints)):
        for j in range(i):
            assert not pe.same_orbit(prints[i], prints[j])
