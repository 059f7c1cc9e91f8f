import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msrdl.errors import ConfigError, DataError
from msrdl.hsi import HsiCube, quadrant_layout, synth_gaussian_scene
from msrdl.labeling import Clustering, SRDLConfig
from msrdl.multiscale import (NoNontrivialScale, against_truth, barycenter, msrdl, mutual_information,
                              nmi, vi)

from oracles import entropy_hist, mi_hist, same_partition, vi_hist

SCENE_CFG = SRDLConfig(n_neighbors=20, sigma=0.3, sigma0=0.1, window=3)
partitions = st.integers(1, 200).flatmap(
    lambda n: st.tuples(*[st.lists(st.integers(1, 6), min_size=n, max_size=n)] * 3))


def test_vi_identity_and_ln_n():
    a = np.array([1, 1, 2, 2, 3])
    assert vi(a, a) == 0.0
    assert vi(np.ones(8), np.arange(8)) == pytest.approx(math.log(8), abs=1e-12)
    assert vi(np.ones(8), np.arange(8)) == pytest.approx(2.0794, abs=1e-4)


@given(partitions)
def test_vi_axioms_and_oracle(abc):
    a, b, c = (np.array(x) for x in abc)
    assert vi(a, a) == 0.0
    assert vi(a, b) == vi(b, a)
    assert vi(a, c) <= vi(a, b) + vi(b, c) + 1e-12
    assert vi(a, b) == pytest.approx(vi_hist(a, b), abs=1e-12)
    assert mutual_information(a, b) == pytest.approx(mi_hist(a, b), abs=1e-12)


@given(partitions, st.permutations(range(1, 7)))
def test_permutation_invariance(abc, perm):
    a, b, _ = (np.array(x) for x in abc)
    relabel = np.array([0] + list(perm))[a]
    assert vi(relabel, b) == pytest.approx(vi(a, b), abs=1e-12)
    assert nmi(relabel, b) == pytest.approx(nmi(a, b), abs=1e-12)


def test_nmi_basics():
    a = np.array([1, 1, 2, 2, 2])
    assert nmi(a, a) == 1.0
    assert nmi(a, 3 - a) == 1.0
    warnings = []
    assert nmi(a, np.ones(5), warnings=warnings) == 0.0
    assert warnings and "single-cluster" in warnings[0]
    with pytest.raises(ConfigError):
        nmi(a, a, norm="geo")


@given(partitions, st.sampled_from(["sqrt", "max", "min", "avg"]))
def test_nmi_normalisations(abc, norm):
    a, b, _ = (np.array(x) for x in abc)
    ha, hb = entropy_hist(list(a)), entropy_hist(list(b))
    if ha < 1e-9 or hb < 1e-9:
        return
    den = {"sqrt": math.sqrt(ha * hb), "max": max(ha, hb), "min": min(ha, hb),
           "avg": (ha + hb) / 2}[norm]
    got = nmi(a, b, norm)
    assert 0 <= got <= 1
    assert got == pytest.approx(min(1.0, mi_hist(a, b) / den), abs=1e-10)


def test_mismatched_sizes():
    with pytest.raises(DataError, match="different pixel counts"):
        vi(np.ones(3), np.ones(4))
    with pytest.raises(DataError):
        nmi(np.ones(3), np.ones(4))


def test_truth_zero_is_excluded():
    p, t = against_truth(np.array([1, 2, 2, 1]), np.array([0, 3, 3, 4]))
    assert p.tolist() == [2, 2, 1] and t.tolist() == [3, 3, 4]
    with pytest.raises(DataError, match="no labelled pixels"):
        against_truth(np.ones(3), np.zeros(3))


def fake(labels, t):
    labels = np.asarray(labels)
    return Clustering(labels, K=len(np.unique(labels)), t=t)


def test_identical_scales_pick_smallest_t():
    lab = [1, 1, 2, 2, 3, 3, 1, 2]
    cl = [fake(np.ones(8, int), 0)] + [fake(lab, t) for t in (1, 2, 4)]
    J, totals, best = barycenter(cl, 8)
    assert J == [1, 2, 3]
    assert all(v == 0.0 for v in totals.values())
    assert best == 1


def test_barycenter_minimises_vi_total(rng):
    cl = [fake(rng.integers(1, 4, 30), t) for t in range(6)] + [fake(np.arange(30), 6)]
    J, totals, best = barycenter(cl, 30)
    assert 6 not in J  # K = n is trivial
    for j in J:
        expect = math.fsum(vi(cl[j], cl[u]) for u in J)
        assert totals[j] == pytest.approx(expect, abs=1e-12)
        assert totals[best] <= totals[j]


def test_nontrivial_range_is_half_open():
    # n = 8: K must lie in [2, 4)
    cl = [fake([1] * 8, 0), fake([1, 2] * 4, 1), fake([1, 2, 3, 1, 2, 3, 1, 2], 2),
          fake([1, 2, 3, 4] * 2, 4)]
    J, _, _ = barycenter(cl, 8)
    assert J == [1, 2]


def test_four_block_barycenter():
    cube, truth = synth_gaussian_scene(quadrant_layout(20, 20, np.eye(4)), 20, 20,
                                       noise=0.02 * math.sqrt(2), seed=1)
    res = msrdl(cube, SCENE_CFG, tau=1e-5)
    assert res.grid == [0, 1] + [2**j for j in range(1, res.T + 1)]
    assert res.K_star == 4
    assert same_partition(res.barycenter.labels, truth.labels)
    assert nmi(res.barycenter, truth) == 1.0
    assert res.vi_totals[res.t_star] == min(res.vi_totals.values())
    assert set(res.vi_totals) == set(res.J)
    assert len(res.runtimes_ms) == len(res.grid)


def test_threads_do_not_change_results():
    cube, _ = synth_gaussian_scene(quadrant_layout(12, 12, np.eye(4)), 12, 12, noise=0.05, seed=3)
    cfg = SRDLConfig(n_neighbors=12, sigma=0.3, sigma0=0.1, window=2)
    a, b = msrdl(cube, cfg, threads=1), msrdl(cube, cfg, threads=4)
    assert a.grid == b.grid and a.t_star == b.t_star and a.vi_totals == b.vi_totals
    for x, y in zip(a.clusterings, b.clusterings):
        assert x.labels.tobytes() == y.labels.tobytes()


def test_empty_nontrivial_set_reports_every_scale():
    # n = 4 leaves no K in [2, 2)
    cube = HsiCube(np.random.default_rng(0).random((2, 2, 3)))
    with pytest.raises(NoNontrivialScale, match="per-scale K") as info:
        msrdl(cube, SRDLConfig(n_neighbors=3, sigma=1.0, sigma0=1.0, window=1))
    res = info.value.result
    assert res.t_star is None and res.J == []
    assert len(res.Ks) == len(res.grid) >= 2
