import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from soundzones.diffusion import system1_partition, system2_partition
from soundzones.metrics import (NMSE_FLOOR_DB, MetricSample, UndefinedReferenceError,
                                acoustic_contrast_db, complexity_cpm, complexity_dpmd,
                                metric_traces, nmse_db, steady_state)
from soundzones.scene import circular_gaussian


# ---------------------------------------------------------------- NMSE

def test_nmse_examples():
    d = np.array([1 + 1j, 2.0, -1j])
    assert nmse_db(d, d) == NMSE_FLOOR_DB == -300.0
    assert nmse_db(d, np.zeros(3)) == pytest.approx(0.0, abs=1e-12)
    assert nmse_db(d, 2 * d) == pytest.approx(0.0, abs=1e-12)
    assert nmse_db(np.ones(4), 0.9 * np.ones(4)) == pytest.approx(-20.0, abs=1e-9)


def test_nmse_undefined_and_shape():
    with pytest.raises(UndefinedReferenceError):
        nmse_db(np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        nmse_db(np.ones(2), np.ones(3))


# ---------------------------------------------------------------- contrast

def test_ac_examples():
    assert acoustic_contrast_db(np.ones((2, 1)), np.ones((2, 1)), [1.0]) == pytest.approx(0.0)
    assert acoustic_contrast_db(np.ones((2, 1)), 0.1 * np.ones((2, 1)), [1.0]) == pytest.approx(20.0)
    # per-mic normalisation: unequal zone sizes with equal per-mic energy
    assert acoustic_contrast_db(np.ones((4, 1)), np.ones((1, 1)), [1.0]) == pytest.approx(0.0)
    assert math.isinf(acoustic_contrast_db(np.ones((2, 1)), np.zeros((2, 1)), [1.0]))
    with pytest.raises(ValueError):
        acoustic_contrast_db(np.ones((2, 1)), np.ones((2, 1)), [0.0])


def test_ac_scale_invariance_draws():
    rng = np.random.default_rng(0)
    for _ in range(100):
        H_b, H_d = circular_gaussian(rng, (16, 9)), circular_gaussian(rng, (16, 9))
        g = circular_gaussian(rng, 9)
        c = complex(*rng.normal(size=2)) * 10 ** rng.uniform(-3, 3)
        assert acoustic_contrast_db(H_b, H_d, c * g) == pytest.approx(
            acoustic_contrast_db(H_b, H_d, g), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_traces_match_scalar_versions(seed):
    rng = np.random.default_rng(seed)
    H = circular_gaussian(rng, (3, 6, 2))
    d = circular_gaussian(rng, (3, 6))
    g = circular_gaussian(rng, (3, 2))
    nmse, ac = metric_traces(H, d, g, 4)
    for t in range(3):
        p = H[t] @ g[t]
        assert nmse[t] == pytest.approx(nmse_db(d[t, :4], p[:4]), abs=1e-9)
        assert ac[t] == pytest.approx(acoustic_contrast_db(H[t, :4], H[t, 4:], g[t]), abs=1e-9)


def test_metric_traces_zero_filter_gives_nan_contrast():
    H = np.ones((1, 2, 1), complex)
    nmse, ac = metric_traces(H, np.ones((1, 2)), np.zeros((1, 1)), 1)
    assert nmse[0] == pytest.approx(0.0)
    assert np.isnan(ac[0])


# ---------------------------------------------------------------- steady state

def test_steady_state_examples():
    s = steady_state([-15.0, -17.0], 2)
    assert s.mean_db == -16.0 and s.std_db == 1.0
    s = steady_state([0.0, -15.0, -17.0], 2)
    assert s.mean_db == -16.0
    samples = [MetricSample(i, -10.0, 5.0) for i in range(4)]
    assert steady_state(samples, 3).std_db == 0
    assert steady_state(samples, 3, "ac_db").mean_db == 5.0
    with pytest.raises(ValueError):
        steady_state([1.0], 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 20), min_size=1, max_size=30), st.randoms())
def test_steady_state_permutation_invariant_in_window(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = steady_state(values, len(values)), steady_state(shuffled, len(values))
    assert a.mean_db == pytest.approx(b.mean_db, abs=1e-9)
    assert a.std_db == pytest.approx(b.std_db, abs=1e-9)


# ---------------------------------------------------------------- complexity

def test_complexity_smallest_case():
    p = complexity_cpm(1, 1, 2)
    assert p.additions == 5 and p.multiplications == 4


def test_complexity_reference_values():
    assert complexity_cpm(32, 9, 3200).additions == pytest.approx(1.5280e6, rel=1e-4)
    top, part = system1_partition()
    n0 = complexity_dpmd(4, 1, len(part.mic_sets[0]), len(top.neighborhoods[0]), 9, 3200)
    assert n0.additions == pytest.approx(1.8636e5, rel=1e-4)
    assert n0.multiplications == pytest.approx(5 * 1600 * math.log2(3200) + 72, rel=1e-12)
    assert n0.multiplications == pytest.approx(9.3223e4, rel=1e-4)


def test_complexity_processing_terms():
    p = complexity_dpmd(8, 2, 8, 3, 9, 1024)
    assert p.processing_additions == 10 * 9
    assert p.processing_multiplications == 12 * 9
    assert p.fft_additions == pytest.approx(10 * 1024 * 10)


def exact_cpm(M, L, F):
    # F a power of two so log2 is an integer
    lg = F.bit_length() - 1
    return (Fraction((M + L) * F * lg + M * L), Fraction((M + L) * F * lg, 2) + (M + 1) * L)


@pytest.mark.parametrize("F", [2, 16, 1024, 4096])
def test_complexity_against_exact_arithmetic(F):
    add, mul = exact_cpm(32, 9, F)
    p = complexity_cpm(32, 9, F)
    assert p.additions == pytest.approx(float(add), rel=1e-12)
    assert p.multiplications == pytest.approx(float(mul), rel=1e-12)


@pytest.mark.parametrize("system", [system1_partition, system2_partition])
def test_every_node_cheaper_than_central(system):
    top, part = system()
    central = complexity_cpm(32, 9, 3200)
    for k in range(top.n_nodes):
        node = complexity_dpmd(len(part.mic_sets[k]), len(part.speaker_sets[k]),
                               len(part.mic_sets[k]), len(top.neighborhoods[k]), 9, 3200)
        assert node.additions < central.additions
        assert node.multiplications < central.multiplications


def test_complexity_monotone_in_F():
    prev_c = prev_d = None
    for F in (64, 128, 1000, 3200, 4096, 8192):
        c, d = complexity_cpm(32, 9, F), complexity_dpmd(4, 1, 4, 3, 9, F)
        if prev_c is not None:
            assert c.additions > prev_c.additions and c.multiplications > prev_c.multiplications
            assert d.additions > prev_d.additions and d.multiplications > prev_d.multiplications
        prev_c, prev_d = c, d


def test_complexity_rejects_bad_sizes():
    with pytest.raises(ValueError):
        complexity_cpm(0, 9, 3200)
    with pytest.raises(ValueError):
        complexity_dpmd(4, 1, 4, 0, 9, 3200)
