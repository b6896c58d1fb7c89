import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfslice.alloc import allocate_lp_exact
from cfslice.perf import sinr_matrix
from cfslice.scenario import SLICES
from cfslice.validation import (SUITES, _compositions, grid_search_allocation, random_association,
                                random_channel, random_lp_instance, run_suites,
                                suite_assoc_oracle, suite_lp_oracle, suite_qos_roundtrip,
                                suite_sinr_equivalence, tiny_association_instances)

import oracles

seeds = st.integers(0, 2**32 - 1)


def test_compositions_count():
    # stars and bars: C(n + k, k) tuples with sum <= n
    from math import comb
    for n, k in [(0, 3), (4, 1), (5, 3), (7, 4)]:
        got = list(_compositions(n, k))
        assert len(got) == len(set(got)) == comb(n + k, k)
        assert all(sum(c) <= n for c in got)


@given(seeds)
@settings(max_examples=25)
def test_grid_search_matches_itertools_enumeration(seed):
    inp = random_lp_instance(np.random.default_rng(seed), max_residual_hz=0.3e6)
    step = 0.1e6
    _, f = grid_search_allocation(inp, step)
    best = -np.inf
    spare = {s: inp.budget(s) - inp.b_min[inp.members(s)].sum() for s in SLICES}
    n = {s: int(spare[s] // step + 1e-9) for s in SLICES}
    for extra in itertools.product(*(range(n[SLICES[int(u)]] + 1) for u in inp.is_urllc)):
        e = np.array(extra, float) * step
        if all(e[inp.members(s)].sum() <= spare[s] + 1e-6 for s in SLICES):
            best = max(best, inp.objective(inp.b_min + e))
    assert f == pytest.approx(best, rel=1e-12)


@given(seeds)
@settings(max_examples=30)
def test_vectorised_sinr_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    K, M, N = int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(1, 5))
    ch, rho = random_channel(rng, K, M)
    a = random_association(rng, K, M)
    fast = sinr_matrix(a, ch, rho, N)
    for k in range(K):
        slow = oracles.sinr_eq3(k, np.flatnonzero(a[k]).tolist(), ch.beta.tolist(), ch.gamma.tolist(),
                                ch.pilots.pilot_id.tolist(), ch.pilots.eta_p.tolist(),
                                ch.eta_d.tolist(), rho, N)
        assert fast[k] == pytest.approx(slow, rel=1e-10)


def test_random_generators_shapes():
    rng = np.random.default_rng(0)
    a = random_association(rng, 4, 3)
    assert a.shape == (4, 3) and a.any(axis=1).all()
    inp = random_lp_instance(rng)
    assert 3 <= inp.K <= 6
    for s in SLICES:
        assert inp.b_min[inp.members(s)].sum() <= inp.budget(s)
    allocate_lp_exact(inp)  # feasible by construction


def test_tiny_instances_respect_bounds():
    for sc, ch, b, tau_p in tiny_association_instances(40, seed=5):
        assert sc.K * sc.M <= 12 and tau_p in (1, 2) and sc.K <= sc.M * tau_p
        assert b.shape == (sc.K,)


def test_suites_pass_on_small_runs():
    assert suite_sinr_equivalence(100).passed
    assert suite_lp_oracle(50).passed
    assert suite_assoc_oracle(30).passed
    assert suite_qos_roundtrip(100).passed


def test_perturbed_numerator_is_caught():
    r = suite_sinr_equivalence(50, numerator_scale=1 + 1e-9)
    assert not r.passed and r.detail["max_rel_err"] > 1e-10


def test_run_suites_filter_and_unknown():
    assert [r.name for r in run_suites(["qos_roundtrip"])] == ["qos_roundtrip"]
    with pytest.raises(ValueError):
        run_suites(["nope"])
    assert set(SUITES) == {"sinr_equivalence", "lp_oracle", "assoc_oracle", "qos_roundtrip"}
