import numpy as np
import pytest
from hypothesis import given, strategies as st

from cfslice.assoc import (P2Objective, associate_bruteforce, associate_proposed,
                           associate_strongest, feasible_associations)
from cfslice.validation import tiny_association_instances

import oracles

seeds = st.integers(0, 2**32 - 1)


def rand_beta(rng, K, M):
    return 10.0 ** rng.uniform(-12, -7, (K, M))


# -------------------------------------------------------------- proposed

def test_lone_ue_takes_every_free_ap_without_cap():
    beta = rand_beta(np.random.default_rng(0), 1, 5)
    A = associate_proposed(beta, [1.0], [1e6], tau_p=2)
    assert A.a.all() and A.emergency == ()


def test_cap_limits_serving_set_to_best_potential():
    beta = np.array([[1e-9, 5e-9, 2e-9, 4e-9, 3e-9]])
    A = associate_proposed(beta, [1.0], [1e6], tau_p=2, cap=3)
    assert A.serving(0).tolist() == [1, 3, 4]


def test_single_ap_overflow_goes_through_emergency():
    tau_p = 3
    beta = rand_beta(np.random.default_rng(1), tau_p + 1, 1)
    w = np.array([4.0, 3.0, 2.0, 1.0])
    A = associate_proposed(beta, w, np.ones(4), tau_p)
    assert A.load[0] == tau_p + 1
    assert A.emergency == (3,)


def test_emergency_count_equals_deficit():
    K, tau_p = 7, 2
    beta = rand_beta(np.random.default_rng(2), K, 2)
    A = associate_proposed(beta, np.ones(K), np.arange(1, K + 1), tau_p, cap=1)
    assert len(A.emergency) == K - 2 * tau_p
    assert A.covers_all()


def test_zero_bandwidth_ue_is_last_and_ranks_by_beta():
    beta = np.array([[1e-9, 3e-9, 2e-9], [5e-9, 1e-9, 4e-9]])
    A = associate_proposed(beta, [1.0, 1.0], [0.0, 1e6], tau_p=1, cap=1)
    # UE 1 goes first and takes AP 0; UE 0 then takes its best remaining AP by beta
    assert A.serving(1).tolist() == [0]
    assert A.serving(0).tolist() == [1]


def test_priority_ties_go_to_lower_index():
    beta = np.array([[1e-9], [1e-9]])
    A = associate_proposed(beta, [1.0, 1.0], [1.0, 1.0], tau_p=1)
    assert A.emergency == (1,)


@given(seeds, st.integers(1, 8), st.integers(1, 6), st.integers(1, 3),
       st.one_of(st.none(), st.integers(1, 3)))
def test_proposed_coverage_and_capacity(seed, K, M, tau_p, cap):
    rng = np.random.default_rng(seed)
    beta = rand_beta(rng, K, M)
    b = rng.uniform(0, 5e6, K)
    w = rng.uniform(1, 4, K)
    A = associate_proposed(beta, w, b, tau_p, cap)
    assert A.covers_all()
    if cap is not None:
        assert np.all(A.a.sum(axis=1) <= cap)
    forced = A.a[list(A.emergency)].any(axis=0) if A.emergency else np.zeros(M, bool)
    assert np.all((A.load <= tau_p) | forced)
    for k in A.emergency:
        assert A.a[k].sum() == 1
    assert associate_proposed(beta, w, b, tau_p, cap) == A


# -------------------------------------------------------------- strongest

def test_strongest_picks_argmax_without_contention():
    beta = rand_beta(np.random.default_rng(3), 4, 6)
    A = associate_strongest(beta, tau_p=10)
    assert A.a.sum(axis=1).tolist() == [1] * 4
    assert np.all(A.a[np.arange(4), beta.argmax(axis=1)])


def test_strongest_spills_to_second_best():
    beta = np.tile([1e-7, 1e-9, 1e-10], (5, 1))
    A = associate_strongest(beta, tau_p=3, rng=np.random.default_rng(0))
    assert A.load.tolist() == [3, 2, 0]
    assert A.emergency == ()


def test_strongest_single_ap_forces_everyone():
    A = associate_strongest(np.full((5, 1), 1e-9), tau_p=2)
    assert A.load[0] == 5 and len(A.emergency) == 3


@given(seeds, st.integers(1, 10), st.integers(1, 6), st.integers(1, 3), st.integers(1, 4))
def test_strongest_invariants(seed, K, M, tau_p, n):
    rng = np.random.default_rng(seed)
    beta = rand_beta(rng, K, M)
    A = associate_strongest(beta, tau_p, n, np.random.default_rng(seed))
    B = associate_strongest(beta, tau_p, n, np.random.default_rng(seed))
    assert A == B
    assert A.covers_all() and np.all(A.a.sum(axis=1) <= n)
    if not A.emergency:
        assert np.all(A.load <= tau_p)


# ----------------------------------------------------------- brute force

def test_enumeration_counts():
    assert len(feasible_associations(1, 2, 1)) == 3
    assert len(feasible_associations(2, 2, 1)) == 2
    assert len(feasible_associations(3, 2, 1)) == 0
    with pytest.raises(ValueError):
        feasible_associations(3, 6, 2)


def test_bruteforce_lexicographic_tie_break():
    A = associate_bruteforce(lambda a: np.zeros(len(a)), 1, 2, 1)
    assert A.a.tolist() == [[False, True]]


def test_bruteforce_rejects_infeasible():
    with pytest.raises(ValueError):
        associate_bruteforce(lambda a: np.zeros(len(a)), 3, 1, 2)


def _oracle_value(sc, ch, b, tau_p):
    cfg, t = sc.config, sc.traffic

    def objective(rows):
        return oracles.p2_objective(rows, ch.beta.tolist(), ch.gamma.tolist(),
                                    ch.pilots.pilot_id.tolist(), ch.pilots.eta_p.tolist(),
                                    ch.eta_d.tolist(), cfg.rho_d, cfg.N, t.w.tolist(), list(b),
                                    t.is_urllc.tolist(), t.L_bits.tolist(), cfg.theta,
                                    cfg.tau_p, cfg.tau_c)
    return oracles.brute_force_assoc(sc.K, sc.M, tau_p, objective)[0]


def test_bruteforce_matches_independent_enumeration():
    for sc, ch, b, tau_p in tiny_association_instances(25, seed=7):
        obj = P2Objective.for_scenario(sc, ch, b)
        best = associate_bruteforce(obj, sc.K, sc.M, tau_p)
        assert obj(best) == pytest.approx(_oracle_value(sc, ch, b, tau_p), rel=1e-9)


def test_proposed_never_beats_the_oracle():
    for sc, ch, b, tau_p in tiny_association_instances(60, seed=11):
        obj = P2Objective.for_scenario(sc, ch, b)
        A = associate_proposed(ch.beta, sc.traffic.w, b, tau_p, sc.config.assoc_cap)
        if A.emergency:
            continue
        assert obj(A) <= obj(associate_bruteforce(obj, sc.K, sc.M, tau_p)) * (1 + 1e-9)


def test_p2_objective_batches():
    sc, ch, b, tau_p = next(iter(tiny_association_instances(1, seed=3)))
    obj = P2Objective.for_scenario(sc, ch, b)
    cands = feasible_associations(sc.K, sc.M, tau_p)
    vals = obj(cands)
    assert vals.shape == (len(cands),)
    assert vals[0] == pytest.approx(obj(cands[0]))
