import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from cfslice.alloc import (ALLOCATORS, AllocInput, InfeasibleAllocation, allocate_greedy_fallback,
                           allocate_lp_exact, allocate_lp_with_fallback, allocate_proposed,
                           allocate_round_robin, efficiency_metric, get_allocator)
from cfslice.scenario import SLICES
from cfslice.validation import grid_search_allocation, random_lp_instance

MHZ = 1e6
seeds = st.integers(0, 2**32 - 1)


def embb(w, se, b_min, B):
    n = len(w)
    return AllocInput(w, se, b_min, np.zeros(n, bool), {"eMBB": B, "URLLC": 0.0})


def urllc(w, se, b_min, B):
    n = len(w)
    return AllocInput(w, se, b_min, np.ones(n, bool), {"eMBB": 0.0, "URLLC": B})


@st.composite
def alloc_inputs(draw, allow_inf=True):
    K = draw(st.integers(1, 8))
    rng = np.random.default_rng(draw(seeds))
    se = rng.uniform(0.1, 8, K)
    b_min = rng.uniform(0.1 * MHZ, 5 * MHZ, K)
    if allow_inf:
        dead = rng.random(K) < 0.15
        se[dead], b_min[dead] = 0.0, math.inf
    budgets = {"eMBB": float(rng.uniform(0, 15 * MHZ)), "URLLC": float(rng.uniform(0, 15 * MHZ))}
    return AllocInput(rng.uniform(1, 4, K), se, b_min, rng.random(K) < 0.5, budgets)


# ----------------------------------------------------------------- zeta

def test_efficiency_metric_examples():
    assert efficiency_metric(2.0, 4.0, 1e6) == pytest.approx(8e-6)
    assert efficiency_metric(2.0, 4.0, math.inf) == 0.0
    assert efficiency_metric(2.0, 0.0, math.inf) == 0.0
    assert efficiency_metric(4.0, 4.0, 1e6) == 2 * efficiency_metric(2.0, 4.0, 1e6)


# -------------------------------------------------------------- proposed

def test_proposed_hand_trace():
    inp = urllc([3.0, 1.0], [1.0, 1.0], [30 * MHZ, 30 * MHZ], 40 * MHZ)
    out = allocate_proposed(inp)
    np.testing.assert_allclose(out.b, [40 * MHZ, 0.0])
    assert out.admitted.tolist() == [True, False]
    assert out.residual_used["URLLC"] == pytest.approx(10 * MHZ)


def test_proposed_single_admitted_takes_whole_budget():
    out = allocate_proposed(embb([1.0], [2.0], [1 * MHZ], 7 * MHZ))
    assert out.b[0] == pytest.approx(7 * MHZ)


def test_proposed_empty_admission_leaves_residual():
    out = allocate_proposed(embb([1.0], [2.0], [9 * MHZ], 7 * MHZ))
    assert out.b[0] == 0.0 and out.residual["eMBB"] == 7 * MHZ


@given(alloc_inputs())
def test_proposed_admits_iff_fits_at_its_turn(inp):
    out = allocate_proposed(inp)
    zeta = efficiency_metric(inp.w, inp.se, inp.b_min)
    for s in SLICES:
        idx = inp.members(s)
        order = sorted(idx, key=lambda k: (-zeta[k], k))
        rem = inp.budget(s)
        for k in order:
            fits = rem >= inp.b_min[k]
            assert out.admitted[k] == fits
            if fits:
                rem -= inp.b_min[k]
                assert out.b[k] >= inp.b_min[k] * (1 - 1e-12)
            else:
                assert out.b[k] == 0.0


@given(alloc_inputs())
def test_proposed_stage3_shares_are_proportional(inp):
    out = allocate_proposed(inp)
    zeta = efficiency_metric(inp.w, inp.se, inp.b_min)
    for s in SLICES:
        adm = [k for k in inp.members(s) if out.admitted[k]]
        for j in adm:
            for k in adm:
                ej, ek = out.b[j] - inp.b_min[j], out.b[k] - inp.b_min[k]
                if ej > 1e-6 and ek > 1e-6:
                    assert ej / ek == pytest.approx(zeta[j] / zeta[k], rel=1e-9)


@given(alloc_inputs(), seeds)
def test_proposed_permutation_invariant(inp, seed):
    perm = np.random.default_rng(seed).permutation(inp.K)
    shuffled = AllocInput(inp.w[perm], inp.se[perm], inp.b_min[perm], inp.is_urllc[perm], inp.budgets)
    a, b = allocate_proposed(inp), allocate_proposed(shuffled)
    if len(set(efficiency_metric(inp.w, inp.se, inp.b_min).tolist())) == inp.K:
        np.testing.assert_allclose(b.b, a.b[perm], rtol=1e-12, atol=1e-6)


def test_proposed_feasible_admits_everyone():
    inp = embb([1, 2, 3], [1, 2, 3], [1 * MHZ, 2 * MHZ, 3 * MHZ], 6 * MHZ)
    out = allocate_proposed(inp)
    assert out.admitted.all()
    np.testing.assert_allclose(out.b, inp.b_min)


# -------------------------------------------------------------------- LP

def test_lp_examples():
    out = allocate_lp_exact(embb([5.0, 3.0], [1.0, 1.0], [1 * MHZ, 1 * MHZ], 10 * MHZ))
    np.testing.assert_allclose(out.b, [9 * MHZ, 1 * MHZ])
    inp = embb([1.0, 2.0], [1.0, 1.0], [2 * MHZ, 3 * MHZ], 5 * MHZ)
    np.testing.assert_allclose(allocate_lp_exact(inp).b, inp.b_min)


def test_lp_tie_goes_to_lowest_index():
    out = allocate_lp_exact(embb([1.0, 1.0], [2.0, 2.0], [1 * MHZ, 1 * MHZ], 4 * MHZ))
    np.testing.assert_allclose(out.b, [3 * MHZ, 1 * MHZ])


def test_lp_signals_infeasibility():
    with pytest.raises(InfeasibleAllocation) as exc:
        allocate_lp_exact(urllc([1.0, 1.0], [1.0, 0.0], [1 * MHZ, math.inf], 10 * MHZ))
    assert exc.value.slices == ("URLLC",)


def _linprog_optimum(inp):
    res = linprog(-(inp.w * inp.se), A_ub=np.array([[1.0 if inp.is_urllc[k] == (s.value == "URLLC") else 0.0
                                                     for k in range(inp.K)] for s in SLICES]),
                  b_ub=[inp.budget(s) for s in SLICES],
                  bounds=[(lo, None) for lo in inp.b_min], method="highs")
    assert res.status == 0
    return -res.fun


@given(seeds)
def test_lp_matches_linprog_and_beats_proposed(seed):
    inp = random_lp_instance(np.random.default_rng(seed), max_residual_hz=5 * MHZ)
    f_lp = inp.objective(allocate_lp_exact(inp).b)
    assert f_lp == pytest.approx(_linprog_optimum(inp), rel=1e-9)
    assert inp.objective(allocate_proposed(inp).b) <= f_lp * (1 + 1e-12)


@given(seeds)
def test_lp_within_one_grid_step(seed):
    inp = random_lp_instance(np.random.default_rng(seed))
    f_lp = inp.objective(allocate_lp_exact(inp).b)
    _, f_grid = grid_search_allocation(inp, 0.1 * MHZ)
    slack = sum(float(np.max((inp.w * inp.se)[inp.members(s)])) * 0.1 * MHZ
                for s in SLICES if inp.members(s).size)
    assert f_grid <= f_lp * (1 + 1e-12)
    assert f_lp - f_grid <= slack


# ---------------------------------------------------------------- greedy

def test_greedy_empty_budget():
    out = allocate_greedy_fallback(embb([1, 2], [1, 1], [1 * MHZ, 1 * MHZ], 0.0))
    assert np.all(out.b == 0)


def test_greedy_single_grant_boundary():
    inp = embb([1.0, 3.0, 2.0], [1.0, 1.0, 1.0], [2 * MHZ, 3 * MHZ, 2 * MHZ], 3 * MHZ)
    out = allocate_greedy_fallback(inp)
    assert out.admitted.tolist() == [False, True, False]
    np.testing.assert_allclose(out.b, [0, 3 * MHZ, 0])


def test_greedy_feasible_grants_minimums_in_value_order():
    inp = embb([1.0, 3.0, 2.0], [1.0, 1.0, 1.0], [1 * MHZ, 1 * MHZ, 1 * MHZ], 5 * MHZ)
    out = allocate_greedy_fallback(inp)
    assert out.admitted.all()
    np.testing.assert_allclose(out.b, [1 * MHZ, 3 * MHZ, 1 * MHZ])


def test_greedy_skips_what_no_longer_fits():
    inp = embb([3.0, 2.0, 1.0], [1.0, 1.0, 1.0], [2 * MHZ, 5 * MHZ, 1 * MHZ], 4 * MHZ)
    out = allocate_greedy_fallback(inp)
    assert out.admitted.tolist() == [True, False, True]
    np.testing.assert_allclose(out.b, [3 * MHZ, 0, 1 * MHZ])


def test_lp_with_fallback_is_per_slice():
    inp = AllocInput([1.0, 2.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0],
                     [1 * MHZ, 1 * MHZ, 3 * MHZ, 3 * MHZ], [False, False, True, True],
                     {"eMBB": 4 * MHZ, "URLLC": 4 * MHZ})
    out, bad = allocate_lp_with_fallback(inp)
    assert bad == ("URLLC",)
    np.testing.assert_allclose(out.b[:2], [1 * MHZ, 3 * MHZ])  # LP in the feasible slice
    assert out.admitted[2:].sum() == 1 and out.b[2:].sum() == pytest.approx(4 * MHZ)


# ----------------------------------------------------------- round robin

def test_round_robin_examples():
    out = allocate_round_robin(embb([1] * 4, [1] * 4, [0.0] * 4, 40 * MHZ))
    np.testing.assert_allclose(out.b, [10 * MHZ] * 4)
    assert out.residual["URLLC"] == 0.0
    out = allocate_round_robin(AllocInput([1.0], [1.0], [1.0], [False], {"eMBB": 5.0, "URLLC": 7.0}))
    assert out.residual["URLLC"] == 7.0 and out.b[0] == 5.0


# ------------------------------------------------------------ invariants

@given(alloc_inputs())
def test_every_allocator_respects_budgets(inp):
    for name in ("proposed", "greedy_fallback", "round_robin"):
        out = ALLOCATORS[name](inp)
        assert np.all(out.b >= 0)
        for s in SLICES:
            assert out.b[inp.members(s)].sum() <= inp.budget(s) * (1 + 1e-9) + 1e-9
    try:
        out = allocate_lp_exact(inp)
    except InfeasibleAllocation:
        out, _ = allocate_lp_with_fallback(inp)
    for s in SLICES:
        assert out.b[inp.members(s)].sum() <= inp.budget(s) * (1 + 1e-9) + 1e-9


def test_alloc_input_validation_and_lookup():
    with pytest.raises(ValueError):
        AllocInput([0.0], [1.0], [1.0], [False], {"eMBB": 1.0})
    with pytest.raises(ValueError):
        AllocInput([1.0], [-1.0], [1.0], [False], {"eMBB": 1.0})
    with pytest.raises(ValueError):
        get_allocator("cvx")
    assert get_allocator("lp_exact") is allocate_lp_exact
