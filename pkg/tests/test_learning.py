import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mthopfield.energy import RHO_LO
from mthopfield.errors import InputError
from mthopfield.graph import SparseRows, load_graph
from mthopfield.learning import (LearningConfig, MembershipConfig,
                                 aggregate_objective, gamma_grid,
                                 induced_state_survives_sweep, labeled_input,
                                 labeled_inputs, learn, line_search,
                                 membership_value, memberships, objective,
                                 task_f_measure, task_objective)
from mthopfield.tasks import TaskSimilarity

from instances import sparse_from_dense


def single_sim():
    return TaskSimilarity(np.zeros((1, 1)))


def heaviside_cfg():
    return MembershipConfig(f_kind="heaviside", tau=1.0)


def test_labeled_input_isolated_node():
    w = SparseRows.from_entries(1, 1, [])
    phi = labeled_input(0, 0, np.array([2.0]), np.array([1.0]), w,
                        [np.array([0])], single_sim(), alpha=0.0)
    assert phi == pytest.approx(-2.0)


def test_labeled_input_triangle_balance():
    # 3 labeled nodes, unit-weight triangle, one positive, rho=pi/4, gamma=0:
    # a negative adjacent to one positive and one negative sees
    # sin(pi/4) - cos(pi/4) = 0
    w = sparse_from_dense(np.array([[0.0, 1.0, 1.0],
                                    [1.0, 0.0, 1.0],
                                    [1.0, 1.0, 0.0]]))
    phi = labeled_input(1, 0, np.array([0.0]), np.array([np.pi / 4]), w,
                        [np.array([0])], single_sim(), alpha=0.0)
    assert phi == pytest.approx(0.0, abs=1e-12)


def test_labeled_input_singletask_degeneration():
    rng = np.random.default_rng(7)
    w_dense = np.zeros((4, 4))
    w_dense[0, 1] = w_dense[1, 0] = 1.3
    w_dense[2, 3] = w_dense[3, 2] = 0.4
    w = sparse_from_dense(w_dense)
    gamma, rho = np.array([0.3]), np.array([1.1])
    positives = [np.array([0, 2])]
    phi = labeled_inputs(gamma, rho, w, positives, single_sim(), alpha=0.0)
    act = np.where([True, False, True, False], np.sin(rho[0]), -np.cos(rho[0]))
    expected = w_dense @ act - gamma[0]
    assert np.allclose(phi[:, 0], expected, atol=1e-12)


def test_memberships_midpoint_and_limits():
    for kind in ("sigmoid", "arctangent"):
        cfg = MembershipConfig(f_kind=kind, tau=1.0)
        tp, fn = memberships(0.0, "positive", cfg)
        assert tp == pytest.approx(0.5) and fn == pytest.approx(0.5)
        tp_hi, fn_hi = memberships(1e9, "positive", cfg)
        assert tp_hi == pytest.approx(1.0, abs=1e-6)
        assert fn_hi == pytest.approx(0.0, abs=1e-6)
    fp, none = memberships(-0.3, "negative", heaviside_cfg())
    assert fp == 0.0 and none is None


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50),
       st.sampled_from(["sigmoid", "arctangent", "heaviside"]))
def test_membership_monotone(x1, x2, kind):
    lo, hi = sorted((x1, x2))
    assert membership_value(lo, kind) <= membership_value(hi, kind)
    assert 0.0 <= membership_value(x1, kind) <= 1.0


def test_task_f_measure_examples():
    cfg = heaviside_cfg()
    # all positives separated, all negatives below: F = 1
    phi = np.array([2.0, 1.0, -1.0, -2.0])
    pos = np.array([True, True, False, False])
    assert task_f_measure(phi, pos, cfg) == 1.0
    # one positive exactly at the 0.5 membership point, nothing else
    smooth = MembershipConfig(f_kind="arctangent", tau=1.0)
    assert task_f_measure(np.array([0.0]), np.array([True]), smooth) == \
        pytest.approx(2.0 / 3.0)
    # every positive misclassified
    assert task_f_measure(np.array([-1.0]), np.array([True]), cfg) == 0.0


def test_aggregate_objective():
    for sigma in ("harmonic_mean", "mean", "minimum"):
        assert aggregate_objective(np.array([1.0, 1.0]), sigma) == 1.0
    assert aggregate_objective(np.array([1.0, 0.5]), "harmonic_mean") == \
        pytest.approx(2.0 / 3.0)
    assert aggregate_objective(np.array([1.0, 0.5]), "mean") == pytest.approx(0.75)
    assert aggregate_objective(np.array([1.0, 0.0]), "harmonic_mean") == 0.0
    assert aggregate_objective(np.array([1.0, 0.5]), "minimum") == 0.5


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5),
       st.sampled_from(["harmonic_mean", "mean", "minimum"]))
def test_aggregate_is_one_iff_all_one(values, sigma):
    f = aggregate_objective(np.array(values), sigma)
    assert (f == 1.0) == all(v == 1.0 for v in values)


def test_line_search_tie_rules():
    # equal objective everywhere: stay at the current value
    v, f = line_search(np.array([0.0, 1.0, 2.0]), 1.5, lambda _: 0.7)
    assert v == 1.5 and f == 0.7
    # strictly better point wins even when far away
    v, f = line_search(np.array([0.0, 5.0]), 1.0,
                       lambda x: 1.0 if x == 5.0 else 0.0)
    assert v == 5.0
    # among equal maxima, closest to current; earliest on distance ties
    v, _ = line_search(np.array([0.0, 2.0, 4.0]), 2.9,
                       lambda x: 1.0 if x in (2.0, 4.0) else 0.0)
    assert v == 2.0


def separable_instance(rng, n_pos=4, n_neg=6):
    """Positives form a weighted clique, negatives are isolated."""
    n = n_pos + n_neg
    w = np.zeros((n, n))
    for i in range(n_pos):
        for j in range(i + 1, n_pos):
            w[i, j] = w[j, i] = rng.uniform(0.8, 1.4)
    return sparse_from_dense(w), [np.arange(n_pos)]


def test_learn_reaches_perfect_f_on_separable_instance():
    rng = np.random.default_rng(11)
    for trial in range(10):
        w, positives = separable_instance(rng)
        res = learn(w, positives, single_sim(), alpha=0.0,
                    mcfg=heaviside_cfg(),
                    lcfg=LearningConfig(seed=trial))
        assert res.achieved_f == 1.0
        assert induced_state_survives_sweep(res.gamma, res.rho, w, positives,
                                            single_sim(), alpha=0.0)


def test_learn_zero_edge_graph_closed_form():
    # no edges, alpha=0: phi = -gamma, and any gamma < 0 classifies every
    # node positive, giving F = 2P / (2P + N)
    n_pos, n_neg = 3, 9
    w = SparseRows.from_entries(n_pos + n_neg, n_pos + n_neg, [])
    res = learn(w, [np.arange(n_pos)], single_sim(), alpha=0.0,
                mcfg=heaviside_cfg(), lcfg=LearningConfig(seed=3))
    assert res.achieved_f == pytest.approx(2 * n_pos / (2 * n_pos + n_neg))
    assert res.gamma[0] < 0.0


def test_learn_identical_tasks_get_identical_parameters():
    # a smooth membership gives the symmetric objective a strict interior
    # optimum, so both coordinates of two identical tasks land in the same
    # grid cell regardless of their random initialization
    rng = np.random.default_rng(13)
    n_pos, n_neg = 4, 6
    n = n_pos + n_neg
    w_dense = np.zeros((n, n))
    for i in range(n_pos):
        for j in range(i + 1, n_pos):
            w_dense[i, j] = w_dense[j, i] = rng.uniform(0.8, 1.4)
    for i in range(n_pos, n):
        for j in range(i + 1, n):
            if rng.random() < 0.4:
                w_dense[i, j] = w_dense[j, i] = rng.uniform(0.05, 0.2)
    w = sparse_from_dense(w_dense)
    sim = TaskSimilarity(np.array([[0.0, 1.0], [1.0, 0.0]]))
    two = [np.arange(n_pos), np.arange(n_pos)]
    rho_step = (np.pi / 4 - 1e-6) / 15
    for seed in range(6):
        res = learn(w, two, sim, alpha=0.5,
                    mcfg=MembershipConfig(f_kind="arctangent", tau=5.0),
                    lcfg=LearningConfig(seed=seed))
        assert abs(res.rho[0] - res.rho[1]) <= rho_step + 1e-9
        assert abs(res.gamma[0] - res.gamma[1]) <= 0.2


def test_learn_monotone_f_history():
    rng = np.random.default_rng(17)
    for trial in range(6):
        n = 10
        w_dense = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.4:
                    w_dense[i, j] = w_dense[j, i] = rng.uniform(0.1, 1.5)
        w = sparse_from_dense(w_dense)
        m = 2
        positives = [np.sort(rng.choice(n, size=3, replace=False)) for _ in range(m)]
        sim = TaskSimilarity(np.array([[0.0, 0.6], [0.6, 0.0]]))
        res = learn(w, positives, sim, alpha=0.8,
                    mcfg=MembershipConfig(tau=100.0),
                    lcfg=LearningConfig(seed=trial, max_outer_iters=4))
        hist = res.f_history
        assert all(b >= a for a, b in zip(hist, hist[1:]))
        fresh = objective(res.gamma, res.rho, w, positives, sim, 0.8,
                          MembershipConfig(tau=100.0))
        assert fresh == pytest.approx(hist[-1], abs=1e-9)


def test_learn_requires_positives():
    w = SparseRows.from_entries(3, 3, [])
    with pytest.raises(InputError, match="no positives"):
        learn(w, [np.array([], dtype=np.int64)], single_sim(), 0.0,
              MembershipConfig(), LearningConfig(seed=0))


def test_heaviside_limit_of_smooth_memberships():
    rng = np.random.default_rng(19)
    for _ in range(10):
        n = 8
        w_dense = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.5:
                    w_dense[i, j] = w_dense[j, i] = rng.uniform(0.2, 1.2)
        w = sparse_from_dense(w_dense)
        positives = [np.sort(rng.choice(n, size=2, replace=False))]
        gamma = np.array([rng.uniform(-0.5, 0.5)])
        rho = np.array([rng.uniform(RHO_LO, np.pi / 2 - 0.01)])
        phi = labeled_inputs(gamma, rho, w, positives, single_sim(), 0.0)
        if np.min(np.abs(phi)) < 1e-3:  # stay away from ties
            continue
        sharp = task_objective(0, gamma, rho, w, positives, single_sim(), 0.0,
                               MembershipConfig(f_kind="arctangent", tau=1e6))
        crisp = task_objective(0, gamma, rho, w, positives, single_sim(), 0.0,
                               heaviside_cfg())
        assert sharp == pytest.approx(crisp, abs=1e-3)


def test_gamma_grid_extends_below_minimum():
    grid = gamma_grid(0.0, 2.0, 21)
    assert grid[0] < 0.0
    assert grid[-1] == 2.0
    degenerate = gamma_grid(0.0, 0.0, 21)
    assert degenerate[0] == -1.0 and degenerate[-1] == 0.0


def test_crosstask_activation_modes_differ():
    # distinct rho across tasks: "source" uses the source task's values,
    # "own" the evaluated task's values
    w = SparseRows.from_entries(2, 2, [])
    sim = TaskSimilarity(np.array([[0.0, 1.0], [1.0, 0.0]]))
    gamma = np.zeros(2)
    rho = np.array([RHO_LO, 1.5])
    positives = [np.array([0]), np.array([1])]
    src = labeled_inputs(gamma, rho, w, positives, sim, alpha=1.0,
                         crosstask="source")
    own = labeled_inputs(gamma, rho, w, positives, sim, alpha=1.0,
                         crosstask="own")
    # task 0 at node 1: neighbor column is task 1 (positive at node 1)
    assert src[1, 0] != own[1, 0]
    assert src[1, 0] == pytest.approx(np.sin(rho[1]) - (0.5 * (np.sin(rho[0]) - np.cos(rho[0]))))
