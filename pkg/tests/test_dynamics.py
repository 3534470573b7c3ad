import numpy as np
import pytest

from mthopfield import oracle
from mthopfield.dynamics import (Bipartition, DynamicsConfig, DynamicsTrace,
                                 bipartition, run_dynamics, run_inference,
                                 write_trace_tsv)
from mthopfield.energy import (ModelParams, NetworkState,
                               regularization_coefficients)
from mthopfield.errors import InputError
from mthopfield.graph import SparseRows
from mthopfield.tasks import TaskSimilarity

from instances import (random_instance, random_params, random_similarity,
                       random_state, sparse_from_dense)


def single_sim():
    return TaskSimilarity(np.zeros((1, 1)))


def test_fixed_point_detected_in_one_sweep():
    # two nodes, one edge, gamma=0, rho=pi/4, all-negative is a fixed point:
    # phi = -w cos(rho) < 0 keeps both neurons negative
    w = sparse_from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    params = ModelParams(gamma=[0.0], rho=[np.pi / 4], alpha=0.0)
    initial = NetworkState.all_negative(2, params)
    trace = run_dynamics(initial, w, single_sim(), params, DynamicsConfig(seed=1))
    assert trace.converged
    assert trace.sweeps_run == 1
    assert trace.flips_per_sweep == [0]
    assert trace.energy_per_sweep[0] == trace.energy_per_sweep[1]
    assert np.array_equal(trace.final_state.x, initial.x)


def test_energy_never_increases_and_converges():
    rng = np.random.default_rng(71)
    for _ in range(50):
        inst = random_instance(rng, n_max=8, m_max=3)
        state = random_state(rng, inst["n"], inst["params"])
        trace = run_dynamics(state, inst["w"], inst["sim"], inst["params"],
                             DynamicsConfig(seed=int(rng.integers(1 << 16))))
        assert trace.converged
        e = trace.energy_per_sweep
        assert all(e[i + 1] <= e[i] + 1e-12 for i in range(len(e) - 1))


def test_per_update_energy_monotone_and_matches_closed_form():
    rng = np.random.default_rng(73)
    for _ in range(20):
        inst = random_instance(rng, n_max=6, m_max=3)
        params = inst["params"]
        state = random_state(rng, inst["n"], params)
        trace = run_dynamics(state, inst["w"], inst["sim"], params,
                             DynamicsConfig(seed=int(rng.integers(1 << 16))),
                             record_updates=True)
        energies = [trace.energy_per_sweep[0]] + trace.update_energies
        hi, lo = params.activation_high(), params.activation_low()
        for step, (i, k, phi, new_val) in enumerate(trace.update_records):
            delta_measured = energies[step + 1] - energies[step]
            assert delta_measured <= 1e-12
            # closed form: -(x_new - x_old) * phi, zero when nothing flips
            flipped = energies[step + 1] != energies[step]
            old_val = (hi[k] + lo[k]) - new_val if flipped else new_val
            delta_closed = -(new_val - old_val) * phi
            assert delta_measured == pytest.approx(delta_closed, abs=1e-9)


def test_per_update_monotone_with_clamping_and_regularization():
    rng = np.random.default_rng(79)
    for _ in range(15):
        h, nl = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        full = random_instance(rng, n_max=1, m_max=1)  # just for rng advance
        w_uu_d = np.zeros((h, h))
        for i in range(h):
            for j in range(i + 1, h):
                if rng.random() < 0.6:
                    w_uu_d[i, j] = w_uu_d[j, i] = rng.uniform(0.1, 1.5)
        w_ul_d = rng.uniform(0, 1, (h, nl)) * (rng.random((h, nl)) < 0.6)
        sim = random_similarity(rng, m, zero_frac=0.3)
        params = random_params(rng, m, beta=float(rng.uniform(0.0, 2.0)))
        p_plus = rng.uniform(0.05, 0.5, m)
        reg = regularization_coefficients(params, params.rho, p_plus, h)
        lbar = random_state(rng, nl, params).x
        w_uu = sparse_from_dense(w_uu_d)
        entries = [(i, j, float(w_ul_d[i, j])) for i in range(h)
                   for j in range(nl) if w_ul_d[i, j] != 0.0]
        w_ul = SparseRows.from_entries(h, nl, entries)
        trace = run_inference(w_uu, w_ul, lbar, sim, params, reg,
                              DynamicsConfig(seed=int(rng.integers(1 << 16))),
                              record_updates=True)
        assert trace.converged
        energies = [trace.energy_per_sweep[0]] + trace.update_energies
        assert all(b - a <= 1e-12 for a, b in zip(energies, energies[1:]))


def test_determinism():
    rng = np.random.default_rng(83)
    inst = random_instance(rng, n_max=8, m_max=3)
    state = random_state(rng, inst["n"], inst["params"])
    t1 = run_dynamics(state, inst["w"], inst["sim"], inst["params"],
                      DynamicsConfig(seed=999))
    t2 = run_dynamics(state, inst["w"], inst["sim"], inst["params"],
                      DynamicsConfig(seed=999))
    assert np.array_equal(t1.final_state.x, t2.final_state.x)
    assert t1.energy_per_sweep == t2.energy_per_sweep
    assert np.array_equal(t1.final_inputs, t2.final_inputs)
    assert t1.flips_per_sweep == t2.flips_per_sweep


def test_fixed_points_are_single_flip_stable():
    rng = np.random.default_rng(89)
    for _ in range(25):
        inst = random_instance(rng, n_max=6, m_max=2)
        params = inst["params"]
        state = random_state(rng, inst["n"], params)
        trace = run_dynamics(state, inst["w"], inst["sim"], params,
                             DynamicsConfig(seed=int(rng.integers(1 << 16))))
        assert trace.converged
        energy_fn = lambda x: oracle.direct_energy(  # noqa: E731
            x, inst["w_dense"], params.gamma, params.alpha, inst["sim"].s)
        assert oracle.is_single_flip_stable(trace.final_state.x, energy_fn,
                                            params.activation_high(),
                                            params.activation_low())


def test_fixed_points_in_oracle_local_minima():
    rng = np.random.default_rng(97)
    for _ in range(10):
        inst = random_instance(rng, n_max=4, m_max=2)
        params = inst["params"]
        state = random_state(rng, inst["n"], params)
        trace = run_dynamics(state, inst["w"], inst["sim"], params,
                             DynamicsConfig(seed=5))
        res = oracle.enumerate_states(inst["w_dense"], params, inst["sim"].s)
        idx = oracle.encode_state(trace.final_state.x, params.activation_high())
        assert idx in set(res.local_minima.tolist())


def test_non_convergence_is_reported():
    # strong coupling + an initial state far from equilibrium: one sweep
    # cannot certify a fixed point, so max_sweeps=1 must report failure
    w = sparse_from_dense(np.array([[0.0, 2.0], [2.0, 0.0]]))
    params = ModelParams(gamma=[-5.0], rho=[np.pi / 4], alpha=0.0)
    initial = NetworkState.all_negative(2, params)
    trace = run_dynamics(initial, w, single_sim(), params,
                         DynamicsConfig(seed=0, max_sweeps=1))
    assert not trace.converged
    assert trace.sweeps_run == 1
    with pytest.raises(InputError, match="did not converge"):
        bipartition(trace, params)
    b = bipartition(trace, params, override_nonconverged=True)
    assert b.warning is not None


def test_inference_empty_unlabeled_set():
    params = ModelParams(gamma=[0.0], rho=[1.0], alpha=0.0)
    w_uu = SparseRows.from_entries(0, 0, [])
    w_ul = SparseRows.from_entries(0, 3, [])
    trace = run_inference(w_uu, w_ul, np.zeros((3, 1)), single_sim(), params,
                          None, DynamicsConfig(seed=4))
    assert trace.converged
    assert trace.sweeps_run == 0
    assert trace.final_state.x.shape == (0, 1)


def test_inference_fixed_point_is_clamped_local_minimum():
    rng = np.random.default_rng(101)
    for _ in range(10):
        h, nl, m = 4, 3, 2
        w_uu_d = np.zeros((h, h))
        for i in range(h):
            for j in range(i + 1, h):
                if rng.random() < 0.7:
                    w_uu_d[i, j] = w_uu_d[j, i] = rng.uniform(0.2, 1.2)
        w_ul_d = rng.uniform(0, 1, (h, nl)) * (rng.random((h, nl)) < 0.7)
        sim = random_similarity(rng, m, zero_frac=0.0)
        params = random_params(rng, m)
        lbar = random_state(rng, nl, params).x
        w_uu = sparse_from_dense(w_uu_d)
        entries = [(i, j, float(w_ul_d[i, j])) for i in range(h)
                   for j in range(nl) if w_ul_d[i, j] != 0.0]
        w_ul = SparseRows.from_entries(h, nl, entries)
        trace = run_inference(w_uu, w_ul, lbar, sim, params, None,
                              DynamicsConfig(seed=int(rng.integers(1 << 16))))
        assert trace.converged
        energy_fn = lambda u: oracle.direct_clamped_energy(  # noqa: E731
            u, w_uu_d, w_ul_d, lbar, params.gamma, params.alpha, sim.s)
        assert oracle.is_single_flip_stable(trace.final_state.x, energy_fn,
                                            params.activation_high(),
                                            params.activation_low())


def test_inference_label_prior_initialization():
    rng = np.random.default_rng(103)
    params = random_params(rng, 2)
    w_uu = sparse_from_dense(np.zeros((5, 5)))
    w_ul = SparseRows.from_entries(5, 2, [])
    lbar = random_state(rng, 2, params).x
    sim = random_similarity(rng, 2)
    cfg = DynamicsConfig(seed=7, init_policy="label-prior-random")
    with pytest.raises(InputError, match="p_plus"):
        run_inference(w_uu, w_ul, lbar, sim, params, None, cfg)
    trace = run_inference(w_uu, w_ul, lbar, sim, params, None, cfg,
                          p_plus=np.array([0.5, 0.5]))
    assert trace.converged


def test_bipartition_counts():
    params = ModelParams(gamma=[0.0, 0.0], rho=[1.0, 1.2], alpha=0.0)
    mask = np.array([[True, False], [False, False], [True, True]])
    state = NetworkState.from_positive_mask(mask, params)
    trace = DynamicsTrace(sweeps_run=1, converged=True, energy_per_sweep=[0.0],
                          flips_per_sweep=[0], final_state=state,
                          final_inputs=np.zeros((3, 2)))
    b = bipartition(trace, params)
    assert b.warning is None
    for k in range(2):
        assert len(b.positives[k]) + len(b.negatives[k]) == 3
    assert b.positives[0].tolist() == [0, 2]
    assert b.negatives[1].tolist() == [0, 1]


def test_all_positive_and_all_negative_partitions():
    params = ModelParams(gamma=[0.0], rho=[1.0], alpha=0.0)
    for value, empty_side in ((np.ones((3, 1), dtype=bool), "negatives"),
                              (np.zeros((3, 1), dtype=bool), "positives")):
        state = NetworkState.from_positive_mask(value, params)
        trace = DynamicsTrace(sweeps_run=1, converged=True,
                              energy_per_sweep=[0.0], flips_per_sweep=[0],
                              final_state=state, final_inputs=np.zeros((3, 1)))
        b = bipartition(trace, params)
        assert len(getattr(b, empty_side)[0]) == 0


def test_trace_tsv(tmp_path):
    w = sparse_from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    params = ModelParams(gamma=[0.0], rho=[np.pi / 4], alpha=0.0)
    trace = run_dynamics(NetworkState.all_negative(2, params), w, single_sim(),
                         params, DynamicsConfig(seed=1))
    out = tmp_path / "trace.tsv"
    write_trace_tsv(trace, out)
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "sweep\tenergy\tflips"
    assert len(lines) == 2 + trace.sweeps_run
