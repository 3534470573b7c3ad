"""Reference single-task parametric Hopfield flow.

A standalone implementation of the one-task special case: threshold/angle
learning by coordinate grid search on the labeled subgraph, then clamped
asynchronous relaxation of the unlabeled nodes with the positive-count
penalty. No task coupling exists here, so there is no similarity matrix,
no cross-task input term and no task grouping.

It exists to pin down the degeneration contract: with one task and zero
coupling, the multitask pipeline must reproduce these scores exactly under
shared seeds. Shared leaf primitives (membership functions, the line
search, the sparse row sums) are imported; the learning loop and the
dynamics loop are written out on their own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import REBUILD_PERIOD, DynamicsConfig
from .energy import RHO_LO, ModelParams, regularization_coefficients
from .errors import InputError
from .graph import SparseRows
from .learning import (LearningConfig, MembershipConfig, aggregate_objective,
                       gamma_grid, line_search, rho_grid, task_f_measure)


@dataclass
class SingleTaskModel:
    gamma: float
    rho: float
    achieved_f: float
    iterations: int
    converged: bool


def learn_single(w_ll: SparseRows, positives_local: np.ndarray,
                 mcfg: MembershipConfig, lcfg: LearningConfig) -> SingleTaskModel:
    """Coordinate grid search over the two parameters of one task."""
    n = w_ll.n_rows
    positives_local = np.asarray(positives_local, dtype=np.int64)
    if positives_local.size == 0:
        raise InputError("task has no positives on the labeled set")
    mask = np.zeros(n, dtype=bool)
    mask[positives_local] = True

    rng = np.random.default_rng(lcfg.seed)
    perm = rng.permutation(2)
    rho = float(RHO_LO + (np.pi / 4.0) * rng.random(1)[0])

    act = np.where(mask, np.sin(rho), -np.cos(rho))
    free = w_ll.matvec(act)
    gamma = float(np.median(free))

    def f_at(phi: np.ndarray) -> float:
        value = task_f_measure(phi, mask, mcfg)
        return aggregate_objective(np.array([value]), mcfg.sigma_kind)

    def eval_rho(r: float) -> float:
        cand = np.where(mask, np.sin(r), -np.cos(r))
        return f_at(w_ll.matvec(cand) - gamma)

    converged = False
    iterations = 0
    for _ in range(lcfg.max_outer_iters):
        iterations += 1
        prev_gamma, prev_rho = gamma, rho
        for c in perm:
            if c == 0:
                grid = gamma_grid(float(free.min()), float(free.max()),
                                  lcfg.gamma_grid_size)
                gamma, _ = line_search(grid, gamma, lambda g: f_at(free - g))
            else:
                rho, _ = line_search(rho_grid(lcfg.rho_grid_size), rho, eval_rho)
                act = np.where(mask, np.sin(rho), -np.cos(rho))
                free = w_ll.matvec(act)
        if max(abs(gamma - prev_gamma), abs(rho - prev_rho)) < lcfg.delta_norm_tol:
            converged = True
            break
    achieved = f_at(free - gamma)
    return SingleTaskModel(gamma=gamma, rho=rho, achieved_f=achieved,
                           iterations=iterations, converged=converged)


@dataclass
class SingleTaskInference:
    scores: np.ndarray
    positive_mask: np.ndarray
    converged: bool
    sweeps_run: int


def infer_single(w_uu: SparseRows, w_ul: SparseRows, positives_labeled: np.ndarray,
                 model: SingleTaskModel, beta: float, p_plus: float,
                 config: DynamicsConfig) -> SingleTaskInference:
    """Clamped relaxation of the unlabeled nodes for one task.

    Scores are the neuron inputs at the fixed point; the count penalty is
    folded in as the usual uniform weight shift plus threshold constant.
    """
    h = w_uu.n_rows
    n_l = w_ul.n_cols
    hi, lo = float(np.sin(model.rho)), float(-np.cos(model.rho))
    lbar = np.full(n_l, lo)
    lbar[np.asarray(positives_labeled, dtype=np.int64)] = hi

    params = ModelParams(gamma=[model.gamma], rho=[model.rho], alpha=0.0, beta=beta)
    reg = regularization_coefficients(params, np.array([model.rho]),
                                      np.array([p_plus]), h)
    shift = float(reg.weight_shift[0])

    theta = model.gamma - w_ul.matvec(lbar)
    theta = theta + reg.threshold_shift[0]

    rng = np.random.default_rng(config.seed)
    if h == 0:
        return SingleTaskInference(scores=np.zeros(0), positive_mask=np.zeros(0, bool),
                                   converged=True, sweeps_run=0)
    x = np.full(h, lo)
    a = w_uu.matvec(x)
    t = x.sum()
    converged = False
    sweeps = 0
    for sweep in range(1, config.max_sweeps + 1):
        sweeps = sweep
        if sweep > 1 and (sweep - 1) % REBUILD_PERIOD == 0:
            a = w_uu.matvec(x)
            t = x.sum()
        flips = 0
        for i in rng.permutation(h):
            i = int(i)
            phi = a[i] - shift * (t - x[i]) - theta[i]
            new = hi if phi > 0.0 else lo
            if new != x[i]:
                delta = new - x[i]
                x[i] = new
                idx, wts = w_uu.row(i)
                a[idx] += wts * delta
                t += delta
                flips += 1
        if flips == 0:
            converged = True
            break
    a = w_uu.matvec(x)
    t = x.sum()
    scores = a - shift * (t - x) - theta
    return SingleTaskInference(scores=scores, positive_mask=(x == hi),
                               converged=converged, sweeps_run=sweeps)
