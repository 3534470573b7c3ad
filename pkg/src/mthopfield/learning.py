"""Learning per-task (gamma, rho) on the labeled subnetwork.

The objective is a soft F-measure built from membership values f(tau * phi)
of the labeled neuron inputs: true-positive mass for positives above the
threshold, false-positive/false-negative mass otherwise. Because the
denominator of F weighs positive-class errors more, maximizing it commits
the model to the minority class despite heavy imbalance.

Optimization is coordinate-wise: one seeded permutation of the 2m
coordinates, a grid line search per coordinate with every other coordinate
fixed, full passes repeated until the max-norm of successive parameter
vectors falls below tolerance. The current coordinate value always
competes against the grid, so the objective never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .energy import RHO_GUARD, RHO_HI, RHO_LO
from .errors import InputError
from .graph import SparseRows
from .tasks import TaskSimilarity

F_SIGMOID = "sigmoid"
F_ARCTANGENT = "arctangent"
F_HEAVISIDE = "heaviside"
SIGMA_HARMONIC = "harmonic_mean"
SIGMA_MEAN = "mean"
SIGMA_MIN = "minimum"
CROSSTASK_SOURCE = "source"  # cross-task states carry the source task's values
CROSSTASK_OWN = "own"        # alternative reading: the evaluated task's values


@dataclass(frozen=True)
class MembershipConfig:
    """Membership function f, sharpness tau and aggregator sigma."""

    f_kind: str = F_ARCTANGENT
    tau: float = 1000.0
    sigma_kind: str = SIGMA_HARMONIC

    def __post_init__(self):
        if self.f_kind not in (F_SIGMOID, F_ARCTANGENT, F_HEAVISIDE):
            raise InputError(f"unknown membership function {self.f_kind!r}")
        if self.sigma_kind not in (SIGMA_HARMONIC, SIGMA_MEAN, SIGMA_MIN):
            raise InputError(f"unknown aggregator {self.sigma_kind!r}")
        if self.tau <= 0.0:
            raise InputError("tau must be positive")


@dataclass(frozen=True)
class LearningConfig:
    seed: int = 0
    rho_grid_size: int = 16
    gamma_grid_size: int = 21
    max_outer_iters: int = 20
    delta_norm_tol: float = 1e-3
    crosstask_activation: str = CROSSTASK_SOURCE

    def __post_init__(self):
        if self.rho_grid_size < 2 or self.gamma_grid_size < 2:
            raise InputError("grid sizes must be at least 2")
        if self.max_outer_iters < 1:
            raise InputError("max_outer_iters must be at least 1")
        if self.delta_norm_tol <= 0.0:
            raise InputError("delta_norm_tol must be positive")
        if self.crosstask_activation not in (CROSSTASK_SOURCE, CROSSTASK_OWN):
            raise InputError(
                f"unknown crosstask activation {self.crosstask_activation!r}")


def membership_value(x: np.ndarray | float, kind: str):
    """Monotone membership f: R -> [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if kind == F_SIGMOID:
        # stable logistic, no overflow warnings on large |x|
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    if kind == F_ARCTANGENT:
        return 0.5 * ((2.0 / np.pi) * np.arctan(x) + 1.0)
    return (x > 0.0).astype(np.float64)  # heaviside: ties are negatives


def memberships(phi: float, side: str, cfg: MembershipConfig):
    """TP/FN masses for a positive node, FP mass for a negative one."""
    t = float(membership_value(cfg.tau * phi, cfg.f_kind))
    if side == "positive":
        return t, 1.0 - t
    if side == "negative":
        return t, None
    raise InputError(f"side must be 'positive' or 'negative', got {side!r}")


def task_f_measure(phi_col: np.ndarray, pos_mask: np.ndarray,
                   cfg: MembershipConfig) -> float:
    """F_k = 2*TP / (2*TP + FP + FN) with soft memberships of tau*phi."""
    t = membership_value(cfg.tau * phi_col, cfg.f_kind)
    tp = float(np.sum(t[pos_mask]))
    fn = float(np.sum(1.0 - t[pos_mask]))
    fp = float(np.sum(t[~pos_mask]))
    denom = 2.0 * tp + fp + fn
    if denom == 0.0:
        return 0.0
    return 2.0 * tp / denom


def aggregate_objective(values: np.ndarray, sigma_kind: str) -> float:
    """sigma over per-task F values; harmonic mean extends continuously to 0."""
    values = np.asarray(values, dtype=np.float64)
    if sigma_kind == SIGMA_MEAN:
        return float(np.mean(values))
    if sigma_kind == SIGMA_MIN:
        return float(np.min(values))
    if np.any(values == 0.0):
        return 0.0
    with np.errstate(over="ignore"):
        total = np.sum(1.0 / values)
    if np.isinf(total):
        return 0.0
    return float(values.size / total)


def rho_grid(size: int) -> np.ndarray:
    return np.linspace(RHO_LO, RHO_HI - RHO_GUARD, size)


def gamma_grid(lo: float, hi: float, size: int) -> np.ndarray:
    """Equispaced thresholds spanning the free-input range, padded one cell
    below the minimum: with the <=0 tie rule, classifying every node
    positive needs gamma strictly below the smallest input."""
    width = hi - lo
    pad = width / (size - 1) if width > 0.0 else 1.0
    return np.linspace(lo - pad, hi, size)


def line_search(candidates: np.ndarray, current: float,
                evaluate: Callable[[float], float]) -> tuple[float, float]:
    """Maximize over `candidates` plus the current value.

    Ties prefer the value closest to the current one (so the search is
    stable), then the earliest candidate; the current value can therefore
    never be displaced by an equally good grid point.
    """
    best_v, best_f, best_d = current, evaluate(current), 0.0
    for v in candidates:
        f = evaluate(v)
        d = abs(v - current)
        if f > best_f or (f == best_f and d < best_d):
            best_v, best_f, best_d = v, f, d
    return best_v, best_f


class _LabeledSystem:
    """Incrementally maintained labeled neuron inputs and per-task F values.

    Caches: ACT (the induced labeled state), A = W_LL ACT, the cross-task
    matrix B, free = A + alpha * B and the update thresholds. A coordinate
    change touches one ACT column, so B moves by a rank-one update and only
    the affected F columns are recomputed. Accepted candidates re-apply the
    exact expressions used during evaluation, keeping recorded objective
    values bit-identical to the state they describe.
    """

    def __init__(self, w_ll: SparseRows, chi: np.ndarray, sim: TaskSimilarity,
                 alpha: float, mcfg: MembershipConfig, crosstask: str):
        self.w = w_ll
        self.chi = chi
        self.s = sim.s
        self.row_sums = sim.row_sums
        self.alpha = alpha
        self.mcfg = mcfg
        self.crosstask = crosstask
        self.m = chi.shape[1]
        if crosstask == CROSSTASK_OWN:
            chi_f = chi.astype(np.float64)
            self.p_mat = chi_f @ self.s
            self.n_mat = (1.0 - chi_f) @ self.s

    def initialize(self, gamma: np.ndarray | None, rho: np.ndarray):
        self.rho = rho.copy()
        self.hi = np.sin(rho)
        self.lo = -np.cos(rho)
        self.act = np.where(self.chi, self.hi[None, :], self.lo[None, :])
        self.a = np.empty_like(self.act)
        for k in range(self.m):
            self.a[:, k] = self.w.matvec(self.act[:, k])
        self.b = self._full_b()
        self.free = self.a + self.alpha * self.b
        if gamma is None:
            gamma = np.median(self.free, axis=0)
        self.gamma = np.asarray(gamma, dtype=np.float64).copy()
        self.theta = self._theta(self.gamma, self.hi, self.lo)
        self.f_values = np.array([
            task_f_measure(self.free[:, k] - self.theta[k], self.chi[:, k], self.mcfg)
            for k in range(self.m)])

    def _full_b(self) -> np.ndarray:
        if self.crosstask == CROSSTASK_OWN:
            return self.p_mat * self.hi[None, :] + self.n_mat * self.lo[None, :]
        return self.act @ self.s

    def _theta(self, gamma, hi, lo) -> np.ndarray:
        return gamma + (self.alpha * self.row_sums / 2.0) * (hi + lo)

    def objective(self) -> float:
        return aggregate_objective(self.f_values, self.mcfg.sigma_kind)

    # -- gamma coordinate ------------------------------------------------

    def eval_gamma(self, k: int, g: float):
        theta_k = g + (self.alpha * self.row_sums[k] / 2.0) * (self.hi[k] + self.lo[k])
        f_k = task_f_measure(self.free[:, k] - theta_k, self.chi[:, k], self.mcfg)
        values = self.f_values.copy()
        values[k] = f_k
        return aggregate_objective(values, self.mcfg.sigma_kind), (theta_k, f_k)

    def accept_gamma(self, k: int, g: float, payload):
        theta_k, f_k = payload
        self.gamma[k] = g
        self.theta[k] = theta_k
        self.f_values[k] = f_k

    # -- rho coordinate --------------------------------------------------

    def eval_rho(self, k: int, r: float):
        hi_k, lo_k = np.sin(r), -np.cos(r)
        act_k = np.where(self.chi[:, k], hi_k, lo_k)
        a_k = self.w.matvec(act_k)
        theta_k = self.gamma[k] + (self.alpha * self.row_sums[k] / 2.0) * (hi_k + lo_k)
        values = self.f_values.copy()
        if self.crosstask == CROSSTASK_OWN:
            b_k = self.p_mat[:, k] * hi_k + self.n_mat[:, k] * lo_k
            free_k = a_k + self.alpha * b_k
            values[k] = task_f_measure(free_k - theta_k, self.chi[:, k], self.mcfg)
            payload = (hi_k, lo_k, act_k, a_k, b_k, theta_k, values[k], None)
            return aggregate_objective(values, self.mcfg.sigma_kind), payload
        dact = act_k - self.act[:, k]
        free_k = a_k + self.alpha * self.b[:, k]  # s_kk = 0: own column of B fixed
        values[k] = task_f_measure(free_k - theta_k, self.chi[:, k], self.mcfg)
        for t in range(self.m):
            if t == k or self.s[k, t] == 0.0:
                continue
            free_t = self.free[:, t] + self.alpha * (dact * self.s[k, t])
            values[t] = task_f_measure(free_t - self.theta[t], self.chi[:, t], self.mcfg)
        payload = (hi_k, lo_k, act_k, a_k, None, theta_k, values, dact)
        return aggregate_objective(values, self.mcfg.sigma_kind), payload

    def accept_rho(self, k: int, r: float, payload):
        hi_k, lo_k, act_k, a_k, b_k, theta_k, f_new, dact = payload
        self.rho[k] = r
        self.hi[k], self.lo[k] = hi_k, lo_k
        self.act[:, k] = act_k
        self.a[:, k] = a_k
        self.theta[k] = theta_k
        if self.crosstask == CROSSTASK_OWN:
            self.b[:, k] = b_k
            self.free[:, k] = a_k + self.alpha * b_k
            self.f_values[k] = f_new
            return
        for t in range(self.m):
            if t == k or self.s[k, t] == 0.0:
                continue
            self.b[:, t] = self.b[:, t] + dact * self.s[k, t]
            self.free[:, t] = self.free[:, t] + self.alpha * (dact * self.s[k, t])
        self.free[:, k] = a_k + self.alpha * self.b[:, k]
        self.f_values = f_new


@dataclass
class LearnResult:
    gamma: np.ndarray
    rho: np.ndarray
    achieved_f: float
    iterations: int
    converged: bool
    f_history: list[float]


def _check_positives(positives_local: Sequence[np.ndarray], n_labeled: int) -> np.ndarray:
    chi = np.zeros((n_labeled, len(positives_local)), dtype=bool)
    for k, pos in enumerate(positives_local):
        pos = np.asarray(pos, dtype=np.int64)
        if pos.size == 0:
            raise InputError(f"task {k} has no positives on the labeled set")
        chi[pos, k] = True
    return chi


def learn(w_ll: SparseRows, positives_local: Sequence[np.ndarray],
          sim: TaskSimilarity, alpha: float, mcfg: MembershipConfig,
          lcfg: LearningConfig) -> LearnResult:
    """Coordinate grid search for the per-task thresholds and angles.

    Step 1 draws a seeded permutation of the 2m coordinates and the random
    initialization (gamma at the median free input, rho uniform on the
    angle range); steps 2-3 sweep every coordinate with a grid line search;
    step 4 repeats until the max-norm between successive parameter vectors
    drops below tolerance or the iteration cap is hit (reported via
    `converged`). The f_history of accepted values is non-decreasing.
    """
    chi = _check_positives(positives_local, w_ll.n_rows)
    m = chi.shape[1]
    rng = np.random.default_rng(lcfg.seed)
    perm = rng.permutation(2 * m)
    rho0 = RHO_LO + (np.pi / 4.0) * rng.random(m)

    state = _LabeledSystem(w_ll, chi, sim, alpha, mcfg, lcfg.crosstask_activation)
    state.initialize(None, rho0)
    rho_candidates = rho_grid(lcfg.rho_grid_size)

    f_history: list[float] = []
    converged = False
    iterations = 0
    for _ in range(lcfg.max_outer_iters):
        iterations += 1
        prev = np.concatenate((state.gamma, state.rho))
        for c in perm:
            c = int(c)
            if c < m:
                k = c
                col = state.free[:, k]
                grid = gamma_grid(float(col.min()), float(col.max()),
                                  lcfg.gamma_grid_size)
                payloads: dict[float, object] = {}

                def eval_g(v, k=k, payloads=payloads):
                    f, payload = state.eval_gamma(k, v)
                    payloads[v] = payload
                    return f

                best_v, best_f = line_search(grid, float(state.gamma[k]), eval_g)
                state.accept_gamma(k, best_v, payloads[best_v])
            else:
                k = c - m
                payloads = {}

                def eval_r(v, k=k, payloads=payloads):
                    f, payload = state.eval_rho(k, v)
                    payloads[v] = payload
                    return f

                best_v, best_f = line_search(rho_candidates, float(state.rho[k]),
                                             eval_r)
                state.accept_rho(k, best_v, payloads[best_v])
            f_history.append(best_f)
        delta = np.concatenate((state.gamma, state.rho))
        if float(np.max(np.abs(delta - prev))) < lcfg.delta_norm_tol:
            converged = True
            break
    achieved = objective(state.gamma, state.rho, w_ll, positives_local, sim,
                         alpha, mcfg, lcfg.crosstask_activation)
    return LearnResult(gamma=state.gamma.copy(), rho=state.rho.copy(),
                       achieved_f=achieved, iterations=iterations,
                       converged=converged, f_history=f_history)


def labeled_inputs(gamma: np.ndarray, rho: np.ndarray, w_ll: SparseRows,
                   positives_local: Sequence[np.ndarray], sim: TaskSimilarity,
                   alpha: float,
                   crosstask: str = CROSSTASK_SOURCE) -> np.ndarray:
    """Fresh (|L|, m) matrix of labeled neuron inputs at (gamma, rho)."""
    chi = _check_positives(positives_local, w_ll.n_rows)
    hi, lo = np.sin(rho), -np.cos(rho)
    act = np.where(chi, hi[None, :], lo[None, :])
    a = np.empty_like(act)
    for k in range(chi.shape[1]):
        a[:, k] = w_ll.matvec(act[:, k])
    if crosstask == CROSSTASK_OWN:
        chi_f = chi.astype(np.float64)
        b = (chi_f @ sim.s) * hi[None, :] + ((1.0 - chi_f) @ sim.s) * lo[None, :]
    else:
        b = act @ sim.s
    theta = gamma + (alpha * sim.row_sums / 2.0) * (hi + lo)
    return a + alpha * b - theta[None, :]


def labeled_input(i: int, k: int, gamma: np.ndarray, rho: np.ndarray,
                  w_ll: SparseRows, positives_local: Sequence[np.ndarray],
                  sim: TaskSimilarity, alpha: float,
                  crosstask: str = CROSSTASK_SOURCE) -> float:
    """phi of one labeled neuron under the induced labeled state."""
    return float(labeled_inputs(gamma, rho, w_ll, positives_local, sim, alpha,
                                crosstask)[i, k])


def task_objective(k: int, gamma: np.ndarray, rho: np.ndarray, w_ll: SparseRows,
                   positives_local: Sequence[np.ndarray], sim: TaskSimilarity,
                   alpha: float, mcfg: MembershipConfig,
                   crosstask: str = CROSSTASK_SOURCE) -> float:
    """F_k at (gamma, rho); undefined (rejected) without positives."""
    chi = _check_positives(positives_local, w_ll.n_rows)
    phi = labeled_inputs(gamma, rho, w_ll, positives_local, sim, alpha, crosstask)
    return task_f_measure(phi[:, k], chi[:, k], mcfg)


def objective(gamma: np.ndarray, rho: np.ndarray, w_ll: SparseRows,
              positives_local: Sequence[np.ndarray], sim: TaskSimilarity,
              alpha: float, mcfg: MembershipConfig,
              crosstask: str = CROSSTASK_SOURCE) -> float:
    """sigma(F_1, ..., F_m) at (gamma, rho)."""
    chi = _check_positives(positives_local, w_ll.n_rows)
    phi = labeled_inputs(gamma, rho, w_ll, positives_local, sim, alpha, crosstask)
    values = np.array([task_f_measure(phi[:, k], chi[:, k], mcfg)
                       for k in range(chi.shape[1])])
    return aggregate_objective(values, mcfg.sigma_kind)


def induced_state_survives_sweep(gamma: np.ndarray, rho: np.ndarray,
                                 w_ll: SparseRows,
                                 positives_local: Sequence[np.ndarray],
                                 sim: TaskSimilarity, alpha: float,
                                 seed: int = 0) -> bool:
    """True when the known labeled state is an equilibrium of the labeled
    restriction: one full asynchronous sweep flips nothing."""
    from .dynamics import DynamicsConfig, run_dynamics
    from .energy import ModelParams, labeled_state

    params = ModelParams(gamma=gamma, rho=rho, alpha=alpha)
    lbar = labeled_state(positives_local, w_ll.n_rows, params)
    trace = run_dynamics(lbar, w_ll, sim, params,
                         DynamicsConfig(seed=seed, max_sweeps=1))
    return trace.converged
