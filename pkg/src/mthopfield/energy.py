"""Model parameters, bipolar network states and the energy kernels.

Activation values for task k are the pair (sin rho_k, -cos rho_k) with
rho_k in [pi/4, pi/2): pushing rho_k toward pi/2 shrinks the magnitude of
negative activations so a small positive class is not drowned out by the
negative majority during the dynamics.

All energies here are computed in the row-sum form

    E(X) = sum_k [ -1/2 x_k' W x_k + theta_k . x_k
                   + (alpha/2) (S_k sum_i x_ik^2 - sum_{r!=k} s_kr x_k . x_r) ]

which costs O(nnz * m + n * m^2). The equivalent pairwise-distance form of
the cross-task penalty lives only in the brute-force oracle module, so the
two can check each other. State-independent constants dropped from the
regularized energy are never added back; monotonicity claims always compare
energy differences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .graph import SparseRows
from .tasks import TaskSimilarity

RHO_LO = np.pi / 4.0
RHO_HI = np.pi / 2.0
RHO_GUARD = 1e-6  # keeps tan(2(rho - pi/4)) finite near the open end


@dataclass
class ModelParams:
    """Per-task (gamma, rho) plus the shared hyper-parameters.

    gamma: per-task neuron activation threshold.
    rho:   per-task activation angle in [pi/4, pi/2).
    alpha: cross-task coupling strength (>= 0).
    beta:  positive-count regularization strength (>= 0).
    tau:   membership sharpness used during learning (> 0).
    """

    gamma: np.ndarray
    rho: np.ndarray
    alpha: float
    beta: float = 0.0
    tau: float = 1000.0

    def __post_init__(self):
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        self.rho = np.atleast_1d(np.asarray(self.rho, dtype=np.float64))
        if self.gamma.shape != self.rho.shape or self.gamma.ndim != 1:
            raise InputError("gamma and rho must be 1-d arrays of equal length")
        if np.any(self.rho < RHO_LO) or np.any(self.rho >= RHO_HI):
            raise InputError("every rho must lie in [pi/4, pi/2)")
        if self.alpha < 0.0:
            raise InputError("alpha must be non-negative")
        if self.beta < 0.0:
            raise InputError("beta must be non-negative")
        if self.tau <= 0.0:
            raise InputError("tau must be positive")

    @property
    def m(self) -> int:
        return self.gamma.size

    def activation_high(self) -> np.ndarray:
        return np.sin(self.rho)

    def activation_low(self) -> np.ndarray:
        return -np.cos(self.rho)


@dataclass
class NetworkState:
    """n x m matrix of activations, entry (i, k) in {sin rho_k, -cos rho_k}."""

    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise InputError("state must be an (n, m) matrix")

    @classmethod
    def from_positive_mask(cls, mask: np.ndarray, params: ModelParams) -> "NetworkState":
        mask = np.asarray(mask, dtype=bool)
        hi = params.activation_high()
        lo = params.activation_low()
        return cls(np.where(mask, hi[None, :], lo[None, :]))

    @classmethod
    def all_negative(cls, n: int, params: ModelParams) -> "NetworkState":
        return cls.from_positive_mask(np.zeros((n, params.m), dtype=bool), params)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def positive_mask(self, params: ModelParams) -> np.ndarray:
        return self.x == params.activation_high()[None, :]

    def validate(self, params: ModelParams) -> None:
        hi = params.activation_high()[None, :]
        lo = params.activation_low()[None, :]
        ok = (self.x == hi) | (self.x == lo)
        if not np.all(ok):
            bad = np.argwhere(~ok)[0]
            raise InputError(
                f"state entry {tuple(bad)} is not one of the task activation values")


@dataclass(frozen=True)
class RegularizedCoefficients:
    """Precomputed constants of the positive-count penalty, one set per task.

    The penalty eta_k * (sum_i (a_k u_ik + b_k) - h p_k)^2 steers the count
    of positive unlabeled neurons toward h * p_k. Expanded, it amounts to a
    uniform shift of the unlabeled-block connection weights plus a constant
    added to every threshold, so applying it needs only these numbers.
    """

    eta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    weight_shift: np.ndarray     # 2 * eta * a^2, subtracted from w_ij (i != j in U)
    threshold_shift: np.ndarray  # eta * a * (2 b (h-1) + (1 - 2 p h))

    @classmethod
    def none(cls, m: int) -> "RegularizedCoefficients":
        z = np.zeros(m)
        return cls(eta=z, a=z.copy(), b=z.copy(),
                   weight_shift=z.copy(), threshold_shift=z.copy())

    @property
    def active(self) -> bool:
        return bool(np.any(self.eta != 0.0))


def regularization_coefficients(params: ModelParams, rho_hat: np.ndarray,
                                p_plus: np.ndarray, h: int) -> RegularizedCoefficients:
    """Build the count-penalty coefficients from learned angles.

    eta_k = beta * |tan((rho_hat_k - pi/4) * 2)|. Angles within 1e-6 of the
    open end pi/2 are clamped (the schedule is unbounded there) and a
    warning is recorded.
    """
    rho_hat = np.atleast_1d(np.asarray(rho_hat, dtype=np.float64))
    p_plus = np.atleast_1d(np.asarray(p_plus, dtype=np.float64))
    if rho_hat.shape != p_plus.shape:
        raise InputError("rho_hat and p_plus must have matching shapes")
    if np.any(rho_hat < RHO_LO) or np.any(rho_hat >= RHO_HI):
        raise InputError("every rho_hat must lie in [pi/4, pi/2)")
    limit = RHO_HI - RHO_GUARD
    if np.any(rho_hat > limit):
        warnings.warn(
            "rho_hat within 1e-6 of pi/2 clamped to keep the count penalty finite",
            RuntimeWarning, stacklevel=2)
        rho_hat = np.minimum(rho_hat, limit)
    eta = params.beta * np.abs(np.tan((rho_hat - RHO_LO) * 2.0))
    sin_r, cos_r = np.sin(rho_hat), np.cos(rho_hat)
    a = 1.0 / (sin_r + cos_r)
    b = cos_r * a
    weight_shift = 2.0 * eta * a * a
    threshold_shift = eta * a * (2.0 * b * (h - 1) + (1.0 - 2.0 * p_plus * h))
    return RegularizedCoefficients(eta=eta, a=a, b=b, weight_shift=weight_shift,
                                   threshold_shift=threshold_shift)


def positive_count(u_col: np.ndarray, a_k: float, b_k: float) -> float:
    """sum_i (a u_i + b): the number of entries at sin rho (exact integer)."""
    return float(np.sum(a_k * np.asarray(u_col) + b_k))


def neuron_input(state: NetworkState, w: SparseRows, sim: TaskSimilarity,
                 params: ModelParams, i: int, k: int) -> float:
    """phi_ik = A_ik - theta_ik + alpha * B_ik for the full network.

    A_ik sums the weighted neighbor activations of task k, B_ik couples the
    other task columns of node i, and theta_ik folds gamma_k together with
    the (alpha S_k / 2)(sin rho_k - cos rho_k) correction that makes the
    update rule descend the energy.
    """
    idx, wts = w.row(i)
    a_term = float(np.dot(wts, state.x[idx, k]))
    b_term = float(np.dot(sim.s[k], state.x[i, :]))
    hi = params.activation_high()
    lo = params.activation_low()
    theta = params.gamma[k] + (params.alpha * sim.row_sums[k] / 2.0) * (hi[k] + lo[k])
    return a_term - theta + params.alpha * b_term


def neuron_inputs(state: NetworkState, w: SparseRows, sim: TaskSimilarity,
                  params: ModelParams) -> np.ndarray:
    """phi as an (n, m) matrix; column sums via per-column sparse matvec."""
    x = state.x
    m = params.m
    a_mat = np.empty_like(x)
    for k in range(m):
        a_mat[:, k] = w.matvec(x[:, k])
    b_mat = x @ sim.s  # s symmetric with zero diagonal
    hi = params.activation_high()
    lo = params.activation_low()
    theta = params.gamma + (params.alpha * sim.row_sums / 2.0) * (hi + lo)
    return a_mat - theta[None, :] + params.alpha * b_mat


def system_energy(x: np.ndarray, w: SparseRows, s: np.ndarray, alpha: float,
                  theta_lin: np.ndarray,
                  weight_shift: np.ndarray | None = None) -> float:
    """Energy of a general quadratic system in the row-sum form.

    theta_lin is the linear coefficient per neuron: an (m,) vector for a
    uniform per-task threshold or an (n, m) matrix when clamped labels or
    the count penalty are folded in. weight_shift subtracts a per-task
    constant from every off-diagonal connection of w.
    """
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape
    theta_lin = np.asarray(theta_lin, dtype=np.float64)
    if theta_lin.ndim == 1:
        theta_lin = np.broadcast_to(theta_lin, (n, m))
    total = 0.0
    gram = x.T @ x if m > 0 else np.zeros((0, 0))
    row_sums = s.sum(axis=1)
    for k in range(m):
        xk = x[:, k]
        total += -0.5 * float(np.dot(xk, w.matvec(xk)))
        total += float(np.dot(theta_lin[:, k], xk))
        if weight_shift is not None and weight_shift[k] != 0.0:
            t = float(np.sum(xk))
            total += 0.5 * weight_shift[k] * (t * t - float(gram[k, k]))
        if alpha != 0.0:
            cross = float(np.dot(s[k], gram[k]))
            total += 0.5 * alpha * (row_sums[k] * float(gram[k, k]) - cross)
    return total


def multitask_energy(state: NetworkState, w: SparseRows, sim: TaskSimilarity,
                     params: ModelParams) -> float:
    """Energy of the full network (all nodes, all tasks)."""
    return system_energy(state.x, w, sim.s, params.alpha, params.gamma)


def labeled_energy(state: NetworkState, w_ll: SparseRows, sim: TaskSimilarity,
                   params: ModelParams) -> float:
    """Energy restricted to the labeled nodes (same form on W_LL)."""
    return system_energy(state.x, w_ll, sim.s, params.alpha, params.gamma)


def clamped_thresholds(w_ul: SparseRows, clamped: np.ndarray, params: ModelParams,
                       reg: RegularizedCoefficients | None = None) -> np.ndarray:
    """Per-neuron linear thresholds of the unlabeled restriction.

    theta_bar_{.k} = gamma_k - W_UL lbar_k, plus the count-penalty shift
    when regularization is active. The clamped labeled state enters only
    here; its own energy contribution is a dropped constant.
    """
    clamped = np.asarray(clamped, dtype=np.float64)
    h, m = w_ul.n_rows, params.m
    theta = np.empty((h, m))
    for k in range(m):
        theta[:, k] = params.gamma[k] - w_ul.matvec(clamped[:, k])
    if reg is not None:
        theta = theta + reg.threshold_shift[None, :]
    return theta


def unlabeled_energy(state: NetworkState, w_uu: SparseRows, w_ul: SparseRows,
                     clamped: np.ndarray, sim: TaskSimilarity, params: ModelParams,
                     reg: RegularizedCoefficients | None = None) -> float:
    """Energy of the unlabeled restriction with labeled neurons clamped.

    With regularization the per-task weights become w_ij - weight_shift_k
    (i != j in U) and thresholds gain threshold_shift_k; with all-zero
    coefficients this is exactly the unregularized restricted energy.
    """
    theta = clamped_thresholds(w_ul, clamped, params, reg)
    shift = reg.weight_shift if reg is not None else None
    return system_energy(state.x, w_uu, sim.s, params.alpha, theta, shift)


def labeled_state(positives_local: Sequence[np.ndarray], n_labeled: int,
                  params: ModelParams) -> NetworkState:
    """The known labeled state: sin rho_k on L_{k,+}, -cos rho_k elsewhere."""
    mask = np.zeros((n_labeled, params.m), dtype=bool)
    for k, pos in enumerate(positives_local):
        mask[np.asarray(pos, dtype=np.int64), k] = True
    return NetworkState.from_positive_mask(mask, params)
