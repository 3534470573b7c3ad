"""Brute-force reference implementations used only by tests.

Everything here is deliberately naive and shares no arithmetic with the
production kernels: energies follow the pairwise-distance form of the
cross-task penalty, work on dense matrices, and accumulate term by term in
a different order than the row-sum kernel. Exhaustive enumeration covers
at most 2^20 states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .energy import ModelParams

ENUM_BOUND = 20
_CHUNK = 1 << 16


def cross_task_penalty(x: np.ndarray, s: np.ndarray, alpha: float) -> float:
    """(alpha/4) * sum_k sum_{r != k} s_kr ||x_k - x_r||^2.

    Exactly zero when all coupled task columns agree entrywise.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[1]
    total = 0.0
    for k in range(m):
        for r in range(m):
            if r == k:
                continue
            diff = x[:, k] - x[:, r]
            total += s[k, r] * float(np.dot(diff, diff))
    return 0.25 * alpha * total


def direct_energy(x: np.ndarray, w_dense: np.ndarray, gamma: np.ndarray,
                  alpha: float, s: np.ndarray) -> float:
    """Full-network energy: per-task quadratic plus the pairwise penalty."""
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape
    total = 0.0
    for k in range(m):
        pair = 0.0
        for i in range(n):
            pair += x[i, k] * float(np.dot(w_dense[i], x[:, k]))
        total += -0.5 * pair + gamma[k] * float(np.sum(x[:, k]))
    return total + cross_task_penalty(x, s, alpha)


def count_penalty_terms(beta: float, rho_hat: np.ndarray,
                        p_plus: np.ndarray, h: int):
    """(eta_k, a_k, b_k, target_k) of the positive-count penalty, per task."""
    rho_hat = np.asarray(rho_hat, dtype=np.float64)
    eta = beta * np.abs(np.tan((rho_hat - np.pi / 4.0) * 2.0))
    a = 1.0 / (np.sin(rho_hat) + np.cos(rho_hat))
    b = np.cos(rho_hat) * a
    target = h * np.asarray(p_plus, dtype=np.float64)
    return eta, a, b, target


def direct_clamped_energy(u: np.ndarray, w_uu: np.ndarray, w_ul: np.ndarray,
                          lbar: np.ndarray, gamma: np.ndarray, alpha: float,
                          s: np.ndarray, beta: float = 0.0,
                          rho_hat: np.ndarray | None = None,
                          p_plus: np.ndarray | None = None) -> float:
    """Unlabeled-restriction energy with the count penalty in its direct form.

    The penalty eta (sum_i (a u_i + b) - h p)^2 keeps its state-independent
    constant here, so comparisons against the expanded production form must
    subtract a constant estimated once per instance.
    """
    u = np.asarray(u, dtype=np.float64)
    h, m = u.shape
    total = 0.0
    for k in range(m):
        pair = 0.0
        for i in range(h):
            pair += u[i, k] * float(np.dot(w_uu[i], u[:, k]))
        total += -0.5 * pair
        for i in range(h):
            theta_bar = gamma[k] - float(np.dot(w_ul[i], lbar[:, k]))
            total += theta_bar * u[i, k]
    total += cross_task_penalty(u, s, alpha)
    if beta != 0.0:
        if rho_hat is None or p_plus is None:
            raise InputError("count penalty needs rho_hat and p_plus")
        eta, a, b, target = count_penalty_terms(beta, rho_hat, p_plus, h)
        for k in range(m):
            cnt = float(np.sum(a[k] * u[:, k] + b[k]))
            total += eta[k] * (cnt - target[k]) ** 2
    return total


@dataclass(frozen=True)
class ExhaustiveResult:
    """Outcome of exhaustive state enumeration.

    States are encoded as integers: bit (i * m + k) set means neuron (i, k)
    sits at sin rho_k. `energies` holds the full 2^(n*m) table.
    """

    n: int
    m: int
    energies: np.ndarray
    global_min_energy: float
    global_minimizers: np.ndarray
    local_minima: np.ndarray

    def decode(self, state_index: int, hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
        x = np.empty((self.n, self.m))
        for i in range(self.n):
            for k in range(self.m):
                bit = (state_index >> (i * self.m + k)) & 1
                x[i, k] = hi[k] if bit else lo[k]
        return x


def encode_state(x: np.ndarray, hi: np.ndarray) -> int:
    n, m = x.shape
    idx = 0
    for i in range(n):
        for k in range(m):
            if x[i, k] == hi[k]:
                idx |= 1 << (i * m + k)
    return idx


def _neuron_values(ids: np.ndarray, i: int, k: int, m: int,
                   hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    bit = (ids >> np.int64(i * m + k)) & 1
    return np.where(bit.astype(bool), hi[k], lo[k])


def _energy_table(n: int, m: int, hi: np.ndarray, lo: np.ndarray,
                  pair_weights: np.ndarray, theta_lin: np.ndarray,
                  alpha: float, s: np.ndarray,
                  count_terms=None) -> np.ndarray:
    """Energy of every state, vectorized across states, term-by-term in (i, j, k)."""
    n_states = 1 << (n * m)
    energies = np.empty(n_states)
    for start in range(0, n_states, _CHUNK):
        ids = np.arange(start, min(start + _CHUNK, n_states), dtype=np.int64)
        acc = np.zeros(ids.size)
        for k in range(m):
            cols = [_neuron_values(ids, i, k, m, hi, lo) for i in range(n)]
            for i in range(n):
                acc += theta_lin[i, k] * cols[i]
                for j in range(i + 1, n):
                    if pair_weights[i, j] != 0.0:
                        acc -= pair_weights[i, j] * cols[i] * cols[j]
            if count_terms is not None:
                eta, a, b, target = count_terms
                if eta[k] != 0.0:
                    cnt = np.zeros(ids.size)
                    for i in range(n):
                        cnt += a[k] * cols[i] + b[k]
                    acc += eta[k] * (cnt - target[k]) ** 2
        if alpha != 0.0:
            for k in range(m):
                for r in range(k + 1, m):
                    if s[k, r] == 0.0:
                        continue
                    for i in range(n):
                        d = (_neuron_values(ids, i, k, m, hi, lo)
                             - _neuron_values(ids, i, r, m, hi, lo))
                        acc += 0.5 * alpha * s[k, r] * d * d
        energies[start:start + ids.size] = acc
    return energies


def _minima(n: int, m: int, energies: np.ndarray, tol: float) -> ExhaustiveResult:
    e_min = float(energies.min())
    global_minimizers = np.flatnonzero(energies <= e_min + tol)
    stable = np.ones(energies.size, dtype=bool)
    ids = np.arange(energies.size, dtype=np.int64)
    for bit in range(n * m):
        neighbor = ids ^ (1 << bit)
        stable &= energies[neighbor] >= energies - tol
    return ExhaustiveResult(n=n, m=m, energies=energies,
                            global_min_energy=e_min,
                            global_minimizers=global_minimizers,
                            local_minima=np.flatnonzero(stable))


def enumerate_states(w_dense: np.ndarray, params: ModelParams, s: np.ndarray,
                     tol: float = 1e-9) -> ExhaustiveResult:
    """Evaluate the full-network energy on all 2^(n*m) states."""
    n = w_dense.shape[0]
    m = params.m
    if n * m > ENUM_BOUND:
        raise InputError(f"enumeration bound exceeded: n*m = {n * m} > {ENUM_BOUND}")
    hi, lo = params.activation_high(), params.activation_low()
    theta_lin = np.broadcast_to(params.gamma, (n, m))
    energies = _energy_table(n, m, hi, lo, w_dense, theta_lin, params.alpha, s)
    return _minima(n, m, energies, tol)


def enumerate_clamped_states(w_uu: np.ndarray, w_ul: np.ndarray, lbar: np.ndarray,
                             params: ModelParams, s: np.ndarray,
                             with_count_penalty: bool = False,
                             p_plus: np.ndarray | None = None,
                             tol: float = 1e-9) -> ExhaustiveResult:
    """Evaluate the clamped unlabeled-restriction energy on all states of U."""
    h = w_uu.shape[0]
    m = params.m
    if h * m > ENUM_BOUND:
        raise InputError(f"enumeration bound exceeded: h*m = {h * m} > {ENUM_BOUND}")
    hi, lo = params.activation_high(), params.activation_low()
    theta_lin = np.empty((h, m))
    for i in range(h):
        for k in range(m):
            theta_lin[i, k] = params.gamma[k] - float(np.dot(w_ul[i], lbar[:, k]))
    count_terms = None
    if with_count_penalty and params.beta != 0.0:
        count_terms = count_penalty_terms(params.beta, params.rho, p_plus, h)
    energies = _energy_table(h, m, hi, lo, w_uu, theta_lin, params.alpha, s,
                             count_terms)
    return _minima(h, m, energies, tol)


def is_single_flip_stable(x: np.ndarray, energy_fn, hi: np.ndarray,
                          lo: np.ndarray, tol: float = 1e-9) -> bool:
    """True when no single neuron flip decreases energy_fn by more than tol."""
    x = np.asarray(x, dtype=np.float64)
    base = energy_fn(x)
    n, m = x.shape
    for i in range(n):
        for k in range(m):
            flipped = x.copy()
            flipped[i, k] = lo[k] if x[i, k] == hi[k] else hi[k]
            if energy_fn(flipped) < base - tol:
                return False
    return True


def check_theorem3(w_dense: np.ndarray, params: ModelParams, s: np.ndarray,
                   labeled: np.ndarray, unlabeled: np.ndarray,
                   tol: float = 1e-9) -> bool:
    """Global-minimum composition property of the clamped restriction.

    For every global minimizer (L*, U*) of the full energy: U* must be a
    global minimizer of the restriction clamped at L*, and composing L*
    with any global minimizer of that restriction must reproduce the full
    global minimum.
    """
    labeled = np.asarray(labeled, dtype=np.int64)
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    n = w_dense.shape[0]
    m = params.m
    hi, lo = params.activation_high(), params.activation_low()
    full = enumerate_states(w_dense, params, s, tol)
    if unlabeled.size == 0:
        return True
    w_uu = w_dense[np.ix_(unlabeled, unlabeled)]
    w_ul = w_dense[np.ix_(unlabeled, labeled)]
    for g_idx in full.global_minimizers:
        x_star = full.decode(int(g_idx), hi, lo)
        lbar = x_star[labeled, :]
        u_star = x_star[unlabeled, :]
        sub = enumerate_clamped_states(w_uu, w_ul, lbar, params, s, tol=tol)
        u_star_energy = sub.energies[encode_state(u_star, hi)]
        if u_star_energy > sub.global_min_energy + tol:
            return False
        for u_idx in sub.global_minimizers:
            composed = x_star.copy()
            composed[unlabeled, :] = sub.decode(int(u_idx), hi, lo)
            if direct_energy(composed, w_dense, params.gamma, params.alpha,
                             s) > full.global_min_energy + tol:
                return False
    return True
