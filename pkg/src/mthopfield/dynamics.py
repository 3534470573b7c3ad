"""Asynchronous dynamics to a fixed point, for the full network and the
clamped unlabeled restriction.

Each sweep visits every (node, task) neuron exactly once in a fresh seeded
permutation and applies the sign rule: sin rho_k when the neuron input is
strictly positive, -cos rho_k otherwise (ties land on the negative side,
no epsilon band). A sweep with zero flips is the fixed-point certificate.

Neuron inputs are maintained incrementally: one flip touches the cached
neighbor sums of the flipped node's graph neighbors and the cross-task row
of the flipped node, O(degree + m) per update. Caches are rebuilt from
scratch every 10 sweeps to stop float drift from accumulating, and once
more at termination so the reported inputs are exact functions of the
final state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import (ModelParams, NetworkState, RegularizedCoefficients,
                     clamped_thresholds, system_energy)
from .errors import InputError
from .graph import SparseRows
from .tasks import TaskSimilarity

REBUILD_PERIOD = 10

INIT_ALL_NEGATIVE = "all-negative"
INIT_LABEL_PRIOR = "label-prior-random"


@dataclass(frozen=True)
class DynamicsConfig:
    """Seeded update schedule: seed, sweep cap and initialization policy."""

    seed: int
    max_sweeps: int = 100
    init_policy: str = INIT_ALL_NEGATIVE

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise InputError("max_sweeps must be at least 1")
        if self.init_policy not in (INIT_ALL_NEGATIVE, INIT_LABEL_PRIOR):
            raise InputError(f"unknown init policy {self.init_policy!r}")


@dataclass
class DynamicsTrace:
    """Run record: energy_per_sweep[0] is the initial energy, one entry per
    sweep follows; the sequence never increases. final_inputs holds the
    neuron inputs evaluated at the final state."""

    sweeps_run: int
    converged: bool
    energy_per_sweep: list[float]
    flips_per_sweep: list[int]
    final_state: NetworkState
    final_inputs: np.ndarray
    update_records: list[tuple[int, int, float, float]] | None = None
    update_energies: list[float] | None = None


class _System:
    """Assembled quadratic system the sweeps run on.

    theta_lin is the energy's linear coefficient; the update threshold adds
    the (alpha S_k / 2)(hi_k + lo_k) correction per task. weight_shift
    subtracts a per-task constant from every off-diagonal pair inside the
    running index set (the expanded count penalty).
    """

    def __init__(self, w: SparseRows, sim: TaskSimilarity, params: ModelParams,
                 theta_lin: np.ndarray, weight_shift: np.ndarray):
        self.w = w
        self.s = sim.s
        self.alpha = params.alpha
        self.hi = params.activation_high()
        self.lo = params.activation_low()
        n, m = w.n_rows, params.m
        if theta_lin.ndim == 1:
            theta_lin = np.broadcast_to(theta_lin, (n, m)).copy()
        self.theta_lin = theta_lin
        self.shift = weight_shift
        row_sums = sim.row_sums
        self.theta_upd = theta_lin + (params.alpha * row_sums / 2.0
                                      * (self.hi + self.lo))[None, :]

    def rebuild(self, x: np.ndarray):
        n, m = x.shape
        a = np.empty_like(x)
        for k in range(m):
            a[:, k] = self.w.matvec(x[:, k])
        b = x @ self.s
        t = x.sum(axis=0)
        return a, b, t

    def inputs(self, x: np.ndarray, a: np.ndarray, b: np.ndarray,
               t: np.ndarray) -> np.ndarray:
        return (a - self.shift[None, :] * (t[None, :] - x)
                - self.theta_upd + self.alpha * b)

    def energy(self, x: np.ndarray) -> float:
        return system_energy(x, self.w, self.s, self.alpha, self.theta_lin,
                             self.shift)


def run_dynamics(initial: NetworkState, w: SparseRows, sim: TaskSimilarity,
                 params: ModelParams, config: DynamicsConfig, *,
                 reg: RegularizedCoefficients | None = None,
                 w_cross: SparseRows | None = None,
                 clamped: np.ndarray | None = None,
                 rng: np.random.Generator | None = None,
                 record_updates: bool = False) -> DynamicsTrace:
    """Run the asynchronous dynamics from `initial` until a full sweep flips
    nothing or `max_sweeps` is reached (reported, never silently truncated).

    Pass `w_cross` (rows = running set, cols = clamped set) together with
    `clamped` to fold a fixed labeled state into the thresholds; pass `reg`
    to apply the positive-count penalty. `record_updates` additionally logs
    (i, k, phi, energy-after) per visited neuron for instrumented tests.
    """
    n, m = w.n_rows, params.m
    if initial.x.shape != (n, m):
        raise InputError(f"initial state shape {initial.x.shape} != {(n, m)}")
    if (w_cross is None) != (clamped is None):
        raise InputError("w_cross and clamped must be given together")
    if w_cross is not None:
        theta_lin = clamped_thresholds(w_cross, clamped, params, reg)
    else:
        theta_lin = np.broadcast_to(params.gamma, (n, m)).copy()
        if reg is not None:
            theta_lin = theta_lin + reg.threshold_shift[None, :]
    shift = reg.weight_shift if reg is not None else np.zeros(m)
    sys_ = _System(w, sim, params, theta_lin, shift)

    if rng is None:
        rng = np.random.default_rng(config.seed)
    x = initial.x.copy()
    hi, lo, s = sys_.hi, sys_.lo, sys_.s
    a_cache, b_cache, t_cache = sys_.rebuild(x)

    energies = [sys_.energy(x)]
    flips_hist: list[int] = []
    records: list[tuple[int, int, float, float]] | None = [] if record_updates else None
    upd_energies: list[float] | None = [] if record_updates else None
    converged = False
    sweeps = 0

    for sweep in range(1, config.max_sweeps + 1):
        sweeps = sweep
        if sweep > 1 and (sweep - 1) % REBUILD_PERIOD == 0:
            a_cache, b_cache, t_cache = sys_.rebuild(x)
        flips = 0
        for flat in rng.permutation(n * m):
            i, k = divmod(int(flat), m)
            phi = (a_cache[i, k] - sys_.shift[k] * (t_cache[k] - x[i, k])
                   - sys_.theta_upd[i, k] + sys_.alpha * b_cache[i, k])
            new = hi[k] if phi > 0.0 else lo[k]
            if new != x[i, k]:
                delta = new - x[i, k]
                x[i, k] = new
                idx, wts = w.row(i)
                a_cache[idx, k] += wts * delta
                b_cache[i, :] += s[k, :] * delta
                t_cache[k] += delta
                flips += 1
            if record_updates:
                records.append((i, k, float(phi), float(x[i, k])))
                upd_energies.append(sys_.energy(x))
        energies.append(sys_.energy(x))
        flips_hist.append(flips)
        if flips == 0:
            converged = True
            break

    a_cache, b_cache, t_cache = sys_.rebuild(x)
    final_inputs = sys_.inputs(x, a_cache, b_cache, t_cache)
    return DynamicsTrace(sweeps_run=sweeps, converged=converged,
                         energy_per_sweep=energies, flips_per_sweep=flips_hist,
                         final_state=NetworkState(x), final_inputs=final_inputs,
                         update_records=records, update_energies=upd_energies)


def run_inference(w_uu: SparseRows, w_ul: SparseRows, clamped: np.ndarray,
                  sim: TaskSimilarity, params: ModelParams,
                  reg: RegularizedCoefficients | None,
                  config: DynamicsConfig,
                  p_plus: np.ndarray | None = None,
                  record_updates: bool = False) -> DynamicsTrace:
    """Relax the unlabeled restriction with the labeled state clamped.

    Initialization follows config.init_policy: all-negative (deterministic,
    the conservative choice under heavy negative imbalance) or label-prior
    random, which needs the per-task training positive rates `p_plus`.
    """
    h, m = w_uu.n_rows, params.m
    rng = np.random.default_rng(config.seed)
    if h == 0:
        empty = NetworkState(np.zeros((0, m)))
        return DynamicsTrace(sweeps_run=0, converged=True, energy_per_sweep=[0.0],
                             flips_per_sweep=[], final_state=empty,
                             final_inputs=np.zeros((0, m)))
    if config.init_policy == INIT_LABEL_PRIOR:
        if p_plus is None:
            raise InputError("label-prior-random initialization needs p_plus")
        mask = rng.random((h, m)) < np.asarray(p_plus)[None, :]
        initial = NetworkState.from_positive_mask(mask, params)
    else:
        initial = NetworkState.all_negative(h, params)
    return run_dynamics(initial, w_uu, sim, params, config, reg=reg,
                        w_cross=w_ul, clamped=clamped, rng=rng,
                        record_updates=record_updates)


@dataclass(frozen=True)
class Bipartition:
    """Per-task split of the running node set by final activation value."""

    positives: tuple[np.ndarray, ...]
    negatives: tuple[np.ndarray, ...]
    warning: str | None = None


def bipartition(trace: DynamicsTrace, params: ModelParams,
                override_nonconverged: bool = False) -> Bipartition:
    """Split nodes per task: positives sit at sin rho_k, negatives at -cos rho_k."""
    warning = None
    if not trace.converged:
        if not override_nonconverged:
            raise InputError(
                "dynamics did not converge; pass override_nonconverged=True "
                "to bipartition the truncated state")
        warning = (f"bipartition taken from a non-converged trace "
                   f"({trace.sweeps_run} sweeps)")
    mask = trace.final_state.positive_mask(params)
    pos = tuple(np.flatnonzero(mask[:, k]) for k in range(params.m))
    neg = tuple(np.flatnonzero(~mask[:, k]) for k in range(params.m))
    return Bipartition(positives=pos, negatives=neg, warning=warning)


def write_trace_tsv(trace: DynamicsTrace, path: str | Path) -> None:
    """Dump `sweep<TAB>energy<TAB>flips`; sweep 0 is the initial state."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sweep\tenergy\tflips\n")
        fh.write(f"0\t{trace.energy_per_sweep[0]!r}\t0\n")
        for sweep, (energy, flips) in enumerate(
                zip(trace.energy_per_sweep[1:], trace.flips_per_sweep), start=1):
            fh.write(f"{sweep}\t{energy!r}\t{flips}\n")
