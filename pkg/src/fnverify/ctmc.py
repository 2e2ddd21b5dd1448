"""Trajectory simulation: Gillespie's algorithm with exponential waiting
times, its discretized variant, empirical-marginal extraction, and a batched
runner over precomputed generator tables.

These runners are for legal generators (the caller guarantees legality, e.g.
the guiding state is a ground state); hitting an illegal column mid-run is a
contract violation and raises. The verifier module has its own checked runner
that rejects instead.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .fixed_node import (ColumnCache, GeneratorTable, GeneratorView,
                         build_generator_table, select_jump)
from .sampling import DiscExpParams, RngStream, disc_exp_index

DEFAULT_MAX_TRANSITIONS = 10 ** 7


class IllegalGeneratorError(RuntimeError):
    """The legal-generator runner met a column that fails the legality check."""


@dataclass(eq=False)
class Trajectory:
    """One CTMC path: arrival events (time, state) with events[0] = (0, x_in),
    strictly increasing times, and consecutive states distinct. A discrete-mode
    zero-length wait coalesces onto the previous timestamp (latest state wins),
    so `transitions` can exceed len(events)-1 by the number of coalesced jumps.
    """

    events: list[tuple[float, int]]
    horizon: float
    transitions: int
    terminated_early: bool = False
    termination_reason: str | None = None

    def state_at(self, s: float) -> int:
        """State occupied at time s: the rightmost event at time <= s."""
        if s < 0.0 or s > self.horizon:
            raise ValueError(f"time {s} outside [0, {self.horizon}]")
        times = [e[0] for e in self.events]
        i = bisect.bisect_right(times, s) - 1
        return self.events[i][1]

    def to_records(self, width: int) -> list[dict]:
        return [{"t": t, "state": format(x, f"0{width}b")}
                for t, x in self.events]


def _run(view: GeneratorView, x_in: int, t: float, rng: RngStream,
         max_transitions: int, wait_fn, cache: ColumnCache | None) -> Trajectory:
    if not t > 0.0:
        raise ValueError(f"horizon must be positive, got {t!r}")
    cache = cache or ColumnCache(view)
    tau_zero = view.policy.tau_zero if not view.policy.exact else 0.0
    events = [(0.0, int(x_in))]
    x = int(x_in)
    tau = 0.0
    m = 0
    while True:
        col = cache.get(x)
        if not col.legal:
            raise IllegalGeneratorError(
                f"column {x} fails legality ({col.reason.value}); "
                "this runner requires a legal generator")
        if m >= max_transitions:
            return Trajectory(events, t, m, terminated_early=True,
                              termination_reason="max_transitions")
        r = col.exit_rate
        if r <= tau_zero:
            break                       # hold to the horizon
        u = rng.uniform()
        dt = wait_fn(rng, u, r)
        new_tau = tau + dt
        if new_tau >= t:
            break                       # crossing jump is not executed
        u2 = rng.uniform()
        y = select_jump(col, u2)
        tau = new_tau
        m += 1
        if events[-1][0] == tau:
            events[-1] = (tau, y)       # zero-length wait: coalesce
        else:
            events.append((tau, y))
        x = y
    return Trajectory(events, t, m)


def gillespie_run(G: GeneratorView, x_in: int, t: float, rng: RngStream,
                  max_transitions: int = DEFAULT_MAX_TRANSITIONS,
                  cache: ColumnCache | None = None) -> Trajectory:
    """Continuous-time run: wait Exp(|G_xx|) at each state (hold to the
    horizon at rate zero), then jump with probability proportional to the
    off-diagonal column rates."""
    def wait(rng_, u, rate):
        while u == 0.0:
            u = rng_.uniform()
        return -math.log(u) / rate

    return _run(G, x_in, t, rng, max_transitions, wait, cache)


def gillespie_run_discrete(G: GeneratorView, x_in: int, t: float,
                           rng: RngStream,
                           params_fn: Callable[[float], DiscExpParams],
                           max_transitions: int = DEFAULT_MAX_TRANSITIONS,
                           cache: ColumnCache | None = None) -> Trajectory:
    """Discretized run: waiting times drawn from the truncated discretized
    exponential at the state's rate; event times land on grid offsets."""
    def wait(rng_, u, rate):
        params = params_fn(rate)
        return disc_exp_index(u, params) * params.delta

    return _run(G, x_in, t, rng, max_transitions, wait, cache)


def make_disc_policy(t: float, delta: float | None = None,
                     K: int | None = None) -> Callable[[float], DiscExpParams]:
    """Default discretization policy: delta = 1e-6 * t, K = ceil(2t/delta),
    so a single waiting time never exceeds 2t."""
    d = float(delta) if delta is not None else 1e-6 * t
    k = int(K) if K is not None else math.ceil(2.0 * t / d)
    return lambda rate: DiscExpParams(k, d, rate)


def empirical_marginal(trajectories, s: float) -> dict[int, float]:
    """Fraction of (non-early-terminated) trajectories occupying each state at
    time s; frequencies sum to 1 over the runs counted."""
    counts: dict[int, int] = {}
    total = 0
    for tr in trajectories:
        if s > tr.horizon:
            raise ValueError(f"time {s} beyond trajectory horizon {tr.horizon}")
        if tr.terminated_early:
            continue
        x = tr.state_at(s)
        counts[x] = counts.get(x, 0) + 1
        total += 1
    if total == 0:
        return {}
    return {x: c / total for x, c in sorted(counts.items())}


@dataclass(eq=False)
class BatchResult:
    """Batched-trial output: states_at[i, j] is trial i's basis state at
    record_times[j]; transitions counts executed jumps per trial."""

    states_at: np.ndarray
    transitions: np.ndarray
    terminated_early: np.ndarray
    record_times: np.ndarray

    def marginal(self, j: int) -> dict[int, float]:
        ok = ~self.terminated_early
        total = int(np.sum(ok))
        if total == 0:
            return {}
        vals, counts = np.unique(self.states_at[ok, j], return_counts=True)
        return {int(v): int(c) / total for v, c in zip(vals, counts)}


def simulate_batch(view: GeneratorView, x_in: int, t: float,
                   master_seed: int, n_trials: int,
                   record_times=None,
                   discrete: bool = False,
                   delta: float | None = None, K: int | None = None,
                   max_transitions: int = DEFAULT_MAX_TRANSITIONS,
                   table: GeneratorTable | None = None,
                   stream_offset: int = 0,
                   table_cap: int = 65536) -> BatchResult:
    """Run n_trials independent trajectories through the batched kernel
    (numba when enabled). Trial i owns stream (master_seed, stream_offset+i)
    and replays identically under gillespie_run with the same stream."""
    if record_times is None:
        record_times = [t]
    rec = np.asarray(sorted(float(s) for s in record_times), dtype=np.float64)
    if rec.shape[0] and rec[-1] > t:
        raise ValueError("record times must lie within the horizon")
    if table is None:
        table = build_generator_table(view, x_in, cap=table_cap)
        if table is None:
            raise ValueError("reachable state space exceeds the table cap")
    if not table.all_legal:
        bad = int(table.states[int(np.argmax(table.legal_code != 0))])
        raise IllegalGeneratorError(f"column {bad} fails legality")
    if discrete:
        d = float(delta) if delta is not None else 1e-6 * t
        kmax = int(K) if K is not None else math.ceil(2.0 * t / d)
    else:
        d, kmax = 1.0, 1
    tau_zero = view.policy.tau_zero if not view.policy.exact else 0.0

    sids = np.arange(stream_offset, stream_offset + n_trials, dtype=np.uint64)
    sid_lo = sids & np.uint64(0xFFFFFFFF)
    sid_hi = sids >> np.uint64(32)
    key0 = np.uint64(master_seed & 0xFFFFFFFF)
    key1 = np.uint64((master_seed >> 32) & 0xFFFFFFFF)

    out_states = np.zeros((n_trials, rec.shape[0]), dtype=np.int64)
    out_m = np.zeros(n_trials, dtype=np.int64)
    out_early = np.zeros(n_trials, dtype=np.bool_)
    _kernels.run_marginal_trials(
        table.indptr, table.targets, table.cumrate, table.exit_rate,
        np.int64(table.index[int(x_in)]), np.float64(t),
        np.int64(max_transitions), np.float64(tau_zero), rec,
        key0, key1, sid_lo, sid_hi,
        discrete, np.float64(d), np.int64(kmax),
        out_states, out_m, out_early)
    return BatchResult(states_at=table.states[out_states],
                       transitions=out_m,
                       terminated_early=out_early,
                       record_times=rec)
