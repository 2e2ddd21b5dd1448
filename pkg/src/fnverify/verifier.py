"""The verification protocol: witness preprocessing, the checked random-walk
run (continuous and discretized), acceptance-probability estimation over
independent trials, and the honest-prover search for a good initial string.

The walk uses the unshifted generator throughout: a prover-supplied spectral
shift cannot be trusted, and for honest ground-state witnesses the shifted and
unshifted generators coincide. Reject checks run in the fixed order
support -> format -> column -> transition cap, mirroring the protocol lines.
"""
from __future__ import annotations

import concurrent.futures
import enum
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import _kernels
from .core import (AmplitudeOracle, LocalHamiltonian, NumericPolicy,
                   NumericRangeError, check_state, realify, realify_state)
from .ctmc import Trajectory
from .fixed_node import (ColumnCache, FixedNodeView, GeneratorView,
                         build_generator_table, select_jump)
from .sampling import DiscExpParams, RngStream, disc_exp_index

CONTINUOUS = "continuous"
DISCRETE = "discrete"

GAP_FLOOR = 1e-3

# stream-id blocks so trials, search probes, and pilots never collide
_SEARCH_STREAM_BASE = 1 << 40
_PILOT_STREAM_BASE = 1 << 41


class SearchFailure(RuntimeError):
    """No candidate initial string inside the witness support."""


class Verdict(str, enum.Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"


class Reason(str, enum.Enum):
    OK = "OK"
    LAMBDA_TOO_HIGH = "LAMBDA_TOO_HIGH"
    OUT_OF_SUPPORT = "OUT_OF_SUPPORT"
    FORMAT_BAD = "FORMAT_BAD"
    ILLEGAL_COLUMN = "ILLEGAL_COLUMN"
    TRANSITION_CAP = "TRANSITION_CAP"
    CONTRACT_ERROR = "CONTRACT_ERROR"


_CODE_TO_REASON = {
    _kernels.CODE_OK: Reason.OK,
    _kernels.CODE_FORMAT_BAD: Reason.FORMAT_BAD,
    _kernels.CODE_NEGATIVE_RATE: Reason.ILLEGAL_COLUMN,
    _kernels.CODE_NONZERO_SUM: Reason.ILLEGAL_COLUMN,
    _kernels.CODE_TRANSITION_CAP: Reason.TRANSITION_CAP,
    _kernels.CODE_CONTRACT_ERROR: Reason.CONTRACT_ERROR,
}


@dataclass(frozen=True, eq=False)
class Witness:
    """The prover's triple: claimed ground energy, amplitude circuit, and
    suggested initial string."""

    lambda_hat: object
    oracle: AmplitudeOracle
    x_in: int

    def __post_init__(self):
        lam = self.lambda_hat
        if isinstance(lam, complex):
            if lam.imag != 0.0:
                raise ValueError("claimed energy must be real-valued")
            object.__setattr__(self, "lambda_hat", lam.real)
        check_state(self.x_in, self.oracle.qubits)


@dataclass(frozen=True, eq=False)
class Instance:
    """Problem instance: Hamiltonian plus the promise thresholds (a, b)."""

    hamiltonian: LocalHamiltonian
    a: float
    b: float
    gap_floor: float = GAP_FLOOR

    def __post_init__(self):
        if not (self.b - self.a) >= self.gap_floor:
            raise ValueError(
                f"promise gap b-a = {self.b - self.a!r} below floor "
                f"{self.gap_floor!r}")
        if not math.isfinite(self.hamiltonian.norm_bound):
            raise ValueError("Hamiltonian norm bound is not finite")

    @property
    def epsilon(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class VerifierConfig:
    """Walk horizon, transition cap, waiting-time mode, tolerances, and trial
    bookkeeping. `for_instance` fills the desk-scale defaults
    t = ceil(10 n / eps) and M = 2^k m n^3 t ||H||."""

    t: float
    max_transitions: int
    mode: str = CONTINUOUS
    disc_delta: float | None = None
    disc_K: int | None = None
    format_bits: int = 64
    tau_col_rel: float = 1e-9
    trials: int = 400
    master_seed: int = 0
    table_cap: int = 65536

    def __post_init__(self):
        if not self.t > 0.0:
            raise ValueError("horizon t must be positive")
        if self.max_transitions < 1:
            raise ValueError("transition cap must be >= 1")
        if self.mode not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def for_instance(cls, inst: Instance, witness: Witness | None = None,
                     t: float | None = None, max_transitions: int | None = None,
                     **kw) -> "VerifierConfig":
        H = inst.hamiltonian
        n = H.qubits
        if t is None:
            t = float(math.ceil(10.0 * n / inst.epsilon))
        if max_transitions is None:
            lam = abs(float(witness.lambda_hat)) if witness is not None else 0.0
            m = len(H.terms) + 1          # the -lambda_hat I shift term
            norm = H.norm_bound + lam
            max_transitions = int(math.ceil(
                (2 ** H.locality) * m * n ** 3 * t * max(norm, 1.0)))
        return cls(t=float(t), max_transitions=max_transitions, **kw)

    def disc_params(self, rate: float) -> DiscExpParams:
        d = self.disc_delta if self.disc_delta is not None else 1e-6 * self.t
        k = self.disc_K if self.disc_K is not None else math.ceil(2.0 * self.t / d)
        return DiscExpParams(int(k), float(d), rate)


@dataclass(eq=False)
class VerdictTrace:
    """Outcome of one checked run, recording which reject line fired."""

    verdict: Verdict
    reason: Reason
    transitions: int
    elapsed_sim_time: float
    trajectory: Trajectory | None = None

    def __post_init__(self):
        if self.verdict is Verdict.ACCEPT:
            assert self.reason is Reason.OK
            assert self.elapsed_sim_time >= 0.0

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "reason": self.reason.value,
                "transitions": int(self.transitions),
                "elapsed_sim_time": float(self.elapsed_sim_time)}


def preprocess(inst: Instance, w: Witness):
    """Shift the Hamiltonian by the claimed energy, or reject outright when
    the claim exceeds the Yes threshold. Returns (H_shifted, oracle, epsilon)
    or None for the immediate reject. Support restriction is implicit: all
    downstream access goes through views that hard-error off supp(phi)."""
    H = inst.hamiltonian
    if not H.is_real:
        raise ValueError("preprocess expects a realified Hamiltonian")
    if w.oracle.qubits != H.qubits:
        raise ValueError("witness oracle width does not match the instance")
    lam = w.lambda_hat
    if float(lam) > float(inst.a):
        return None
    shift = -lam if H.policy.exact else -float(lam)
    return H.shifted(shift), w.oracle, inst.epsilon


def realify_problem(inst: Instance, w: Witness):
    """Route a complex instance/witness pair through the one-ancilla real
    reduction; real inputs pass through unchanged. The initial string keeps
    its larger real/imaginary amplitude component on the ancilla bit."""
    H = inst.hamiltonian
    if H.is_real:
        return inst, w
    n = H.qubits
    H2 = realify(H)
    oracle2 = realify_state(w.oracle)
    v = complex(w.oracle(w.x_in))
    bit = 1 if abs(v.imag) > abs(v.real) else 0
    w2 = Witness(w.lambda_hat, oracle2, w.x_in | (bit << n))
    return Instance(H2, inst.a, inst.b, inst.gap_floor), w2


def _format_policy(H: LocalHamiltonian, cfg: VerifierConfig) -> NumericPolicy:
    return NumericPolicy(mode=H.policy.mode, p_bits=cfg.format_bits)


def verify_run(H_S: LocalHamiltonian, phi: AmplitudeOracle, x_in: int,
               cfg: VerifierConfig, rng: RngStream,
               cache: ColumnCache | None = None,
               record_trajectory: bool = False) -> VerdictTrace:
    """One checked walk: support check on x_in, then per visited state the
    amplitude format check, the column legality check, the transition cap,
    and the hold/jump step; accepting only when the horizon is reached."""
    check_state(x_in, H_S.qubits)
    policy = H_S.policy
    fmt = _format_policy(H_S, cfg)
    view = GeneratorView(FixedNodeView(H_S, phi), shift=None,
                         tau_col_rel=cfg.tau_col_rel)
    cache = cache or ColumnCache(view)
    tau_zero = 0 if policy.exact else policy.tau_zero
    discrete = cfg.mode == DISCRETE

    if policy.is_zero(phi(x_in)):
        return VerdictTrace(Verdict.REJECT, Reason.OUT_OF_SUPPORT, 0, 0.0)

    events = [(0.0, int(x_in))]
    x = int(x_in)
    tau = 0.0
    m = 0

    def finish(verdict, reason):
        traj = None
        if record_trajectory:
            traj = Trajectory(events, cfg.t, m,
                              terminated_early=(verdict is Verdict.REJECT),
                              termination_reason=reason.value)
        elapsed = cfg.t if verdict is Verdict.ACCEPT else min(tau, cfg.t)
        return VerdictTrace(verdict, reason, m, elapsed, traj)

    while True:
        if not fmt.format_ok(phi(x)):
            return finish(Verdict.REJECT, Reason.FORMAT_BAD)
        try:
            col = cache.get(x)
        except NumericRangeError:
            return finish(Verdict.REJECT, Reason.CONTRACT_ERROR)
        if not col.legal:
            return finish(Verdict.REJECT, Reason.ILLEGAL_COLUMN)
        if m >= cfg.max_transitions:
            return finish(Verdict.REJECT, Reason.TRANSITION_CAP)
        r = col.exit_rate
        if r <= tau_zero:
            return finish(Verdict.ACCEPT, Reason.OK)
        u = rng.uniform()
        if discrete:
            params = cfg.disc_params(r)
            dt = disc_exp_index(u, params) * params.delta
        else:
            while u == 0.0:
                u = rng.uniform()
            dt = -math.log(u) / r
        tau += dt
        if tau >= cfg.t:
            return finish(Verdict.ACCEPT, Reason.OK)
        u2 = rng.uniform()
        y = select_jump(col, u2)
        m += 1
        if events[-1][0] == tau:
            events[-1] = (tau, y)
        else:
            events.append((tau, y))
        x = y


def verify_witness(inst: Instance, w: Witness, cfg: VerifierConfig,
                   rng: RngStream | None = None,
                   record_trajectory: bool = False) -> VerdictTrace:
    """Preprocess + one checked run (stream 0 of the master seed by default)."""
    pre = preprocess(inst, w)
    if pre is None:
        return VerdictTrace(Verdict.REJECT, Reason.LAMBDA_TOO_HIGH, 0, 0.0)
    H_S, phi, _ = pre
    if rng is None:
        rng = RngStream(cfg.master_seed, 0)
    return verify_run(H_S, phi, w.x_in, cfg, rng,
                      record_trajectory=record_trajectory)


@dataclass(eq=False)
class AcceptanceEstimate:
    """Acceptance statistics over independent trials."""

    p_hat: float
    ci_half_width: float
    reject_histogram: dict
    n_trials: int
    transitions: np.ndarray
    elapsed: np.ndarray

    @property
    def mean_transitions(self) -> float:
        return float(np.mean(self.transitions)) if self.n_trials else 0.0

    def to_dict(self) -> dict:
        return {
            "p_hat": float(self.p_hat),
            "ci_half_width": float(self.ci_half_width),
            "n_trials": int(self.n_trials),
            "mean_transitions": self.mean_transitions,
            "reject_histogram": {k: int(v)
                                 for k, v in sorted(self.reject_histogram.items())},
        }


def _estimate_from_reasons(reasons, transitions, elapsed) -> AcceptanceEstimate:
    n = len(reasons)
    accepted = sum(1 for r in reasons if r is Reason.OK)
    p = accepted / n if n else 0.0
    ci = 1.96 * math.sqrt(p * (1.0 - p) / n) if n else 0.0
    hist: dict[str, int] = {}
    for r in reasons:
        if r is not Reason.OK:
            hist[r.value] = hist.get(r.value, 0) + 1
    return AcceptanceEstimate(p, ci, hist, n,
                              np.asarray(transitions, dtype=np.int64),
                              np.asarray(elapsed, dtype=np.float64))


def _worker_count() -> int:
    raw = os.environ.get("FNV_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def estimate_acceptance(inst: Instance, w: Witness,
                        cfg: VerifierConfig) -> AcceptanceEstimate:
    """Run cfg.trials independent checked walks (trial i owns stream
    (master_seed, i)) and return the acceptance fraction, its normal-
    approximation CI half-width, and the reject-reason histogram.

    When the reachable support fits the table cap the trials run through the
    batched kernel; otherwise they run lazily (FNV_THREADS workers). Both
    paths draw identical streams and return identical outcomes.
    """
    if cfg.trials < 1:
        raise ValueError("trial count must be >= 1")
    pre = preprocess(inst, w)
    if pre is None:
        reasons = [Reason.LAMBDA_TOO_HIGH] * cfg.trials
        return _estimate_from_reasons(reasons, [0] * cfg.trials,
                                      [0.0] * cfg.trials)
    H_S, phi, _ = pre
    if H_S.policy.is_zero(phi(w.x_in)):
        reasons = [Reason.OUT_OF_SUPPORT] * cfg.trials
        return _estimate_from_reasons(reasons, [0] * cfg.trials,
                                      [0.0] * cfg.trials)

    view = GeneratorView(FixedNodeView(H_S, phi), shift=None,
                         tau_col_rel=cfg.tau_col_rel)
    table = None
    if cfg.table_cap > 0:
        table = build_generator_table(view, w.x_in, cap=cfg.table_cap,
                                      format_bits=cfg.format_bits)
    tau_zero = 0.0 if H_S.policy.exact else H_S.policy.tau_zero
    if table is not None:
        return _estimate_batched(table, w.x_in, cfg, tau_zero)
    return _estimate_lazy(H_S, phi, w.x_in, cfg, view)


def _estimate_batched(table, x_in: int, cfg: VerifierConfig,
                      tau_zero: float) -> AcceptanceEstimate:
    n = cfg.trials
    sids = np.arange(n, dtype=np.uint64)
    out_code = np.zeros(n, dtype=np.int8)
    out_m = np.zeros(n, dtype=np.int64)
    out_tau = np.zeros(n, dtype=np.float64)
    if cfg.mode == DISCRETE:
        params = cfg.disc_params(1.0)
        discrete, d, kmax = True, params.delta, params.K
    else:
        discrete, d, kmax = False, 1.0, 1
    _kernels.run_checked_trials(
        table.indptr, table.targets, table.cumrate,
        table.legal_code, table.exit_rate,
        np.int64(table.index[int(x_in)]), np.float64(cfg.t),
        np.int64(cfg.max_transitions), np.float64(tau_zero),
        np.uint64(cfg.master_seed & 0xFFFFFFFF),
        np.uint64((cfg.master_seed >> 32) & 0xFFFFFFFF),
        sids & np.uint64(0xFFFFFFFF), sids >> np.uint64(32),
        discrete, np.float64(d), np.int64(kmax),
        out_code, out_m, out_tau)
    reasons = [_CODE_TO_REASON[int(c)] for c in out_code]
    return _estimate_from_reasons(reasons, out_m, out_tau)


def _estimate_lazy(H_S, phi, x_in, cfg, view) -> AcceptanceEstimate:
    cache = ColumnCache(view)
    n = cfg.trials

    def one(i: int) -> VerdictTrace:
        rng = RngStream(cfg.master_seed, i)
        return verify_run(H_S, phi, x_in, cfg, rng, cache=cache)

    workers = _worker_count()
    traces: list[VerdictTrace | None] = [None] * n
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            for i, tr in zip(range(n), ex.map(one, range(n))):
                traces[i] = tr
    else:
        for i in range(n):
            traces[i] = one(i)
    reasons = [tr.reason for tr in traces]
    return _estimate_from_reasons(reasons,
                                  [tr.transitions for tr in traces],
                                  [tr.elapsed_sim_time for tr in traces])


def search_x_in(H_S: LocalHamiltonian, phi: AmplitudeOracle,
                cfg: VerifierConfig, rng: RngStream,
                candidates: int = 8, start: int | None = None,
                burn_in: int = 64, thin: int = 4,
                pilot_runs: int = 8) -> int:
    """Honest-prover search for an initial string: Metropolis over single-bit
    flips targeting |C(x)|^2, then a pilot batch of checked runs per distinct
    candidate; the highest pilot acceptance wins, ties to the smallest index."""
    n = H_S.qubits
    space = 1 << n
    policy = H_S.policy

    def weight(x: int) -> float:
        v = phi(x)
        if isinstance(v, Fraction):
            v = float(v)
        if isinstance(v, complex):
            v = abs(v)
        return float(v) * float(v)

    cur = None
    if start is not None and not policy.is_zero(phi(start)):
        cur = int(start)
    if cur is None:
        probes = [0, space - 1]
        probes += [min(space - 1, int(rng.uniform() * space)) for _ in range(256)]
        for x in probes:
            if not policy.is_zero(phi(x)):
                cur = x
                break
    if cur is None:
        raise SearchFailure("no support point found to seed the search")

    wc = weight(cur)
    seen: list[int] = []
    steps = burn_in + candidates * thin
    for step in range(steps):
        j = min(n - 1, int(rng.uniform() * n))
        y = cur ^ (1 << j)
        wy = weight(y)
        if wy > 0.0 and (wy >= wc or rng.uniform() * wc < wy):
            cur, wc = y, wy
        if step >= burn_in and (step - burn_in) % thin == 0:
            if cur not in seen:
                seen.append(cur)

    if not seen:
        seen = [cur]

    best: tuple[float, int] | None = None
    for ci, cand in enumerate(seen):
        hits = 0
        for r in range(pilot_runs):
            stream = RngStream(cfg.master_seed,
                               _PILOT_STREAM_BASE + ci * 1024 + r)
            tr = verify_run(H_S, phi, cand, cfg, stream)
            if tr.verdict is Verdict.ACCEPT:
                hits += 1
        score = hits / pilot_runs
        if best is None or score > best[0] or (score == best[0] and cand < best[1]):
            best = (score, cand)
    return best[1]
