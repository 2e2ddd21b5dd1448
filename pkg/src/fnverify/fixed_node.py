"""Lazy, entry-on-demand views of the fixed-node Hamiltonian built from a
real Hamiltonian and a guiding amplitude oracle, and of the CTMC generators
derived from it (shifted and unshifted), plus the column legality check the
verifier relies on.

Everything is defined only on S = supp(phi); querying an off-support state
raises SupportError. No 2^n array is ever materialized here: a column is one
pass over the Hamiltonian's sparse row, with amplitude ratios C(z)/C(x) so a
common oracle factor cancels.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .core import (AmplitudeOracle, LocalHamiltonian, NumericPolicy,
                   NumericRangeError, check_state)

RATIO_LIMIT = 1e300   # float-mode amplitude-ratio overflow guard
DEFAULT_TAU_COL = 1e-9


class SupportError(ValueError):
    """Query at a state outside supp(phi)."""


class PairClass(enum.Enum):
    S_PLUS = "S_PLUS"
    S_MINUS = "S_MINUS"
    DIAGONAL = "DIAGONAL"


class ColumnReason(enum.Enum):
    OK = "OK"
    NEGATIVE_RATE = "NEGATIVE_RATE"
    NONZERO_SUM = "NONZERO_SUM"


class FixedNodeView:
    """Fixed-node surrogate of H for guiding state phi: off-diagonal entries
    keep H where the sign-product phi_x H_xy phi_y is non-positive and vanish
    where it is positive; the discarded weight moves onto the diagonal. The
    result is symmetric and stoquastic after conjugation by sign(phi)."""

    def __init__(self, hamiltonian: LocalHamiltonian, oracle: AmplitudeOracle):
        if not hamiltonian.is_real:
            raise ValueError("fixed-node views need a real-valued Hamiltonian; "
                             "realify first")
        if oracle.qubits != hamiltonian.qubits:
            raise ValueError(f"oracle width {oracle.qubits} != Hamiltonian "
                             f"width {hamiltonian.qubits}")
        self.hamiltonian = hamiltonian
        self.oracle = oracle
        self.policy = hamiltonian.policy

    # -- scalar plumbing ------------------------------------------------

    def _to_real(self, v, what: str):
        if isinstance(v, complex):
            if abs(v.imag) > self.policy.tau_zero:
                raise ValueError(f"{what} is not real-valued: {v!r}")
            v = v.real
        return v

    def amp(self, x: int):
        """C(x); raises SupportError when x is outside S."""
        check_state(x, self.hamiltonian.qubits)
        v = self._to_real(self.oracle(x), "amplitude")
        if self.policy.is_zero(v):
            raise SupportError(f"state {x} outside supp(phi)")
        return v

    def _ratio(self, cz, cx):
        if self.policy.exact:
            return Fraction(cz) / Fraction(cx)
        r = cz / cx
        if not math.isfinite(r) or abs(r) > RATIO_LIMIT:
            raise NumericRangeError(f"amplitude ratio overflow: {cz!r}/{cx!r}")
        return r

    def _is_positive(self, q) -> bool:
        # the S+/S- split: ties within tau_zero count as non-positive
        if self.policy.exact:
            return q > 0
        return q > self.policy.tau_zero

    # -- contracted operations -------------------------------------------

    def classify_pair(self, x: int, y: int) -> PairClass:
        """Which set the (x, y) pair falls in, by the sign of
        phi_x <x|H|y> phi_y (evaluated scale-free as <x|H|y> C(y)/C(x))."""
        cx = self.amp(x)
        if x == y:
            return PairClass.DIAGONAL
        cy = self.amp(y)
        h = self._to_real(self.hamiltonian.entry(x, y), "H entry")
        q = h * self._ratio(cy, cx)
        return PairClass.S_PLUS if self._is_positive(q) else PairClass.S_MINUS

    def scan_row(self, x: int):
        """One pass over the H-neighbors of x inside S.

        Returns (cx, f_diag, minus) where f_diag is the fixed-node diagonal
        <x|F|x> and minus lists (y, h_xy, ratio_yx) over S-minus pairs in
        ascending y order.
        """
        cx = self.amp(x)
        f_diag = Fraction(0) if self.policy.exact else 0.0
        minus = []
        for y, h in self.hamiltonian.row_nonzeros(x):
            h = self._to_real(h, "H entry")
            if y == x:
                f_diag = f_diag + h
                continue
            cy = self._to_real(self.oracle(y), "amplitude")
            if self.policy.is_zero(cy):
                continue                      # y outside S
            ratio = self._ratio(cy, cx)
            q = h * ratio
            if self._is_positive(q):
                f_diag = f_diag + q           # S+ weight folded onto diagonal
            else:
                minus.append((y, h, ratio))
        return cx, f_diag, minus

    def entry(self, x: int, y: int):
        """<x|F|y> for x, y in S."""
        if x == y:
            _, f_diag, _ = self.scan_row(x)
            return f_diag
        cls = self.classify_pair(x, y)
        if cls is PairClass.S_PLUS:
            return Fraction(0) if self.policy.exact else 0.0
        return self._to_real(self.hamiltonian.entry(x, y), "H entry")

    def row(self, x: int):
        """Nonzero entries of row x of F restricted to S, ascending index,
        diagonal included; at most d+1 entries."""
        _, f_diag, minus = self.scan_row(x)
        out = []
        for y, h, _ in minus:
            if not self.policy.is_zero(h):
                out.append((y, h))
        if not self.policy.is_zero(f_diag):
            out.append((x, f_diag))
        out.sort(key=lambda p: p[0])
        return out


@dataclass(frozen=True, eq=False)
class ColumnData:
    """One generator column: everything the walkers and the legality check
    need about transitions out of `state`."""

    state: int
    amp: object                 # C(state)
    diag: object                # <state|G|state>
    neighbors: tuple            # (y, raw rate <y|G|state>) over S-minus pairs
    col_sum: object             # diagonal + raw rates, cancellation-ordered
    legal: bool
    reason: ColumnReason
    exit_rate: float            # |<state|G|state>| as float
    targets: np.ndarray         # jump targets (rate > 0), ascending
    cum: np.ndarray             # cumulative jump rates over targets


class GeneratorView:
    """Transition-rate view over a FixedNodeView: <y|G|x> = -F_yx C(y)/C(x),
    plus shift*delta_{yx} when a shift is set (the spectrally-shifted variant).
    Column-indexed: entry(x, y) is the rate from x to y."""

    def __init__(self, fixed_node: FixedNodeView, shift=None,
                 tau_col_rel: float = DEFAULT_TAU_COL):
        self.fixed_node = fixed_node
        self.oracle = fixed_node.oracle
        self.shift = shift
        self.tau_col_rel = tau_col_rel
        self.policy = fixed_node.policy

    def entry(self, x: int, y: int):
        """<y|G|x>, the rate from x to y (both in S)."""
        fn = self.fixed_node
        cx = fn.amp(x)
        if x == y:
            _, f_diag, _ = fn.scan_row(x)
            g = -f_diag
            if self.shift is not None:
                g = g + self.shift
            return g
        cy = fn.amp(y)
        f_yx = fn.entry(x, y)     # F is symmetric
        return -f_yx * fn._ratio(cy, cx)

    def column(self, x: int) -> ColumnData:
        """Assemble column x: raw rates, legality verdict, jump buckets."""
        fn = self.fixed_node
        cx, f_diag, minus = fn.scan_row(x)
        diag = -f_diag
        if self.shift is not None:
            diag = diag + self.shift
        neighbors = tuple((y, -h * ratio) for y, h, ratio in minus)

        # legality: every off-diagonal rate >= -tau_zero, column sums to zero
        tau_zero = 0 if self.policy.exact else self.policy.tau_zero
        negative = any(r < -tau_zero for _, r in neighbors)
        col_sum = self._ordered_sum(diag, [r for _, r in neighbors])
        if self.policy.exact:
            sum_bad = col_sum != 0
        else:
            # written so a NaN column sum fails the check rather than passing
            sum_bad = not (abs(col_sum) <= self.tau_col_rel * (1.0 + abs(diag)))
        if negative:
            legal, reason = False, ColumnReason.NEGATIVE_RATE
        elif sum_bad:
            legal, reason = False, ColumnReason.NONZERO_SUM
        else:
            legal, reason = True, ColumnReason.OK

        # jump buckets: tiny negative ties floor to zero and drop out
        targets = []
        rates = []
        for y, r in neighbors:
            rf = float(r)
            if rf > 0.0:
                targets.append(y)
                rates.append(rf)
        targets = np.asarray(targets, dtype=np.int64)
        cum = np.cumsum(np.asarray(rates, dtype=np.float64))
        return ColumnData(state=x, amp=cx, diag=diag, neighbors=neighbors,
                          col_sum=col_sum, legal=legal, reason=reason,
                          exit_rate=abs(float(diag)), targets=targets, cum=cum)

    def _ordered_sum(self, diag, rates):
        if self.policy.exact:
            return diag + sum(rates, Fraction(0))
        vals = sorted([float(diag)] + [float(r) for r in rates], key=abs)
        return math.fsum(vals)

    def column_legal(self, x: int) -> tuple[bool, ColumnReason]:
        col = self.column(x)
        return col.legal, col.reason


def select_jump(col: ColumnData, u: float) -> int:
    """Pick the jump target for uniform u: the first cumulative bucket
    exceeding u * total. Matches the batched kernel's scan bit-for-bit."""
    cum = col.cum
    target = u * cum[-1]
    j = int(np.searchsorted(cum, target, side="right"))
    if j >= len(cum):
        j = len(cum) - 1
    return int(col.targets[j])


class ColumnCache:
    """Memo of GeneratorView.column keyed by state. Views are immutable and
    oracle evaluation deterministic, so concurrent duplicate computes are
    benign; setdefault keeps one winner."""

    def __init__(self, view: GeneratorView):
        self.view = view
        self._cols: dict[int, ColumnData] = {}

    def get(self, x: int) -> ColumnData:
        col = self._cols.get(x)
        if col is None:
            col = self._cols.setdefault(x, self.view.column(x))
        return col

    def __len__(self):
        return len(self._cols)


@dataclass(eq=False)
class GeneratorTable:
    """Flat array form of every column reachable from a start state, feeding
    the batched kernels. Targets are table indices; non-OK states are terminal
    (their jump ranges are empty and must never be sampled)."""

    states: np.ndarray          # table index -> basis state
    index: dict                 # basis state -> table index
    legal_code: np.ndarray      # kernel outcome codes per state
    exit_rate: np.ndarray
    indptr: np.ndarray
    targets: np.ndarray
    cumrate: np.ndarray
    columns: list

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def all_legal(self) -> bool:
        return bool(np.all(self.legal_code == _kernels.CODE_OK))


def build_generator_table(view: GeneratorView, x_in: int, cap: int = 65536,
                          format_bits: int | None = None,
                          cache: ColumnCache | None = None):
    """Breadth-first closure of the walk from x_in over positive-rate jumps.

    Expansion stops at states whose format or column check fails (the walk
    rejects there). Returns None when the closure exceeds `cap` states, in
    which case callers fall back to the lazy per-trial path.
    """
    cache = cache or ColumnCache(view)
    fmt = None
    if format_bits is not None:
        fmt = NumericPolicy(mode=view.policy.mode, p_bits=format_bits)
    states = [int(x_in)]
    index = {int(x_in): 0}
    codes: list[int] = []
    cols: list[ColumnData] = []
    qi = 0
    while qi < len(states):
        x = states[qi]
        qi += 1
        col = None
        # the walk format-checks C(x) before touching the column, so a
        # malformed amplitude must win over (or preempt) column failures
        if fmt is not None and not fmt.format_ok(view.oracle(x)):
            code = _kernels.CODE_FORMAT_BAD
        else:
            try:
                col = cache.get(x)
            except NumericRangeError:
                code = _kernels.CODE_CONTRACT_ERROR
            else:
                if col.legal:
                    code = _kernels.CODE_OK
                elif col.reason is ColumnReason.NEGATIVE_RATE:
                    code = _kernels.CODE_NEGATIVE_RATE
                else:
                    code = _kernels.CODE_NONZERO_SUM
        codes.append(code)
        cols.append(col)
        if code == _kernels.CODE_OK:
            for y in col.targets:
                y = int(y)
                if y not in index:
                    if len(states) >= cap:
                        return None
                    index[y] = len(states)
                    states.append(y)

    ns = len(states)
    indptr = np.zeros(ns + 1, dtype=np.int64)
    tgt_chunks = []
    cum_chunks = []
    exit_rates = np.zeros(ns, dtype=np.float64)
    for i in range(ns):
        if cols[i] is not None:
            exit_rates[i] = cols[i].exit_rate
        if codes[i] == _kernels.CODE_OK and cols[i].targets.shape[0]:
            tgt_chunks.append(np.array([index[int(y)] for y in cols[i].targets],
                                       dtype=np.int64))
            cum_chunks.append(cols[i].cum)
            indptr[i + 1] = indptr[i] + cols[i].targets.shape[0]
        else:
            indptr[i + 1] = indptr[i]
    targets = (np.concatenate(tgt_chunks) if tgt_chunks
               else np.zeros(0, dtype=np.int64))
    cumrate = (np.concatenate(cum_chunks) if cum_chunks
               else np.zeros(0, dtype=np.float64))
    return GeneratorTable(
        states=np.asarray(states, dtype=np.int64),
        index=index,
        legal_code=np.asarray(codes, dtype=np.int8),
        exit_rate=exit_rates,
        indptr=indptr,
        targets=targets,
        cumrate=cumrate,
        columns=cols,
    )


# module-level aliases matching the operation contracts

def classify_pair(view: FixedNodeView, x: int, y: int) -> PairClass:
    return view.classify_pair(x, y)


def fn_entry(view: FixedNodeView, x: int, y: int):
    return view.entry(x, y)


def fn_row(view: FixedNodeView, x: int):
    return view.row(x)


def gen_entry(view: GeneratorView, x: int, y: int):
    return view.entry(x, y)


def column_legal(view: GeneratorView, x: int) -> tuple[bool, ColumnReason]:
    return view.column_legal(x)
