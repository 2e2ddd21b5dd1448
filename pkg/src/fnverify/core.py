"""Foundational types: basis strings, numeric policy, k-local Hamiltonians with
sparse row/column queries, amplitude oracles, and the complex-to-real reduction.

Basis states are plain ints (bit q of the int is qubit q, LSB = qubit 0);
widths are validated at the API boundary. Everything here is immutable after
construction and safe to share across workers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

MAX_QUBITS = 24      # trajectory states must fit one machine word
TAU_ZERO = 1e-12     # "is this entry zero" in float mode
TAU_HERM = 1e-10     # Hermiticity tolerance

FLOAT_MODE = "float"
EXACT_MODE = "exact"

_PAULI = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class WidthError(ValueError):
    """A basis index does not fit the declared qubit count."""


class NumericRangeError(ArithmeticError):
    """A float-mode intermediate left the representable range."""


def check_state(x: int, width: int) -> int:
    """Validate that x encodes a `width`-bit basis string and return it."""
    if not (0 < width <= MAX_QUBITS):
        raise WidthError(f"qubit count {width} outside 1..{MAX_QUBITS}")
    if not isinstance(x, (int, np.integer)) or x < 0 or x >> width:
        raise WidthError(f"state {x!r} is not a {width}-bit basis index")
    return int(x)


def state_to_bits(x: int, width: int) -> str:
    """Render a basis index as an MSB-first bitstring."""
    return format(check_state(x, width), f"0{width}b")


def bits_to_state(bits: str) -> tuple[int, int]:
    """Parse an MSB-first bitstring, returning (state, width)."""
    if not bits or set(bits) - {"0", "1"}:
        raise WidthError(f"not a bitstring: {bits!r}")
    return int(bits, 2), len(bits)


@dataclass(frozen=True)
class NumericPolicy:
    """Numeric mode and tolerances shared by a Hamiltonian and its oracles.

    Float mode (default) uses double precision with explicit tolerances.
    Exact mode stores entries as Fractions (real-valued data only) and is
    meant for tiny instances; p_bits bounds numerator/denominator sizes and
    doubles as the float-mode magnitude window exponent.
    """

    mode: str = FLOAT_MODE
    tau_zero: float = TAU_ZERO
    tau_herm: float = TAU_HERM
    p_bits: int = 64

    def __post_init__(self):
        if self.mode not in (FLOAT_MODE, EXACT_MODE):
            raise ValueError(f"unknown numeric mode {self.mode!r}")

    @property
    def exact(self) -> bool:
        return self.mode == EXACT_MODE

    def is_zero(self, v) -> bool:
        if self.exact:
            return v == 0
        return abs(v) <= self.tau_zero

    def format_ok(self, v) -> bool:
        """Witness-value format check: the paper's p(n)-bit representability
        test, realized as a magnitude window in float mode."""
        if self.exact:
            if not isinstance(v, Fraction):
                return False
            return (abs(v.numerator).bit_length() <= self.p_bits
                    and v.denominator.bit_length() <= self.p_bits)
        if isinstance(v, complex):
            if v.imag != 0.0:
                return False
            v = v.real
        v = float(v)
        if not math.isfinite(v):
            return False
        mag = abs(v)
        return 2.0 ** -self.p_bits <= mag <= 2.0 ** self.p_bits


FLOAT_POLICY = NumericPolicy()


def _as_matrix(matrix, exact: bool) -> np.ndarray:
    if exact:
        m = np.array(matrix, dtype=object)
        flat = [v for v in m.ravel()]
        if not all(isinstance(v, (Fraction, int)) for v in flat):
            raise ValueError("exact mode requires Fraction (or int) entries")
        m = np.array([[Fraction(v) for v in row] for row in m], dtype=object)
        return m
    m = np.asarray(matrix, dtype=complex)
    if not np.all(np.isfinite(m.view(float))):
        raise ValueError("matrix entries must be finite")
    return m


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """One k-local Hermitian term: an ordered tuple of distinct qubit indices
    and a dense 2^k x 2^k matrix over them. support[0] is the most significant
    bit of the local index."""

    support: tuple[int, ...]
    matrix: np.ndarray
    policy: NumericPolicy = FLOAT_POLICY

    def __post_init__(self):
        support = tuple(int(q) for q in self.support)
        object.__setattr__(self, "support", support)
        if len(set(support)) != len(support) or not support:
            raise ValueError(f"support must be non-empty distinct qubits: {support}")
        if any(q < 0 for q in support):
            raise ValueError(f"negative qubit index in {support}")
        dim = 2 ** len(support)
        m = _as_matrix(self.matrix, self.policy.exact)
        if m.shape != (dim, dim):
            raise ValueError(f"matrix shape {m.shape} != ({dim}, {dim})")
        if self.policy.exact:
            if not all(m[i, j] == m[j, i] for i in range(dim) for j in range(dim)):
                raise ValueError("term is not symmetric (exact mode)")
        else:
            if np.max(np.abs(m - m.conj().T)) > self.policy.tau_herm:
                raise ValueError("term is not Hermitian within tolerance")
            m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        mask = 0
        for q in support:
            mask |= 1 << q
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "_real", self._compute_real())

    def _compute_real(self) -> bool:
        if self.policy.exact:
            return True
        return bool(np.max(np.abs(self.matrix.imag)) <= self.policy.tau_zero)

    @property
    def is_real(self) -> bool:
        return self._real

    @property
    def width(self) -> int:
        return len(self.support)

    def spectral_norm(self) -> float:
        m = self.matrix
        if self.policy.exact:
            m = np.array([[float(v) for v in row] for row in m])
        return float(np.linalg.norm(m, 2))

    def local_index(self, x: int) -> int:
        """Project the support bits of x onto the local row/column index."""
        idx = 0
        for q in self.support:
            idx = (idx << 1) | ((x >> q) & 1)
        return idx

    def embed_state(self, base: int, local: int) -> int:
        """Write a local index back into the support bits of base."""
        k = len(self.support)
        y = base
        for j, q in enumerate(self.support):
            bit = (local >> (k - 1 - j)) & 1
            y = (y | (1 << q)) if bit else (y & ~(1 << q))
        return y

    @classmethod
    def from_pauli(cls, paulis: str, qubits: Sequence[int], coeff: float = 1.0,
                   policy: NumericPolicy = FLOAT_POLICY) -> "LocalTerm":
        """Convenience constructor from a Pauli string, e.g. ("XX", (0, 1))."""
        if len(paulis) != len(qubits):
            raise ValueError("pauli string length must match qubit count")
        m = np.array([[coeff]], dtype=complex)
        for p in paulis:
            m = np.kron(m, _PAULI[p.upper()])
        return cls(tuple(qubits), m, policy)


class LocalHamiltonian:
    """Sum of k-local Hermitian terms with sparse row/column query access.

    Rows are enumerable without scanning 2^n entries: each term contributes
    at most 2^k candidate columns per row, so any row/column has at most
    d = 2^k * m nonzeros.
    """

    def __init__(self, qubits: int, terms: Sequence[LocalTerm],
                 policy: NumericPolicy | None = None):
        if not (0 < qubits <= MAX_QUBITS):
            raise WidthError(f"qubit count {qubits} outside 1..{MAX_QUBITS}")
        terms = tuple(terms)
        if policy is None:
            policy = terms[0].policy if terms else FLOAT_POLICY
        for t in terms:
            if t.policy.mode != policy.mode:
                raise ValueError("terms disagree with the Hamiltonian numeric mode")
            if max(t.support) >= qubits:
                raise ValueError(f"term support {t.support} outside {qubits} qubits")
        self.qubits = qubits
        self.terms = terms
        self.policy = policy
        self.locality = max((t.width for t in terms), default=0)
        self.sparsity_bound = (2 ** self.locality) * len(terms)
        self.norm_bound = float(sum(t.spectral_norm() for t in terms))
        self.is_real = all(t.is_real for t in terms)

    def __repr__(self):
        return (f"LocalHamiltonian(qubits={self.qubits}, terms={len(self.terms)}, "
                f"locality={self.locality})")

    def _zero(self):
        return Fraction(0) if self.policy.exact else 0.0

    def _maybe_real(self, v):
        if self.policy.exact or not isinstance(v, complex):
            return v
        return v.real if self.is_real else v

    def entry(self, x: int, y: int):
        """<x|H|y>, the summed matrix element over all terms."""
        check_state(x, self.qubits)
        check_state(y, self.qubits)
        acc = self._zero()
        for t in self.terms:
            if (x & ~t.mask) != (y & ~t.mask):
                continue
            acc += t.matrix[t.local_index(x), t.local_index(y)]
        return self._maybe_real(acc)

    def row_nonzeros(self, x: int) -> list[tuple[int, object]]:
        """All (y, <x|H|y>) with a nonzero summed value, in ascending y order.

        Duplicate contributions from overlapping terms are summed before the
        zero filter is applied.
        """
        check_state(x, self.qubits)
        acc: dict[int, object] = {}
        for t in self.terms:
            r = t.local_index(x)
            row = t.matrix[r]
            for c in range(len(row)):
                v = row[c]
                if v == 0:
                    continue
                y = t.embed_state(x, c)
                if y in acc:
                    acc[y] = acc[y] + v
                else:
                    acc[y] = v
        out = []
        for y in sorted(acc):
            v = acc[y]
            if not self.policy.is_zero(v):
                out.append((y, self._maybe_real(v)))
        return out

    def column_nonzeros(self, y: int) -> list[tuple[int, object]]:
        """All (x, <x|H|y>) nonzero; via Hermiticity this is the conjugated row."""
        if self.policy.exact or self.is_real:
            return self.row_nonzeros(y)
        return [(x, np.conj(v)) for x, v in self.row_nonzeros(y)]

    def shifted(self, c) -> "LocalHamiltonian":
        """H + c*I, realized by appending an identity term on qubit 0."""
        if self.policy.exact:
            ident = np.array([[Fraction(c), Fraction(0)],
                              [Fraction(0), Fraction(c)]], dtype=object)
        else:
            ident = np.eye(2, dtype=complex) * c
        term = LocalTerm((0,), ident, self.policy)
        return LocalHamiltonian(self.qubits, self.terms + (term,), self.policy)


@dataclass(frozen=True, eq=False)
class AmplitudeOracle:
    """Callable amplitude access C(x) for a succinct state, defined up to a
    common factor. Evaluation must be deterministic and re-entrant."""

    evaluate_fn: Callable[[int], object]
    qubits: int
    descriptor: dict | None = None
    policy: NumericPolicy = FLOAT_POLICY

    def __call__(self, x: int):
        return self.evaluate_fn(x)

    def in_support(self, x: int) -> bool:
        """supp(x): the amplitude is nonzero within the policy tolerance."""
        return not self.policy.is_zero(self.evaluate_fn(x))


def realify(H: LocalHamiltonian) -> LocalHamiltonian:
    """Complex-to-real reduction by one ancilla qubit.

    Returns the (n+1)-qubit real symmetric Hamiltonian H_R (x) I + H_I (x) J,
    J = [[0,-1],[1,0]], whose spectrum is the spectrum of H with every
    multiplicity doubled. A real H maps to H (x) I (same terms, one more qubit).
    """
    if H.policy.exact:
        return LocalHamiltonian(H.qubits + 1, H.terms, H.policy)
    anc = H.qubits
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    new_terms: list[LocalTerm] = []
    for t in H.terms:
        re = t.matrix.real
        im = t.matrix.imag
        if np.max(np.abs(re)) > 0.0:
            new_terms.append(LocalTerm(t.support, re, H.policy))
        if np.max(np.abs(im)) > H.policy.tau_zero:
            new_terms.append(LocalTerm(t.support + (anc,), np.kron(im, J), H.policy))
    return LocalHamiltonian(H.qubits + 1, new_terms, H.policy)


def realify_state(phi: AmplitudeOracle) -> AmplitudeOracle:
    """Companion state reduction: C'(x.0) = Re C(x), C'(x.1) = Im C(x), the
    ancilla bit sitting at position n. Maps eigenstates of H to eigenstates of
    realify(H) with the same eigenvalue."""
    n = phi.qubits
    mask = (1 << n) - 1
    fn = phi.evaluate_fn

    def evaluate(xp: int):
        v = complex(fn(xp & mask))
        return v.imag if (xp >> n) & 1 else v.real

    desc = None
    if phi.descriptor is not None:
        desc = {"kind": "realified", "inner": phi.descriptor}
    return AmplitudeOracle(evaluate, n + 1, desc, phi.policy)


# --- instance file (JSON) schema helpers -----------------------------------

def hamiltonian_to_dict(H: LocalHamiltonian) -> dict:
    if H.policy.exact:
        raise ValueError("exact-mode Hamiltonians are not JSON-serializable")
    terms = []
    for t in H.terms:
        terms.append({
            "support": list(t.support),
            "matrix_re": t.matrix.real.tolist(),
            "matrix_im": t.matrix.imag.tolist(),
        })
    return {"qubits": H.qubits, "locality": H.locality, "terms": terms}


def hamiltonian_from_dict(d: dict) -> LocalHamiltonian:
    qubits = int(d["qubits"])
    terms = []
    for td in d["terms"]:
        m = np.array(td["matrix_re"], dtype=float) + 1j * np.array(td["matrix_im"], dtype=float)
        terms.append(LocalTerm(tuple(td["support"]), m))
    H = LocalHamiltonian(qubits, terms)
    declared = int(d.get("locality", H.locality))
    if H.locality > declared:
        raise ValueError(f"declared locality {declared} below actual {H.locality}")
    return H


def save_hamiltonian(H: LocalHamiltonian, path) -> None:
    with open(path, "w") as f:
        json.dump(hamiltonian_to_dict(H), f, sort_keys=True)


def load_hamiltonian(path) -> LocalHamiltonian:
    with open(path) as f:
        return hamiltonian_from_dict(json.load(f))
