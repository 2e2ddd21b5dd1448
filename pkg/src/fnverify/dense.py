"""Brute-force dense ground truth for desk-scale checks (n <= 12): full
materialization, exact diagonalization, matrix exponentials, and the
lemma-level property suite run against independently built dense matrices.

The dense fixed-node / generator constructions here are vectorized formulas,
deliberately separate from the lazy per-entry code paths they are used to
check. All dense work is double precision; exact-mode inputs are converted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import AmplitudeOracle, LocalHamiltonian, NumericPolicy
from .fixed_node import FixedNodeView, GeneratorView

DENSE_CAP = 4096      # largest |S| we will materialize
EXPM_CAP = 256
TAU_SUPP = 1e-10      # support cutoff when an eigenvector becomes an oracle


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Dense square operator over an explicit basis of computational states."""

    matrix: np.ndarray
    basis: np.ndarray           # basis[i] = the state labelling row/column i

    def __post_init__(self):
        m = np.asarray(self.matrix)
        b = np.asarray(self.basis, dtype=np.int64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent dense shapes {m.shape} / {b.shape}")
        if m.shape[0] > DENSE_CAP:
            raise ValueError(f"dense dimension {m.shape[0]} exceeds {DENSE_CAP}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _to_float_matrix(m: np.ndarray) -> np.ndarray:
    if m.dtype == object:
        return np.array([[complex(v) for v in row] for row in m], dtype=complex)
    return m


def _dense_from_terms(H: LocalHamiltonian) -> np.ndarray:
    """Assemble the full 2^n matrix directly from the term tensors; this is
    the independent route against which the sparse query path is tested."""
    n = H.qubits
    if n > 12:
        raise ValueError(f"dense oracle capped at 12 qubits, got {n}")
    N = 1 << n
    out = np.zeros((N, N), dtype=complex)
    for t in H.terms:
        k = t.width
        off = [q for q in range(n) if q not in t.support]
        bases = np.zeros(1 << len(off), dtype=np.int64)
        for i in range(bases.shape[0]):
            b = 0
            for j, q in enumerate(off):
                if (i >> j) & 1:
                    b |= 1 << q
            bases[i] = b
        pats = np.array([t.embed_state(0, c) for c in range(1 << k)],
                        dtype=np.int64)
        mat = _to_float_matrix(t.matrix)
        for r in range(1 << k):
            rows = bases | pats[r]
            for c in range(1 << k):
                out[rows, bases | pats[c]] += mat[r, c]
    return out


def materialize(obj, S=None) -> DenseOperator:
    """Entrywise-faithful dense copy of a LocalHamiltonian, FixedNodeView, or
    GeneratorView, restricted to the basis list S (full space when omitted;
    views require S unless their oracle support is scanned by the caller)."""
    if isinstance(obj, LocalHamiltonian):
        full = _dense_from_terms(obj)
        if obj.is_real or obj.policy.exact:
            full = full.real
        if S is None:
            basis = np.arange(1 << obj.qubits, dtype=np.int64)
            if basis.shape[0] > DENSE_CAP:
                raise ValueError("full space exceeds the dense cap; pass S")
            return DenseOperator(full, basis)
        basis = np.asarray(sorted(S), dtype=np.int64)
        return DenseOperator(full[np.ix_(basis, basis)], basis)

    if isinstance(obj, FixedNodeView):
        basis = np.asarray(sorted(S if S is not None else support_set(obj.oracle)),
                           dtype=np.int64)
        if basis.shape[0] > DENSE_CAP:
            raise ValueError("support exceeds the dense cap")
        pos = {int(x): i for i, x in enumerate(basis)}
        F = np.zeros((len(basis), len(basis)))
        for i, x in enumerate(basis):
            _, f_diag, minus = obj.scan_row(int(x))
            F[i, i] = float(f_diag)
            for y, h, _ in minus:
                j = pos.get(int(y))
                if j is not None:
                    F[i, j] = float(h)
        return DenseOperator(F, basis)

    if isinstance(obj, GeneratorView):
        basis = np.asarray(sorted(S if S is not None else support_set(obj.oracle)),
                           dtype=np.int64)
        if basis.shape[0] > DENSE_CAP:
            raise ValueError("support exceeds the dense cap")
        pos = {int(x): i for i, x in enumerate(basis)}
        G = np.zeros((len(basis), len(basis)))
        for j, x in enumerate(basis):
            col = obj.column(int(x))
            G[j, j] = float(col.diag)
            for y, r in col.neighbors:
                i = pos.get(int(y))
                if i is not None:
                    G[i, j] = float(r)
        return DenseOperator(G, basis)

    raise TypeError(f"cannot materialize {type(obj).__name__}")


def support_set(oracle: AmplitudeOracle) -> list[int]:
    """Scan supp(phi) exhaustively (oracle width must be desk-scale)."""
    if oracle.qubits > 12:
        raise ValueError("support scan capped at 12 qubits")
    return [x for x in range(1 << oracle.qubits) if oracle.in_support(x)]


def ground_energy(D: DenseOperator, herm_tol: float = 1e-10):
    """Minimum eigenvalue and a unit eigenvector of a Hermitian dense operator."""
    M = D.matrix
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.conj().T)) > herm_tol * scale:
        raise ValueError("operator is not Hermitian within tolerance")
    vals, vecs = np.linalg.eigh(M)
    lam = float(vals[0])
    psi = vecs[:, 0]
    resid = float(np.linalg.norm(M @ psi - lam * psi))
    norm = float(np.linalg.norm(M, 2)) if D.dim else 0.0
    if resid > 1e-10 * max(norm, 1.0):
        raise ArithmeticError(f"eigensolver residual {resid:.3e} out of spec")
    return lam, psi


def matrix_exponential(D: DenseOperator, s: float) -> DenseOperator:
    """exp(D*s); capped small because it only backs the marginal tests."""
    if D.dim > EXPM_CAP:
        raise ValueError(f"matrix exponential capped at dim {EXPM_CAP}")
    return DenseOperator(scipy.linalg.expm(D.matrix * s), D.basis)


# -- independent dense constructions (the second route of the dual checks) --

def dense_fixed_node(H_S: np.ndarray, phi: np.ndarray,
                     tau_zero: float = 1e-12) -> np.ndarray:
    """Vectorized fixed-node matrix from a dense restricted Hamiltonian and a
    regularized amplitude vector: zero out positive sign-product off-diagonals
    and fold their weight onto the diagonal."""
    H_S = np.asarray(H_S, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(phi == 0.0):
        raise ValueError("phi must be regularized (no zero entries)")
    q = H_S * (phi[None, :] / phi[:, None])          # q[x,y] = H_xy phi_y/phi_x
    off = ~np.eye(len(phi), dtype=bool)
    splus = (q > tau_zero) & off
    F = np.where(splus, 0.0, H_S)
    np.fill_diagonal(F, np.diagonal(H_S) + np.where(splus, q, 0.0).sum(axis=1))
    return F


def dense_generator(F: np.ndarray, phi: np.ndarray, shift=None) -> np.ndarray:
    """Rate matrix <y|G|x> = -F_yx phi_y/phi_x (+ shift on the diagonal)."""
    phi = np.asarray(phi, dtype=float)
    G = -np.asarray(F, dtype=float) * (phi[:, None] / phi[None, :])
    if shift is not None:
        G = G + float(shift) * np.eye(len(phi))
    return G


def ground_state_oracle(H: LocalHamiltonian, tau_supp: float = TAU_SUPP):
    """Dense ground state packaged as a lookup-table amplitude oracle with the
    |psi_x| > tau_supp support cutoff. Returns (oracle, energy, full vector)."""
    D = materialize(H)
    lam, psi = ground_energy(D)
    if np.max(np.abs(psi.imag if np.iscomplexobj(psi) else 0.0)) > 1e-12:
        raise ValueError("ground state is not real; realify the Hamiltonian")
    psi = np.real(psi)
    table = {int(x): float(psi[i]) for i, x in enumerate(D.basis)
             if abs(psi[i]) > tau_supp}
    entries = {format(x, f"0{H.qubits}b"): [v, 0.0] for x, v in table.items()}
    descriptor = {"kind": "lookup_table", "qubits": H.qubits, "entries": entries}

    def evaluate(x: int):
        return table.get(int(x), 0.0)

    oracle = AmplitudeOracle(evaluate, H.qubits, descriptor, H.policy)
    return oracle, lam, psi


# -- the lemma suite ---------------------------------------------------------

@dataclass(frozen=True)
class LemmaCheck:
    name: str
    passed: bool
    residual: float
    skipped: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "residual": float(self.residual), "skipped": bool(self.skipped)}


@dataclass(frozen=True)
class LemmaReport:
    checks: tuple[LemmaCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed or c.skipped for c in self.checks)

    def __getitem__(self, name: str) -> LemmaCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed,
                "checks": [c.to_dict() for c in self.checks]}


def check_lemma_suite(H: LocalHamiltonian, oracle: AmplitudeOracle,
                      assume_ground: bool | None = None) -> LemmaReport:
    """Run every lemma-level structural claim against dense ground truth:
    fixed-node symmetry, sign-conjugated stoquasticity, F phi = H phi,
    energy domination, submatrix interlacing, and (when phi is a ground state
    of H_S) energy equality, shifted-generator legality, stationarity of
    |phi|^2, and the generator/fixed-node spectrum match."""
    S = support_set(oracle)
    if not S:
        raise ValueError("oracle support is empty")
    full = materialize(H)
    H_S = materialize(H, S)
    phi = np.array([float(oracle(x)) for x in H_S.basis])
    Hn = max(float(np.linalg.norm(H_S.matrix, 2)), 1e-30)
    pn = float(np.linalg.norm(phi))
    tau_zero = H.policy.tau_zero

    F = dense_fixed_node(np.real(H_S.matrix), phi, tau_zero)
    checks: list[LemmaCheck] = []

    sym = float(np.max(np.abs(F - F.T))) if len(S) > 1 else 0.0
    checks.append(LemmaCheck("fn_symmetric", sym <= 1e-12, sym))

    s = np.sign(phi)
    conj = s[:, None] * F * s[None, :]
    off = ~np.eye(len(phi), dtype=bool)
    worst = float(np.max(conj[off])) if len(S) > 1 else 0.0
    checks.append(LemmaCheck("fn_sign_conjugated", worst <= 1e-12, worst))

    fix = float(np.linalg.norm((F - np.real(H_S.matrix)) @ phi))
    checks.append(LemmaCheck("fn_fixes_state", fix <= 1e-9 * Hn * pn, fix))

    lam_F, _ = ground_energy(DenseOperator(F, H_S.basis))
    lam_HS, _ = ground_energy(H_S)
    gap = lam_HS - lam_F
    checks.append(LemmaCheck("fn_energy_dominates", gap <= 1e-9, max(gap, 0.0)))

    lam_H, _ = ground_energy(full)
    lam_max_H = float(np.linalg.eigvalsh(full.matrix)[-1])
    lam_max_HS = float(np.linalg.eigvalsh(H_S.matrix)[-1])
    inter = max(lam_H - lam_HS, lam_max_HS - lam_max_H)
    checks.append(LemmaCheck("submatrix_interlacing", inter <= 1e-9,
                             max(inter, 0.0)))

    if assume_ground is None:
        resid = float(np.linalg.norm(np.real(H_S.matrix) @ phi - lam_HS * phi))
        is_ground = resid <= 1e-10 * Hn * pn
    else:
        is_ground = assume_ground

    if not is_ground:
        for name in ("fn_energy_equal", "generator_legal", "stationary",
                     "spectrum_match"):
            checks.append(LemmaCheck(name, True, 0.0, skipped=True))
        return LemmaReport(tuple(checks))

    eq = abs(lam_F - lam_HS)
    checks.append(LemmaCheck("fn_energy_equal", eq <= 1e-9, eq))

    Gt = dense_generator(F, phi, shift=lam_F)
    col = float(np.max(np.abs(Gt.sum(axis=0)))) if len(S) else 0.0
    neg = float(np.min(Gt[off])) if len(S) > 1 else 0.0
    legal_resid = max(col, max(-neg, 0.0))
    checks.append(LemmaCheck("generator_legal",
                             col <= 1e-9 and neg >= -1e-12, legal_resid))

    pi = phi ** 2 / (pn ** 2)
    stat = float(np.linalg.norm(Gt @ pi))
    checks.append(LemmaCheck("stationary", stat <= 1e-9, stat))

    ev_g = np.linalg.eigvals(Gt)
    ev_ref = np.linalg.eigvalsh(lam_F * np.eye(len(phi)) - F)
    imag = float(np.max(np.abs(ev_g.imag)))
    diff = float(np.max(np.abs(np.sort(ev_g.real) - np.sort(ev_ref))))
    spec_resid = max(diff, imag)
    checks.append(LemmaCheck("spectrum_match", spec_resid <= 1e-7, spec_resid))

    return LemmaReport(tuple(checks))
