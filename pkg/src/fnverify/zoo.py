"""Instance and witness generation: frustration-free product-state Yes
instances, clock-construction Yes instances built from classical reversible
circuits, dense-certified No instances, adversarial witness families, and the
JSON descriptor serialization for every oracle family.

Generation-side randomness comes from numpy Generators; the protocol's own
randomness never flows through here.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import (FLOAT_POLICY, AmplitudeOracle, LocalHamiltonian, LocalTerm,
                   NumericPolicy, check_state, hamiltonian_from_dict,
                   hamiltonian_to_dict, realify_state)
from .dense import ground_energy, ground_state_oracle, materialize
from .verifier import GAP_FLOOR, Instance, Witness

PRODUCT = "product"
BASIS_SUPERPOSITION = "basis_superposition"
HISTORY_STATE = "history_state"
LOOKUP_TABLE = "lookup_table"

_GATE_ARITY = {"not": 1, "cnot": 2, "toffoli": 3}


@dataclass(frozen=True, eq=False)
class ReversibleCircuit:
    """Classical reversible circuit over `wires` bits: NOT/CNOT/Toffoli gates
    applied in order. Each gate is its own inverse, so uncomputation applies
    the prefix in reverse order."""

    wires: int
    gates: tuple[tuple[str, tuple[int, ...]], ...]
    output_wire: int = 0

    def __post_init__(self):
        gates = tuple((str(name).lower(), tuple(int(w) for w in ws))
                      for name, ws in self.gates)
        object.__setattr__(self, "gates", gates)
        for name, ws in gates:
            if name not in _GATE_ARITY:
                raise ValueError(f"unknown gate {name!r}")
            if len(ws) != _GATE_ARITY[name] or len(set(ws)) != len(ws):
                raise ValueError(f"gate {name} needs {_GATE_ARITY[name]} "
                                 f"distinct wires, got {ws}")
            if any(w < 0 or w >= self.wires for w in ws):
                raise ValueError(f"gate wires {ws} outside 0..{self.wires - 1}")
        if not (0 <= self.output_wire < self.wires):
            raise ValueError("output wire out of range")

    @property
    def T(self) -> int:
        return len(self.gates)

    @staticmethod
    def _apply_gate(name: str, ws: tuple[int, ...], x: int) -> int:
        if name == "not":
            return x ^ (1 << ws[0])
        if name == "cnot":
            c, t = ws
            return x ^ (1 << t) if (x >> c) & 1 else x
        a, b, t = ws
        return x ^ (1 << t) if ((x >> a) & 1) and ((x >> b) & 1) else x

    def apply_prefix(self, x: int, upto: int) -> int:
        """Run the first `upto` gates forward on basis state x."""
        for name, ws in self.gates[:upto]:
            x = self._apply_gate(name, ws, x)
        return x

    def apply(self, x: int) -> int:
        return self.apply_prefix(x, self.T)

    def uncompute_prefix(self, x: int, upto: int) -> int:
        """Invert the first `upto` gates (each gate is self-inverse)."""
        for name, ws in reversed(self.gates[:upto]):
            x = self._apply_gate(name, ws, x)
        return x

    def to_dict(self) -> dict:
        return {"wires": self.wires, "output_wire": self.output_wire,
                "gates": [[name, list(ws)] for name, ws in self.gates]}

    @classmethod
    def from_dict(cls, d: dict) -> "ReversibleCircuit":
        return cls(int(d["wires"]),
                   tuple((g[0], tuple(g[1])) for g in d["gates"]),
                   int(d.get("output_wire", 0)))


# --- oracle descriptors ------------------------------------------------------

def _c2pair(v) -> list[float]:
    v = complex(v)
    return [float(v.real), float(v.imag)]


def _pair2c(p):
    if isinstance(p, (int, float)):
        return complex(p, 0.0)
    return complex(float(p[0]), float(p[1]))


def product_oracle(amplitudes, policy: NumericPolicy = FLOAT_POLICY) -> AmplitudeOracle:
    """Product state oracle: C(x) = prod_i amp_i[bit_i(x)]; every per-qubit
    pair must be nonzero as a vector."""
    amps = [(complex(a0), complex(a1)) for a0, a1 in amplitudes]
    n = len(amps)
    if n == 0:
        raise ValueError("need at least one qubit")
    for i, (a0, a1) in enumerate(amps):
        if a0 == 0 and a1 == 0:
            raise ValueError(f"qubit {i} has a zero amplitude pair")
    all_real = all(a.imag == 0.0 for pair in amps for a in pair)
    if all_real:
        ramps = [(p[0].real, p[1].real) for p in amps]

        def evaluate(x: int) -> float:
            acc = 1.0
            for i in range(n):
                acc *= ramps[i][(x >> i) & 1]
            return acc
    else:
        def evaluate(x: int) -> complex:
            acc = 1.0 + 0.0j
            for i in range(n):
                acc *= amps[i][(x >> i) & 1]
            return acc

    desc = {"kind": PRODUCT,
            "amplitudes": [[_c2pair(a0), _c2pair(a1)] for a0, a1 in amps]}
    return AmplitudeOracle(evaluate, n, desc, policy)


def basis_superposition_oracle(n: int, terms,
                               policy: NumericPolicy = FLOAT_POLICY) -> AmplitudeOracle:
    """Sparse superposition: explicit (state, amplitude) pairs, zero elsewhere."""
    table = {int(check_state(x, n)): complex(v) for x, v in terms}
    all_real = all(v.imag == 0.0 for v in table.values())
    rtable = {x: v.real for x, v in table.items()}

    def evaluate(x: int):
        if all_real:
            return rtable.get(int(x), 0.0)
        return table.get(int(x), 0.0 + 0.0j)

    desc = {"kind": BASIS_SUPERPOSITION, "qubits": n,
            "terms": [{"state": format(x, f"0{n}b"), "amp": _c2pair(v)}
                      for x, v in sorted(table.items())]}
    return AmplitudeOracle(evaluate, n, desc, policy)


def lookup_oracle(n: int, entries: dict,
                  policy: NumericPolicy = FLOAT_POLICY) -> AmplitudeOracle:
    """Explicit lookup table keyed by basis state; zero off the table."""
    table = {int(x): float(v) for x, v in entries.items()}

    def evaluate(x: int) -> float:
        return table.get(int(x), 0.0)

    desc = {"kind": LOOKUP_TABLE, "qubits": n,
            "entries": {format(x, f"0{n}b"): [v, 0.0]
                        for x, v in sorted(table.items())}}
    return AmplitudeOracle(evaluate, n, desc, policy)


def history_oracle(circuit: ReversibleCircuit, ancilla_wires, coin_wires,
                   witness_wires, witness_bits: str,
                   policy: NumericPolicy = FLOAT_POLICY) -> AmplitudeOracle:
    """Amplitude oracle of the clock construction's history state, up to the
    common factor: C(data.clock) = 1 iff the clock is a valid unary pattern
    for some step t and uncomputing the first t gates lands on an initial
    configuration (ancillas zero, witness as declared, any coin string)."""
    p = circuit.wires
    T = circuit.T
    anc = tuple(int(w) for w in ancilla_wires)
    coin = tuple(int(w) for w in coin_wires)
    wit = tuple(int(w) for w in witness_wires)
    claimed = set(anc) | set(coin) | set(wit)
    if len(claimed) != p or claimed != set(range(p)):
        raise ValueError("wire partition must cover every circuit wire once")
    if len(witness_bits) != len(wit):
        raise ValueError("witness bits length mismatch")
    wmask = 0
    for bit, w in zip(witness_bits, wit):
        if bit == "1":
            wmask |= 1 << w
    amask = 0
    for w in anc:
        amask |= 1 << w
    witmask = 0
    for w in wit:
        witmask |= 1 << w
    n = p + T
    dmask = (1 << p) - 1

    def evaluate(x: int) -> float:
        clock = x >> p
        t = bin(clock).count("1")
        if clock != (1 << t) - 1:       # not a unary pattern
            return 0.0
        v = circuit.uncompute_prefix(x & dmask, t)
        if v & amask:
            return 0.0
        if (v & witmask) != wmask:
            return 0.0
        return 1.0

    desc = {"kind": HISTORY_STATE, "circuit": circuit.to_dict(),
            "ancilla_wires": list(anc), "coin_wires": list(coin),
            "witness_wires": list(wit), "witness": witness_bits}
    return AmplitudeOracle(evaluate, n, desc, policy)


def oracle_from_descriptor(desc: dict,
                           policy: NumericPolicy = FLOAT_POLICY) -> AmplitudeOracle:
    """Rebuild an oracle from its serialized descriptor; evaluating the result
    reproduces the original amplitudes identically."""
    kind = desc["kind"]
    if kind == PRODUCT:
        return product_oracle([(_pair2c(p0), _pair2c(p1))
                               for p0, p1 in desc["amplitudes"]], policy)
    if kind == BASIS_SUPERPOSITION:
        n = int(desc["qubits"])
        terms = [(int(t["state"], 2), _pair2c(t["amp"])) for t in desc["terms"]]
        return basis_superposition_oracle(n, terms, policy)
    if kind == LOOKUP_TABLE:
        n = int(desc["qubits"])
        entries = {int(k, 2): _pair2c(v).real for k, v in desc["entries"].items()}
        return lookup_oracle(n, entries, policy)
    if kind == HISTORY_STATE:
        return history_oracle(ReversibleCircuit.from_dict(desc["circuit"]),
                              desc["ancilla_wires"], desc["coin_wires"],
                              desc["witness_wires"], desc["witness"], policy)
    if kind == "realified":
        return realify_state(oracle_from_descriptor(desc["inner"], policy))
    raise ValueError(f"unknown oracle kind {kind!r}")


# --- Yes instances -----------------------------------------------------------

def make_product_yes(n: int, local_states=None, rng=None,
                     extra_projectors: int = 0):
    """Frustration-free Yes instance: H = sum_i (I - |psi_i><psi_i|) plus
    optional random 2-local projectors annihilating the product state.
    lambda(H) = 0 with the product state as ground state; b is the dense
    second eigenvalue for n <= 8 (0.5 otherwise)."""
    rng = rng or np.random.default_rng(0)
    if local_states is None:
        # components bounded away from zero so amplitude ratios stay tame
        signs = rng.choice([-1.0, 1.0], size=(n, 2))
        mags = rng.uniform(0.25, 1.0, size=(n, 2))
        local_states = (signs * mags).tolist()
    if len(local_states) != n:
        raise ValueError("need one local state per qubit")
    psis = []
    for i, (a0, a1) in enumerate(local_states):
        v = np.array([a0, a1], dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError(f"zero local amplitude pair at qubit {i}")
        psis.append(v / norm)

    terms = []
    for i, psi in enumerate(psis):
        proj = np.eye(2) - np.outer(psi, psi)
        terms.append(LocalTerm((i,), proj))
    for _ in range(extra_projectors):
        i, j = sorted(rng.choice(n, size=2, replace=False).tolist())
        target = np.kron(psis[i], psis[j])
        v = rng.normal(size=4)
        v -= (target @ v) * target
        nv = np.linalg.norm(v)
        if nv < 1e-9:
            continue
        v /= nv
        terms.append(LocalTerm((i, j), np.outer(v, v)))

    H = LocalHamiltonian(n, terms)
    if n <= 8:
        vals = np.linalg.eigvalsh(materialize(H).matrix)
        if abs(vals[0]) > 1e-9:
            raise ArithmeticError(f"product instance is not frustration-free: "
                                  f"lambda = {vals[0]:.3e}")
        b = float(vals[1])
    else:
        b = 0.5
    inst = Instance(H, a=0.0, b=b)

    oracle = product_oracle([(p[0], p[1]) for p in psis])
    x_in = 0
    for i, psi in enumerate(psis):
        if abs(psi[1]) > abs(psi[0]):
            x_in |= 1 << i
    return inst, Witness(0.0, oracle, x_in)


def circuit_to_hamiltonian(circuit: ReversibleCircuit, r: int,
                           witness_bits: str,
                           include_output_penalty: bool = True):
    """Clock-construction Yes instance from a perfect-completeness reversible
    circuit: a unary (domain-wall) clock of T+1 steps over T extra qubits,
    weight-1 clock-validity, input, propagation, and (optionally) output
    penalty terms. The witness oracle is the history state; for an accepting
    circuit the history state has energy zero.

    Wires are partitioned ancillas | coins (r of them, r even) | witness, in
    that order; the clock qubits sit above the data wires.
    """
    if r % 2 != 0 or r < 0:
        raise ValueError("coin count r must be even and non-negative")
    p = circuit.wires
    T = circuit.T
    if T < 1:
        raise ValueError("circuit must have at least one gate")
    w_len = len(witness_bits)
    if w_len + r > p:
        raise ValueError("witness and coin wires exceed the circuit width")
    anc = tuple(range(0, p - r - w_len))
    coin = tuple(range(p - r - w_len, p - w_len))
    wit = tuple(range(p - w_len, p))
    n = p + T

    E = [[np.zeros((2, 2)) for _ in range(2)] for _ in range(2)]
    for a in range(2):
        for b in range(2):
            E[a][b][a, b] = 1.0
    P0, P1 = E[0][0], E[1][1]
    minus = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])

    terms = []
    # clock validity: forbid the broken-domain pattern c_j=0, c_{j+1}=1
    for j in range(1, T):
        terms.append(LocalTerm((p + j - 1, p + j), np.kron(P0, P1)))
    # input penalties at step 0 (first clock qubit still 0)
    for a in anc:
        terms.append(LocalTerm((a, p), np.kron(P1, P0)))
    for c in coin:
        terms.append(LocalTerm((c, p), np.kron(minus, P0)))
    if include_output_penalty:
        terms.append(LocalTerm((circuit.output_wire, p + T - 1),
                               np.kron(P0, P1)))
    # propagation
    for t in range(1, T + 1):
        name, ws = circuit.gates[t - 1]
        g = len(ws)
        U = np.zeros((1 << g, 1 << g))
        for local_in in range(1 << g):
            x = 0
            for j, wq in enumerate(ws):
                if (local_in >> (g - 1 - j)) & 1:
                    x |= 1 << wq
            y = ReversibleCircuit._apply_gate(name, ws, x)
            local_out = 0
            for j, wq in enumerate(ws):
                local_out = (local_out << 1) | ((y >> wq) & 1)
            U[local_out, local_in] = 1.0
        if T == 1:
            cq = (p,)
            prev, cur = 0, 1
        elif t == 1:
            cq = (p, p + 1)
            prev, cur = 0b00, 0b10
        elif t == T:
            cq = (p + T - 2, p + T - 1)
            prev, cur = 0b10, 0b11
        else:
            cq = (p + t - 2, p + t - 1, p + t)
            prev, cur = 0b100, 0b110
        dim = 1 << len(cq)
        Epp = np.zeros((dim, dim)); Epp[prev, prev] = 1.0
        Ecc = np.zeros((dim, dim)); Ecc[cur, cur] = 1.0
        Ecp = np.zeros((dim, dim)); Ecp[cur, prev] = 1.0
        Epc = np.zeros((dim, dim)); Epc[prev, cur] = 1.0
        Ig = np.eye(1 << g)
        mat = (0.5 * np.kron(Epp + Ecc, Ig)
               - 0.5 * np.kron(Ecp, U) - 0.5 * np.kron(Epc, U.T))
        terms.append(LocalTerm(cq + tuple(ws), mat))

    H = LocalHamiltonian(n, terms)
    oracle = history_oracle(circuit, anc, coin, wit, witness_bits)

    if n <= 12:
        vals = np.linalg.eigvalsh(materialize(H).matrix)
        lam0, lam1 = float(vals[0]), float(vals[1])
        if abs(lam0) > 1e-9:
            raise ArithmeticError(
                f"clock Hamiltonian is not frustration-free (lambda={lam0:.3e}); "
                "is the circuit perfectly complete?")
        b = lam1
    else:
        b = 0.25
    inst = Instance(H, a=0.0, b=b)

    x_in = 0
    for bit, wq in zip(witness_bits, wit):
        if bit == "1":
            x_in |= 1 << wq
    return inst, Witness(0.0, oracle, x_in)


# --- No instances and adversaries -------------------------------------------

def make_no_instance(n: int, epsilon_target: float, rng=None,
                     m_terms: int | None = None) -> Instance:
    """Random real 2-local Hamiltonian shifted so its dense-certified ground
    energy is exactly epsilon_target; promise (a, b) = (0, epsilon_target)."""
    if n > 10:
        raise ValueError("No-instance generation needs the dense oracle (n <= 10)")
    if epsilon_target < GAP_FLOOR:
        raise ValueError(f"epsilon {epsilon_target!r} below the promise floor")
    rng = rng or np.random.default_rng(0)
    m = m_terms if m_terms is not None else max(n, 2)
    terms = []
    for _ in range(m):
        if n == 1:
            a = rng.normal(size=(2, 2))
            terms.append(LocalTerm((0,), (a + a.T) / 2))
        else:
            i, j = sorted(rng.choice(n, size=2, replace=False).tolist())
            a = rng.normal(size=(4, 4))
            terms.append(LocalTerm((i, j), (a + a.T) / 2))
    H0 = LocalHamiltonian(n, terms)
    lam0, _ = ground_energy(materialize(H0))
    H = H0.shifted(epsilon_target - lam0)
    lam, _ = ground_energy(materialize(H))
    if abs(lam - epsilon_target) > 1e-9:
        raise ArithmeticError(f"certification failed: lambda={lam!r}")
    return Instance(H, a=0.0, b=float(epsilon_target))


def _argmax_state(oracle: AmplitudeOracle) -> int:
    best, best_mag = 0, -1.0
    for x in range(1 << oracle.qubits):
        mag = abs(oracle(x))
        if mag > best_mag:
            best, best_mag = x, mag
    return best


def adversarial_witnesses(inst: Instance, rng=None, count: int = 5):
    """Witness families for soundness stress, cycling: ground state of a
    perturbed Hamiltonian, random product state, sign-flipped ground state,
    the instance's own ground state with the deceptive legal claim
    lambda_hat = a, and a zero-support oracle. x_in sits at the witness's
    max-|amplitude| string."""
    rng = rng or np.random.default_rng(0)
    H = inst.hamiltonian
    n = H.qubits
    out = []
    for i in range(count):
        fam = i % 5
        if fam == 0:
            i1 = int(rng.integers(n))
            a = rng.normal(size=(2, 2))
            pert = LocalTerm((i1,), 0.25 * (a + a.T))
            Hp = LocalHamiltonian(n, H.terms + (pert,))
            oracle, _, _ = ground_state_oracle(Hp)
        elif fam == 1:
            signs = rng.choice([-1.0, 1.0], size=(n, 2))
            mags = rng.uniform(0.25, 1.0, size=(n, 2))
            oracle = product_oracle((signs * mags).tolist())
        elif fam == 2:
            g_oracle, _, psi = ground_state_oracle(H)
            flips = rng.integers(0, 2, size=psi.shape[0]).astype(bool)
            entries = {x: (-v if flips[x] else v)
                       for x, v in ((x, float(psi[x])) for x in range(len(psi)))
                       if abs(v) > 1e-10}
            oracle = lookup_oracle(n, entries)
        elif fam == 3:
            oracle, _, _ = ground_state_oracle(H)
        else:
            oracle = lookup_oracle(n, {})
        x_in = _argmax_state(oracle) if fam != 4 else 0
        out.append(Witness(float(inst.a), oracle, x_in))
    return out


# --- bundles -----------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    d = hamiltonian_to_dict(inst.hamiltonian)
    d["a"] = float(inst.a)
    d["b"] = float(inst.b)
    return d


def instance_from_dict(d: dict) -> Instance:
    H = hamiltonian_from_dict(d)
    return Instance(H, a=float(d["a"]), b=float(d["b"]))


def witness_to_dict(w: Witness) -> dict:
    if w.oracle.descriptor is None:
        raise ValueError("witness oracle has no serializable descriptor")
    return {"lambda_hat": float(w.lambda_hat),
            "oracle": w.oracle.descriptor,
            "x_in": format(w.x_in, f"0{w.oracle.qubits}b")}


def witness_from_dict(d: dict, policy: NumericPolicy = FLOAT_POLICY) -> Witness:
    oracle = oracle_from_descriptor(d["oracle"], policy)
    return Witness(float(d["lambda_hat"]), oracle, int(d["x_in"], 2))


def save_bundle(inst: Instance, w: Witness, path) -> None:
    doc = {"instance": instance_to_dict(inst), "witness": witness_to_dict(w)}
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")


def load_bundle(path):
    with open(path) as f:
        doc = json.load(f)
    return instance_from_dict(doc["instance"]), witness_from_dict(doc["witness"])
