"""Circuits on a linear qubit array: first-order Trotter step, pair-propagator
swap network, CNOT compilation and dense verification.

Layouts are tuples where ``layout[i]`` is the (0-based) logical neutrino held
by physical qubit ``i``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np

from .gates import Gate, zyz_gates
from .kak import kak_decompose
from .model import (
    SIGMA_DOT_SIGMA,
    NeutrinoModel,
    embed,
    field_term,
    hermitian_expm,
    pair_hamiltonian,
    qubit_permutation_operator,
)
from .qsim import SWAP

MAX_DENSE_QUBITS = 10
ORDERING_N4 = (1, 3, 2, 4)


class ResourceLimitError(RuntimeError):
    pass


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    initial_layout: tuple[int, ...] = ()
    final_layout: tuple[int, ...] = ()
    global_phase: complex = 1.0

    def __post_init__(self):
        if not self.initial_layout:
            self.initial_layout = tuple(range(self.n_qubits))
        if not self.final_layout:
            self.final_layout = tuple(self.initial_layout)

    @property
    def permutation(self) -> tuple[int, ...]:
        """Final logical -> physical map."""
        return tuple(self.final_layout.index(k) for k in range(self.n_qubits))

    def physical_qubit(self, logical: int) -> int:
        return self.final_layout.index(logical)

    def to_json(self) -> str:
        def flat(m):
            return [float(x) for z in np.asarray(m).ravel() for x in (z.real, z.imag)]

        return json.dumps(
            {
                "n_qubits": self.n_qubits,
                "initial_layout": list(self.initial_layout),
                "final_layout": list(self.final_layout),
                "global_phase": [self.global_phase.real, self.global_phase.imag],
                "gates": [
                    {
                        "kind": g.kind,
                        "targets": list(g.targets),
                        "label": g.label,
                        "angle": g.angle,
                        "matrix": flat(g.matrix),
                    }
                    for g in self.gates
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        d = json.loads(text)
        gates = []
        for g in d["gates"]:
            vals = np.asarray(g["matrix"], dtype=float)
            m = (vals[0::2] + 1j * vals[1::2]).reshape(2 ** len(g["targets"]), -1)
            gates.append(Gate(g["kind"], tuple(g["targets"]), m, g["label"], g["angle"]))
        return cls(
            d["n_qubits"],
            gates,
            tuple(d["initial_layout"]),
            tuple(d["final_layout"]),
            complex(*d["global_phase"]),
        )


def _zero_based_ordering(ordering, n: int) -> tuple[int, ...]:
    ordering = tuple(int(k) for k in ordering)
    if sorted(ordering) != list(range(1, n + 1)):
        raise ValueError(f"ordering {ordering} is not a permutation of 1..{n}")
    return tuple(k - 1 for k in ordering)


def default_ordering(n: int) -> tuple[int, ...]:
    return ORDERING_N4 if n == 4 else tuple(range(1, n + 1))


def pair_unitary(model: NeutrinoModel, p: int, q: int, t: float) -> np.ndarray:
    """exp(-i t h_pq) as a 4x4 matrix."""
    return hermitian_expm(pair_hamiltonian(model, p, q), t)


def network_pair_order(n: int, ordering) -> list[tuple[int, int]]:
    """Logical pairs (0-based, p < q) in the order the swap network meets them."""
    layout = list(_zero_based_ordering(ordering, n))
    out = []
    for layer in range(n):
        for i in range(layer % 2, n - 1, 2):
            a, b = layout[i], layout[i + 1]
            out.append((min(a, b), max(a, b)))
            layout[i], layout[i + 1] = b, a
    return out


def swap_network_circuit(model: NeutrinoModel, t: float, ordering=None) -> Circuit:
    """One pair-propagator step: n alternating layers of u_pq followed by SWAP.

    Layer 1 acts on the odd bonds (1,2), (3,4), ... (1-based positions).  The
    final layout is the reversal of ``ordering`` (1-based logical labels).
    """
    n = model.n
    layout = list(_zero_based_ordering(ordering or default_ordering(n), n))
    initial = tuple(layout)
    gates = []
    for layer in range(n):
        for i in range(layer % 2, n - 1, 2):
            a, b = layout[i], layout[i + 1]
            u = pair_unitary(model, min(a, b), max(a, b), t)
            # h_pq is symmetric under exchange, so the (a, b) orientation is irrelevant
            gates.append(Gate("2q", (i, i + 1), SWAP @ u, label=f"u{min(a, b) + 1}{max(a, b) + 1}*swap"))
            layout[i], layout[i + 1] = b, a
    return Circuit(n, gates, initial, tuple(layout))


def reversed_swap_network(circuit: Circuit) -> Circuit:
    """Mirror of a swap network: same combined gates in reverse order.

    Appending it to the forward network gives a symmetric step of twice the
    time and restores the initial qubit layout.
    """
    if any(g.kind != "2q" for g in circuit.gates):
        raise ValueError("only uncompiled swap networks can be mirrored")
    return Circuit(
        circuit.n_qubits,
        list(reversed(circuit.gates)),
        circuit.final_layout,
        circuit.initial_layout,
        circuit.global_phase,
    )


def trotter_u1_circuit(model: NeutrinoModel, t: float, ordering=None) -> Circuit:
    """First-order step: the two-body factors exp(-i t J_pq s_p.s_q), then the
    one-body field on every neutrino.

    With ``ordering=None`` the two-body factors are applied in lexicographic
    p < q order and non-adjacent pairs are brought together with explicit
    SWAPs (the layout is not restored).  With an ``ordering`` they are applied
    in the swap-network layer order instead, fused with the SWAPs exactly as
    in :func:`swap_network_circuit`.
    """
    n = model.n
    if ordering is not None:
        layout = list(_zero_based_ordering(ordering, n))
        initial = tuple(layout)
        gates = []
        for layer in range(n):
            for i in range(layer % 2, n - 1, 2):
                a, b = layout[i], layout[i + 1]
                u = _two_body(model, a, b, t)
                gates.append(Gate("2q", (i, i + 1), SWAP @ u, label=f"j{min(a, b) + 1}{max(a, b) + 1}*swap"))
                layout[i], layout[i + 1] = b, a
    else:
        layout = list(range(n))
        initial = tuple(layout)
        gates = []
        for p, q in model.pairs():
            pos_p, pos_q = layout.index(p), layout.index(q)
            step = 1 if pos_q > pos_p else -1
            # walk p toward q
            while abs(pos_q - pos_p) > 1:
                nxt = pos_p + step
                lo, hi = min(pos_p, nxt), max(pos_p, nxt)
                gates.append(Gate("2q", (lo, hi), SWAP, label="swap"))
                layout[lo], layout[hi] = layout[hi], layout[lo]
                pos_p = nxt
            lo, hi = min(pos_p, pos_q), max(pos_p, pos_q)
            gates.append(Gate("2q", (lo, hi), _two_body(model, p, q, t), label=f"j{p + 1}{q + 1}"))
    one = hermitian_expm(field_term(model.b), t)
    for k in range(n):
        gates.append(Gate("1q", (layout.index(k),), one, label=f"b{k + 1}"))
    return Circuit(n, gates, initial, tuple(layout))


def _two_body(model: NeutrinoModel, p: int, q: int, t: float) -> np.ndarray:
    return hermitian_expm(model.J[p, q] * SIGMA_DOT_SIGMA, t)


def u1_matrix(model: NeutrinoModel, t: float, ordering=None) -> np.ndarray:
    """Dense logical U_1(t) in the same factor order as trotter_u1_circuit."""
    n = model.n
    order = model.pairs() if ordering is None else network_pair_order(n, ordering)
    u = np.eye(2**n, dtype=complex)
    for p, q in order:
        u = embed(_two_body(model, p, q, t), (p, q), n) @ u
    one = hermitian_expm(field_term(model.b), t)
    for k in range(n):
        u = embed(one, (k,), n) @ u
    return u


def u2_matrix(model: NeutrinoModel, t: float, ordering=None) -> np.ndarray:
    """Dense logical U_2(t): embedded pair propagators in swap-network order."""
    n = model.n
    u = np.eye(2**n, dtype=complex)
    for p, q in network_pair_order(n, ordering or default_ordering(n)):
        u = embed(pair_unitary(model, p, q, t), (p, q), n) @ u
    return u


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    n = circuit.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise ResourceLimitError(f"{n} qubits exceeds the dense limit of {MAX_DENSE_QUBITS}")
    d = 2**n
    # columns ride along as a trailing batch axis
    t = np.eye(d, dtype=complex).reshape((2,) * n + (d,))
    for g in circuit.gates:
        k = g.n_targets
        m = g.matrix.reshape((2,) * (2 * k))
        t = np.tensordot(m, t, axes=(list(range(k, 2 * k)), list(g.targets)))
        t = np.moveaxis(t, list(range(k)), list(g.targets))
    return circuit.global_phase * t.reshape(d, d)


def layout_operator(layout, n: int) -> np.ndarray:
    """Maps a logical-order state to the physical arrangement ``layout``."""
    layout = tuple(layout)
    return qubit_permutation_operator([layout.index(k) for k in range(n)], n)


def logical_unitary(circuit: Circuit) -> np.ndarray:
    """Circuit unitary with the initial and final layouts undone."""
    n = circuit.n_qubits
    return (
        layout_operator(circuit.final_layout, n).T
        @ circuit_unitary(circuit)
        @ layout_operator(circuit.initial_layout, n)
    )


def physical_bitstring(logical_bits: str, layout) -> str:
    """Bitstring on physical qubits given per-neutrino bits (logical order)."""
    return "".join(logical_bits[k] for k in layout)


def compile_circuit(circuit: Circuit) -> Circuit:
    """Rewrite every gate as CNOTs and single-axis rotations."""
    gates: list[Gate] = []
    phase = complex(circuit.global_phase)
    for g in circuit.gates:
        if g.kind in ("rot", "cx"):
            gates.append(g)
        elif g.kind == "1q":
            rots = zyz_gates(g.matrix, 0)
            w = np.eye(2, dtype=complex)
            for r in rots:
                w = r.matrix @ w
            ph = np.trace(w.conj().T @ g.matrix) / 2
            phase *= ph / abs(ph)
            gates.extend(replace(r, targets=(g.targets[0],)) for r in rots)
        elif g.kind == "2q":
            cg = kak_decompose(g.matrix)
            phase *= cg.global_phase
            for op in cg.layers:
                gates.append(replace(op, targets=tuple(g.targets[w] for w in op.targets)))
        else:
            raise ValueError(f"unknown gate kind {g.kind!r}")
    return Circuit(circuit.n_qubits, gates, circuit.initial_layout, circuit.final_layout, phase)


def gate_counts(circuit: Circuit) -> tuple[int, int]:
    """(entangling gates, single-qubit rotations) of a compiled circuit."""
    if any(g.kind == "2q" for g in circuit.gates):
        raise ValueError("circuit has uncompiled two-qubit gates; run compile_circuit first")
    ent = sum(1 for g in circuit.gates if g.is_entangler)
    rot = sum(1 for g in circuit.gates if g.n_targets == 1)
    return ent, rot


def entangler_bound(n: int) -> int:
    return 3 * comb(n, 2)


def rotation_bound(n: int) -> int:
    return 15 * comb(n, 2)
