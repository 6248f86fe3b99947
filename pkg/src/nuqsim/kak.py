"""Two-qubit unitary -> at most three CNOTs plus single-qubit rotations.

Everything is done in the magic basis, where SU(2)xSU(2) becomes SO(4).  Two
SU(4) matrices U, V are locally equivalent (U = (A x B) V (C x D), up to a
fourth root of unity) exactly when gamma(U) = u u^T and gamma(V) share a
spectrum, u = E^dag U E.  The entangler count is read off gamma(U); a fixed
interior circuit V with that many CNOTs is built with matching invariants,
then the outer local factors are solved for.

Every candidate is checked by recomposition; when the minimal-count ansatz
fails numerically we fall back to the next larger one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .gates import Gate, cx_gate, rotation_gate, zyz_gates
from .qsim import I2, is_unitary

MAGIC = np.array([[1, 1j, 0, 0], [0, 0, 1j, 1], [0, 0, 1j, -1], [1, -1j, 0, 0]]) / np.sqrt(2)
MAGIC_DAG = MAGIC.conj().T

CNOT10 = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
SWAP4 = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)

RECOMPOSE_ATOL = 1e-9
_DIAG_MIXES = (0.6180339887, 1.7320508076, 0.2718281828, 3.1415926536, 0.1414213562)


@dataclass
class CompiledGate:
    """Application-ordered gates on local wires 0 (more significant) and 1."""

    target: np.ndarray
    layers: list[Gate] = field(default_factory=list)
    entangler_count: int = 0
    global_phase: complex = 1.0

    def matrix(self) -> np.ndarray:
        """Recomposed unitary, without the global phase."""
        return ops_matrix(self.layers)

    def recompose(self) -> np.ndarray:
        return self.global_phase * self.matrix()

    @property
    def rotation_count(self) -> int:
        return sum(1 for g in self.layers if g.n_targets == 1)


def ops_matrix(ops: list[Gate]) -> np.ndarray:
    w = np.eye(4, dtype=complex)
    for g in ops:
        if g.n_targets == 1:
            m = np.kron(g.matrix, I2) if g.targets[0] == 0 else np.kron(I2, g.matrix)
        elif g.targets == (0, 1):
            m = g.matrix
        else:
            m = SWAP4 @ g.matrix @ SWAP4
        w = m @ w
    return w


def to_su4(u: np.ndarray) -> np.ndarray:
    return u / complex(np.linalg.det(u)) ** 0.25


def gamma(u_su: np.ndarray) -> np.ndarray:
    m = MAGIC_DAG @ u_su @ MAGIC
    return m @ m.T


def num_cnots(u: np.ndarray, atol: float = 1e-7) -> int:
    """Minimal CNOT count from the trace and spectrum of gamma(U)."""
    g = gamma(to_su4(u))
    tr = np.trace(g)
    if abs(tr - 4) < atol or abs(tr + 4) < atol:
        return 0
    evs = np.sort(np.linalg.eigvals(g).imag)
    if abs(tr) < atol and np.allclose(evs, [-1, -1, 1, 1], atol=atol):
        return 1
    if abs(tr.imag) < atol:
        return 2
    return 3


def tensor_factor(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a 4x4 product operator into A, B with k = A x B (A in SU(2))."""
    r = k.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    uu, s, vh = np.linalg.svd(r)
    a = np.sqrt(s[0]) * uu[:, 0].reshape(2, 2)
    b = np.sqrt(s[0]) * vh[0].reshape(2, 2)
    ph = np.sqrt(np.linalg.det(a))
    return a / ph, b * ph


def _real_orthogonal_diag(m: np.ndarray, atol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """P in SO(4) with P^T m P diagonal, for complex symmetric unitary m."""
    best = None
    for c in _DIAG_MIXES:
        _, p = np.linalg.eigh(m.real + c * m.imag)
        d = p.T @ m @ p
        off = np.abs(d - np.diag(np.diag(d))).max()
        if best is None or off < best[0]:
            best = (off, p, np.diag(d))
        if off < atol:
            break
    _, p, diag = best
    if np.linalg.det(p) < 0:
        p = p.copy()
        p[:, -1] *= -1
    return p, diag


def match_locals(u: np.ndarray, v: np.ndarray, atol: float = 1e-7):
    """Find A, B, C, D with u ~ (A x B) v (C x D) up to global phase."""
    us = to_su4(u)
    for vs in (to_su4(v), 1j * to_su4(v)):
        uu = MAGIC_DAG @ us @ MAGIC
        vv = MAGIC_DAG @ vs @ MAGIC
        p, du = _real_orthogonal_diag(uu @ uu.T)
        q, dv = _real_orthogonal_diag(vv @ vv.T)
        rows, cols = linear_sum_assignment(np.abs(du[:, None] - dv[None, :]))
        if np.abs(du[rows] - dv[cols]).max() > atol:
            continue
        q = q[:, cols]
        if np.linalg.det(q) < 0:
            q[:, -1] *= -1
        g = p @ q.T
        h = vv.conj().T @ g.T @ uu
        a, b = tensor_factor(MAGIC @ g @ MAGIC_DAG)
        c, d = tensor_factor(MAGIC @ h @ MAGIC_DAG)
        return a, b, c, d
    raise ArithmeticError("unitaries are not locally equivalent")


def _interior(k: int, u_su: np.ndarray) -> list[Gate]:
    if k == 1:
        return [cx_gate(0, 1)]
    if k == 2:
        evs = np.linalg.eigvals(gamma(u_su))
        if np.allclose(np.sort(evs.real), [-1, -1, 1, 1], atol=1e-7):
            x, y = np.pi / 2, np.pi / 2
            return [cx_gate(1, 0), rotation_gate("rz", x, 0), rotation_gate("rx", y, 1), cx_gate(1, 0)]
        x, y = np.angle(evs[0]), np.angle(evs[1])
        if np.isclose(x, -y):
            y = np.angle(evs[2])
        return [
            cx_gate(1, 0),
            rotation_gate("rz", (x + y) / 2, 0),
            rotation_gate("rx", (x - y) / 2, 1),
            cx_gate(1, 0),
        ]
    # angles from the eigenphases of gamma(SWAP U)
    swapped = np.exp(0.25j * np.pi) * SWAP4 @ u_su
    x, y, z = np.sort(np.angle(np.linalg.eigvals(gamma(swapped))))[:3]
    return [
        cx_gate(1, 0),
        rotation_gate("rz", (z + y) / 2, 0),
        rotation_gate("ry", (x + z) / 2, 1),
        cx_gate(0, 1),
        rotation_gate("ry", (x + y) / 2, 1),
        cx_gate(1, 0),
    ]


def _attempt(u: np.ndarray, k: int) -> CompiledGate | None:
    u_su = to_su4(u)
    if k == 0:
        a, b = tensor_factor(u_su)
        layers = zyz_gates(a, 0) + zyz_gates(b, 1)
    else:
        try:
            inner = _interior(k, u_su)
            a, b, c, d = match_locals(u, ops_matrix(inner))
        except (ArithmeticError, np.linalg.LinAlgError):
            return None
        layers = zyz_gates(c, 0) + zyz_gates(d, 1) + inner + zyz_gates(a, 0) + zyz_gates(b, 1)
    w = ops_matrix(layers)
    phase = np.trace(w.conj().T @ u) / 4
    if abs(abs(phase) - 1) > RECOMPOSE_ATOL:
        return None
    phase /= abs(phase)
    if np.abs(u - phase * w).max() > RECOMPOSE_ATOL:
        return None
    return CompiledGate(u, layers, k, complex(phase))


def kak_decompose(u: np.ndarray) -> CompiledGate:
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4) or not is_unitary(u):
        raise ValueError("kak_decompose needs a 4x4 unitary")
    start = num_cnots(u)
    for k in range(start, 4):
        out = _attempt(u, k)
        if out is not None:
            return out
    raise ArithmeticError("two-qubit decomposition failed to recompose")
