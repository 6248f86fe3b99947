"""Gate records and elementary single-qubit rotations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qsim import CNOT, SWAP

# kinds: "1q" generic single-qubit unitary, "rot" single-axis rotation,
# "2q" generic two-qubit unitary, "cx" CNOT (the entangling primitive)
ENTANGLER_KINDS = ("cx",)


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    matrix: np.ndarray
    label: str = ""
    angle: float | None = None

    @property
    def is_entangler(self) -> bool:
        return self.kind in ENTANGLER_KINDS

    @property
    def n_targets(self) -> int:
        return len(self.targets)


def rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]])


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


ROTATIONS = {"rx": rx, "ry": ry, "rz": rz}


def rotation_gate(axis: str, theta: float, wire: int) -> Gate:
    return Gate("rot", (wire,), ROTATIONS[axis](theta), label=axis, angle=float(theta))


def cx_gate(control: int, target: int) -> Gate:
    return Gate("cx", (control, target), CNOT, label="cx")


def swap_gate(q1: int, q2: int) -> Gate:
    return Gate("2q", (q1, q2), SWAP, label="swap")


def zyz_angles(u: np.ndarray) -> tuple[float, float, float]:
    """Angles (phi, theta, lam) with u = e^{i a} Rz(phi) Ry(theta) Rz(lam)."""
    v = u / np.sqrt(np.linalg.det(u))
    theta = 2 * np.arctan2(abs(v[1, 0]), abs(v[0, 0]))
    if abs(v[0, 0]) < 1e-14:
        # pure Y-type flip: only phi - lam is defined
        return 2 * np.angle(v[1, 0]), theta, 0.0
    if abs(v[1, 0]) < 1e-14:
        return 2 * np.angle(v[1, 1]), theta, 0.0
    plus = 2 * np.angle(v[1, 1])
    minus = 2 * np.angle(v[1, 0])
    return (plus + minus) / 2, theta, (plus - minus) / 2


def zyz_gates(u: np.ndarray, wire: int, atol: float = 1e-12) -> list[Gate]:
    """Rotation gates (in application order) equal to u up to global phase."""
    phi, theta, lam = zyz_angles(u)
    out = []
    for axis, ang in (("rz", lam), ("ry", theta), ("rz", phi)):
        # a 2*pi rotation is -1, i.e. pure global phase
        wrapped = (ang + np.pi) % (2 * np.pi) - np.pi
        if abs(wrapped) > atol:
            out.append(rotation_gate(axis, wrapped, wire))
    return out
