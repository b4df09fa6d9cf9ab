"""Exact simulation of pure states and density matrices.

Qubit ordering convention: qubit 0 is the MOST significant bit of the
computational basis index, i.e. basis state |q0 q1 ... q_{n-1}> has index
sum_k q_k * 2**(n-1-k).  All kernels in this package assume this layout.

Gate application uses bit-masked index arithmetic over the amplitude
array; no 2^n x 2^n matrices are ever materialized.  All internal kernels
are batched: statevectors are handled as arrays of shape (B, 2^n).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from . import _kernels

MAX_QUBITS = 20

NORM_ATOL = 1e-10
HERM_ATOL = 1e-10
EIG_ATOL = 1e-9


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CZ = "CZ"
    CNOT = "CNOT"


ROTATION_KINDS = (GateKind.RX, GateKind.RY, GateKind.RZ)


@dataclass(frozen=True)
class GateOp:
    """One gate in a circuit.

    Rotations carry either a fixed ``angle`` (radians) or a ``symbol``
    index into a parameter vector, never both.  CZ/CNOT carry neither.
    """

    kind: GateKind
    qubits: tuple[int, ...]
    angle: float | None = None
    symbol: int | None = None

    def __post_init__(self):
        if self.kind in ROTATION_KINDS:
            if len(self.qubits) != 1:
                raise ValueError(f"{self.kind.value} acts on exactly one qubit")
            if (self.angle is None) == (self.symbol is None):
                raise ValueError(f"{self.kind.value} needs exactly one of angle/symbol")
        else:
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise ValueError(f"{self.kind.value} needs two distinct qubits")
            if self.angle is not None or self.symbol is not None:
                raise ValueError(f"{self.kind.value} takes no parameter")


@dataclass(frozen=True)
class NoiseConfig:
    """Depolarizing noise attached after every two-qubit block."""

    p: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p <= 0.75:
            raise ValueError(f"depolarizing probability {self.p} outside [0, 0.75]")


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise ValueError("amplitude vector length must be 2^num_qubits")
        if abs(np.linalg.norm(self.amplitudes) - 1.0) > NORM_ATOL:
            raise ValueError("statevector is not normalized")


@dataclass
class DensityMatrix:
    num_qubits: int
    elements: np.ndarray

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=np.complex128)
        d = 2**self.num_qubits
        if self.elements.shape != (d, d):
            raise ValueError("density matrix must be 2^n x 2^n")

    def check_physical(self, eig_atol: float = EIG_ATOL) -> None:
        """Raise if not Hermitian / unit-trace / positive within tolerance."""
        r = self.elements
        if np.max(np.abs(r - r.conj().T)) > HERM_ATOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(r).real - 1.0) > HERM_ATOL or abs(np.trace(r).imag) > HERM_ATOL:
            raise ValueError("density matrix trace differs from 1")
        if np.min(np.linalg.eigvalsh(r)) < -eig_atol:
            raise ValueError("density matrix has a significantly negative eigenvalue")


# ---------------------------------------------------------------------------
# gate matrices

_SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def rotation_matrix(kind: GateKind, angle: float) -> np.ndarray:
    """2x2 matrix exp(-i*angle/2 * sigma) for RX/RY/RZ."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if kind == GateKind.RX:
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == GateKind.RY:
        return np.array([[c, -s], [s, c]])
    if kind == GateKind.RZ:
        return np.array([[np.exp(-1j * angle / 2), 0], [0, np.exp(1j * angle / 2)]])
    raise ValueError(f"{kind.value} is not a rotation gate")


# ---------------------------------------------------------------------------
# cached index helpers

@lru_cache(maxsize=None)
def _bit(n: int, q: int) -> np.ndarray:
    """Value of qubit q's bit for every basis index of an n-qubit register."""
    idx = np.arange(2**n)
    return ((idx >> (n - 1 - q)) & 1).astype(np.uint8)


@lru_cache(maxsize=None)
def _zsigns(n: int, q: int) -> np.ndarray:
    return 1.0 - 2.0 * _bit(n, q).astype(np.float64)


# ---------------------------------------------------------------------------
# batched statevector kernels; psi has shape (B, 2^n) and is mutated in place

def apply_1q_inplace(psi: np.ndarray, n: int, q: int, mat: np.ndarray) -> None:
    step = 1 << (n - 1 - q)
    _kernels.k_apply_1q(psi, step, mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1])


def apply_cz_inplace(psi: np.ndarray, n: int, a: int, b: int) -> None:
    _kernels.k_apply_cz(psi, 1 << (n - 1 - a), 1 << (n - 1 - b))


def apply_cnot_inplace(psi: np.ndarray, n: int, control: int, target: int) -> None:
    _kernels.k_apply_cnot(psi, 1 << (n - 1 - control), 1 << (n - 1 - target))


def apply_op_inplace(psi: np.ndarray, n: int, op: GateOp, angle: float | None) -> None:
    if op.kind in ROTATION_KINDS:
        if angle is None:
            raise ValueError(f"{op.kind.value} requires an angle")
        apply_1q_inplace(psi, n, op.qubits[0], rotation_matrix(op.kind, angle))
    elif op.kind == GateKind.CZ:
        apply_cz_inplace(psi, n, *op.qubits)
    else:
        apply_cnot_inplace(psi, n, *op.qubits)


def apply_op_batch(psi: np.ndarray, n: int, op: GateOp, angle: float | None) -> np.ndarray:
    """Copying variant of apply_op_inplace."""
    out = np.ascontiguousarray(psi, dtype=np.complex128).copy()
    apply_op_inplace(out, n, op, angle)
    return out


def zexp_batch(psi: np.ndarray, n: int, q: int) -> np.ndarray:
    """<Z_q> for every statevector in the batch."""
    out = np.empty(psi.shape[0])
    _kernels.k_zexp(np.ascontiguousarray(psi), 1 << (n - 1 - q), out)
    return out


def projector_prob_batch(psi: np.ndarray, n: int, qubits: tuple[int, ...]) -> np.ndarray:
    """P(all listed qubits measured 0), marginalized over the rest."""
    keep = np.ones(2**n, dtype=bool)
    for q in qubits:
        keep &= _bit(n, q) == 0
    return (np.abs(psi[:, keep]) ** 2).sum(axis=1)


# ---------------------------------------------------------------------------
# density-matrix kernels; rho has shape (2^n, 2^n)

def dm_apply_1q(rho: np.ndarray, n: int, q: int, mat: np.ndarray) -> np.ndarray:
    # U rho U^dag on the flat view: row index bit sits n positions above
    # the column index bit, so the same 1q kernel runs twice
    d = 2**n
    out = np.ascontiguousarray(rho).copy()
    flat = out.reshape(1, d * d)
    mc = mat.conj()
    _kernels.k_apply_1q(flat, 1 << (2 * n - 1 - q), mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1])
    _kernels.k_apply_1q(flat, 1 << (n - 1 - q), mc[0, 0], mc[0, 1], mc[1, 0], mc[1, 1])
    return out


def dm_apply_cz(rho: np.ndarray, n: int, a: int, b: int) -> np.ndarray:
    d = 2**n
    out = np.ascontiguousarray(rho).copy()
    flat = out.reshape(1, d * d)
    _kernels.k_apply_cz(flat, 1 << (2 * n - 1 - a), 1 << (2 * n - 1 - b))
    _kernels.k_apply_cz(flat, 1 << (n - 1 - a), 1 << (n - 1 - b))
    return out


def dm_apply_cnot(rho: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    d = 2**n
    out = np.ascontiguousarray(rho).copy()
    flat = out.reshape(1, d * d)
    _kernels.k_apply_cnot(flat, 1 << (2 * n - 1 - control), 1 << (2 * n - 1 - target))
    _kernels.k_apply_cnot(flat, 1 << (n - 1 - control), 1 << (n - 1 - target))
    return out


def dm_apply_op(rho: np.ndarray, n: int, op: GateOp, angle: float | None) -> np.ndarray:
    if op.kind in ROTATION_KINDS:
        if angle is None:
            raise ValueError(f"{op.kind.value} requires an angle")
        return dm_apply_1q(rho, n, op.qubits[0], rotation_matrix(op.kind, angle))
    if op.kind == GateKind.CZ:
        return dm_apply_cz(rho, n, *op.qubits)
    return dm_apply_cnot(rho, n, *op.qubits)


def dm_depolarize(rho: np.ndarray, n: int, q: int, p: float) -> np.ndarray:
    """(1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z) on qubit q.

    Uses the identity X rho X + Y rho Y + Z rho Z = 2 Tr_q(rho) (x) I - rho,
    so the channel is (1 - 4p/3) rho + (2p/3) Tr_q(rho) (x) I_q.
    """
    if not 0.0 <= p <= 0.75:
        raise ValueError(f"depolarizing probability {p} outside [0, 0.75]")
    d = 2**n
    shaped = rho.reshape(2**q, 2, -1, 2**q, 2, d // 2**(q + 1))
    out = (1.0 - 4.0 * p / 3.0) * shaped
    diag = shaped[:, 0, :, :, 0, :] + shaped[:, 1, :, :, 1, :]
    mix = (2.0 * p / 3.0) * diag
    out = out.copy()
    out[:, 0, :, :, 0, :] += mix
    out[:, 1, :, :, 1, :] += mix
    return out.reshape(d, d)


def dm_zexp(rho: np.ndarray, n: int, q: int) -> float:
    return float(np.real(np.diagonal(rho) @ _zsigns(n, q)))


def dm_projector_prob(rho: np.ndarray, n: int, qubits: tuple[int, ...]) -> float:
    keep = np.ones(2**n, dtype=bool)
    for q in qubits:
        keep &= _bit(n, q) == 0
    return float(np.real(np.diagonal(rho)[keep].sum()))


# ---------------------------------------------------------------------------
# public single-state operations

def new_zero_state(n: int) -> StateVector:
    """|0...0> on n qubits."""
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"qubit count {n} outside [1, {MAX_QUBITS}]")
    amps = np.zeros(2**n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n, amps)


def apply_gate(state: StateVector, op: GateOp, angle: float | None = None) -> StateVector:
    """Apply one concrete gate.  For symbolic rotations pass the bound angle."""
    n = state.num_qubits
    if any(q >= n or q < 0 for q in op.qubits):
        raise ValueError(f"qubit index out of range for {n}-qubit state")
    if op.angle is not None:
        angle = op.angle
    out = apply_op_batch(state.amplitudes[None, :], n, op, angle)[0]
    return StateVector(n, out)


def expectation_z(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.num_qubits:
        raise ValueError("qubit index out of range")
    return float(zexp_batch(state.amplitudes[None, :], state.num_qubits, qubit)[0])


def expectation_global_projector(state: StateVector, qubits: tuple[int, ...]) -> float:
    """Probability that every listed qubit is measured in |0>."""
    if len(qubits) == 0:
        raise ValueError("survivor set must be non-empty")
    if any(q >= state.num_qubits or q < 0 for q in qubits):
        raise ValueError("qubit index out of range")
    return float(projector_prob_batch(state.amplitudes[None, :], state.num_qubits, qubits)[0])


def to_density(state: StateVector) -> DensityMatrix:
    amps = state.amplitudes
    return DensityMatrix(state.num_qubits, np.outer(amps, amps.conj()))


def apply_depolarizing(rho: DensityMatrix, qubit: int, p: float) -> DensityMatrix:
    if not 0 <= qubit < rho.num_qubits:
        raise ValueError("qubit index out of range")
    return DensityMatrix(rho.num_qubits, dm_depolarize(rho.elements, rho.num_qubits, qubit, p))


def partial_trace(rho: DensityMatrix, discard: tuple[int, ...]) -> DensityMatrix:
    """Trace out the listed qubits; remaining qubits keep their relative order."""
    n = rho.num_qubits
    discard_set = set(discard)
    if any(q >= n or q < 0 for q in discard_set):
        raise ValueError("qubit index out of range")
    if len(discard_set) >= n:
        raise ValueError("cannot discard every qubit")
    keep = [q for q in range(n) if q not in discard_set]
    tensor = rho.elements.reshape([2] * (2 * n))
    row = list(range(n))
    # tied subscripts on discarded axes perform the trace
    col = [row[q] if q in discard_set else n + q for q in range(n)]
    out_sub = keep + [n + q for q in keep]
    reduced = np.einsum(tensor, row + col, out_sub)
    m = len(keep)
    return DensityMatrix(m, reduced.reshape(2**m, 2**m))
