"""QCNN ansatz construction and circuit execution.

A :class:`Circuit` is an ordered list of :class:`~qcnnlab.sim.GateOp` with
symbolic parameters; a :class:`QcnnPlan` records the staged conv/pool
architecture (pairings, symbol sharing, survivor bookkeeping) from which
the circuit is rebuilt deterministically.

Convolution block (4 params):  RX(s1) a, RX(s2) b, CZ(a,b), RY(s3) a, RY(s4) b
Pooling block (1 param):       CNOT(j->k), RY(s) k, CNOT(j->k); j discarded
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .sim import (
    DensityMatrix,
    GateKind,
    GateOp,
    NoiseConfig,
    StateVector,
    apply_op_inplace,
    dm_apply_op,
    dm_depolarize,
    NORM_ATOL,
)

PLAN_SCHEMA = "qcnnlab.plan.v1"


@dataclass
class EncodedSample:
    """Amplitude-encoded input: unit-norm vector of length 2^n plus a binary label."""

    amplitudes: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if abs(np.linalg.norm(self.amplitudes) - 1.0) > NORM_ATOL:
            raise ValueError("encoded sample must have unit 2-norm")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass
class Circuit:
    num_qubits: int
    ops: list[GateOp]
    num_symbols: int
    # op indices after which depolarizing noise hits the listed qubits
    noise_after: list[tuple[int, tuple[int, int]]] = field(default_factory=list)

    def __post_init__(self):
        for op in self.ops:
            if any(q < 0 or q >= self.num_qubits for q in op.qubits):
                raise ValueError("gate qubit index out of range")
            if op.symbol is not None and not 0 <= op.symbol < self.num_symbols:
                raise ValueError("symbol index out of range")

    def symbol_occurrences(self, symbol: int) -> list[int]:
        return [i for i, op in enumerate(self.ops) if op.symbol == symbol]


@dataclass
class Stage:
    """One conv+pool stage over the currently active qubits."""

    even_pairs: list[tuple[int, int]]
    offset_pairs: list[tuple[int, int]]
    pool_pairs: list[tuple[int, int]]  # (control/discarded, survivor)
    survivors: list[int]  # active set after this stage
    even_symbols: list[list[int]]  # 4 symbol ids per conv block
    offset_symbols: list[list[int]]
    pool_symbols: list[int]  # 1 symbol id per pool block


@dataclass
class QcnnPlan:
    num_qubits: int
    stages: list[Stage]
    total_parameters: int
    tied: bool

    @property
    def survivors(self) -> list[int]:
        return self.stages[-1].survivors


def amplitude_encode(pixels: np.ndarray, n: int) -> EncodedSample:
    """Zero-pad to length 2^n and normalize to a unit amplitude vector."""
    vec = np.asarray(pixels, dtype=np.float64).ravel()
    if np.any(vec < 0):
        raise ValueError("pixel values must be non-negative")
    if vec.size > 2**n:
        raise ValueError(f"input length {vec.size} exceeds 2^{n}")
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError("all-zero input has no normalization direction")
    padded = np.zeros(2**n, dtype=np.float64)
    padded[: vec.size] = vec
    return EncodedSample(padded / norm)


def conv_block(q_a: int, q_b: int, symbols: tuple[int, int, int, int]) -> list[GateOp]:
    if q_a == q_b:
        raise ValueError("conv block needs two distinct qubits")
    s1, s2, s3, s4 = symbols
    return [
        GateOp(GateKind.RX, (q_a,), symbol=s1),
        GateOp(GateKind.RX, (q_b,), symbol=s2),
        GateOp(GateKind.CZ, (q_a, q_b)),
        GateOp(GateKind.RY, (q_a,), symbol=s3),
        GateOp(GateKind.RY, (q_b,), symbol=s4),
    ]


def pool_block(control: int, target: int, symbol: int) -> list[GateOp]:
    """Controlled pooling unitary; the control qubit is discarded afterwards."""
    if control == target:
        raise ValueError("pool block needs two distinct qubits")
    return [
        GateOp(GateKind.CNOT, (control, target)),
        GateOp(GateKind.RY, (target,), symbol=symbol),
        GateOp(GateKind.CNOT, (control, target)),
    ]


def build_plan(
    n: int,
    stage_config: list[int] | None = None,
    tied: bool = True,
) -> QcnnPlan:
    """Lay out the staged QCNN architecture.

    ``stage_config`` gives the number of adjacent active pairs pooled per
    stage (the first pairs in active order; first qubit of each pair is
    the control and is discarded).  ``None`` pools every pair each stage
    until one qubit survives.
    """
    if n < 2:
        raise ValueError("need at least 2 qubits")
    if stage_config is not None:
        if len(stage_config) == 0 or any(k < 1 for k in stage_config):
            raise ValueError("stage_config entries must be >= 1")

    active = list(range(n))
    stages: list[Stage] = []
    next_symbol = 0

    def alloc(count: int) -> list[int]:
        nonlocal next_symbol
        ids = list(range(next_symbol, next_symbol + count))
        next_symbol += count
        return ids

    num_stages = len(stage_config) if stage_config is not None else None
    s = 0
    while True:
        if num_stages is not None and s >= num_stages:
            break
        if num_stages is None and len(active) <= 1:
            break
        even_pairs = [(active[i], active[i + 1]) for i in range(0, len(active) - 1, 2)]
        offset_pairs = [(active[i], active[i + 1]) for i in range(1, len(active) - 1, 2)]
        k = len(even_pairs) if stage_config is None else stage_config[s]
        if k > len(even_pairs):
            raise ValueError(
                f"stage {s}: cannot pool {k} pairs with {len(active)} active qubits"
            )
        pool_pairs = even_pairs[:k]

        if tied:
            ev = alloc(4) if even_pairs else []
            even_symbols = [list(ev) for _ in even_pairs]
            of = alloc(4) if offset_pairs else []
            offset_symbols = [list(of) for _ in offset_pairs]
            ps = alloc(1)[0]
            pool_symbols = [ps for _ in pool_pairs]
        else:
            even_symbols = [alloc(4) for _ in even_pairs]
            offset_symbols = [alloc(4) for _ in offset_pairs]
            pool_symbols = [alloc(1)[0] for _ in pool_pairs]

        discarded = {c for c, _ in pool_pairs}
        survivors = [q for q in active if q not in discarded]
        stages.append(
            Stage(even_pairs, offset_pairs, pool_pairs, survivors,
                  even_symbols, offset_symbols, pool_symbols)
        )
        active = survivors
        s += 1

    if not stages or not stages[-1].survivors:
        raise ValueError("schedule leaves no surviving qubits")
    return QcnnPlan(n, stages, next_symbol, tied)


def circuit_from_plan(plan: QcnnPlan) -> Circuit:
    ops: list[GateOp] = []
    noise_after: list[tuple[int, tuple[int, int]]] = []

    def emit(block: list[GateOp], pair: tuple[int, int]) -> None:
        ops.extend(block)
        noise_after.append((len(ops) - 1, pair))

    for stage in plan.stages:
        for pair, syms in zip(stage.even_pairs, stage.even_symbols):
            emit(conv_block(*pair, tuple(syms)), pair)
        for pair, syms in zip(stage.offset_pairs, stage.offset_symbols):
            emit(conv_block(*pair, tuple(syms)), pair)
        for pair, sym in zip(stage.pool_pairs, stage.pool_symbols):
            emit(pool_block(*pair, sym), pair)
    return Circuit(plan.num_qubits, ops, plan.total_parameters, noise_after)


def build_qcnn(
    n: int, stage_config: list[int] | None = None, tied: bool = True
) -> tuple[QcnnPlan, Circuit]:
    plan = build_plan(n, stage_config, tied)
    return plan, circuit_from_plan(plan)


REFERENCE_STAGE_CONFIG = [2, 2, 2, 1, 1]


def reference_plan() -> tuple[QcnnPlan, Circuit]:
    """The 10-qubit, 45-parameter architecture used by the experiments."""
    return build_qcnn(10, REFERENCE_STAGE_CONFIG, tied=True)


def variance_scan_plan(n: int) -> tuple[QcnnPlan, Circuit]:
    """Single-stage, fully pooled, untied ansatz for gradient-variance scans.

    Untied parameters make the pooled blocks statistically independent,
    which is what exposes the exponential concentration of the global
    cost; weight tying would correlate the blocks and mask it.
    """
    return build_qcnn(n, stage_config=[n // 2], tied=False)


# ---------------------------------------------------------------------------
# plan serialization

def plan_to_json(plan: QcnnPlan) -> str:
    doc = {
        "schema": PLAN_SCHEMA,
        "num_qubits": plan.num_qubits,
        "tied": plan.tied,
        "total_parameters": plan.total_parameters,
        "stages": [
            {
                "even_pairs": [list(p) for p in st.even_pairs],
                "offset_pairs": [list(p) for p in st.offset_pairs],
                "pool_pairs": [list(p) for p in st.pool_pairs],
                "survivors": st.survivors,
                "even_symbols": st.even_symbols,
                "offset_symbols": st.offset_symbols,
                "pool_symbols": st.pool_symbols,
            }
            for st in plan.stages
        ],
    }
    return json.dumps(doc, indent=2)


def plan_from_json(text: str) -> QcnnPlan:
    doc = json.loads(text)
    if doc.get("schema") != PLAN_SCHEMA:
        raise ValueError(f"unexpected plan schema {doc.get('schema')!r}")
    stages = [
        Stage(
            [tuple(p) for p in st["even_pairs"]],
            [tuple(p) for p in st["offset_pairs"]],
            [tuple(p) for p in st["pool_pairs"]],
            list(st["survivors"]),
            [list(s) for s in st["even_symbols"]],
            [list(s) for s in st["offset_symbols"]],
            list(st["pool_symbols"]),
        )
        for st in doc["stages"]
    ]
    return QcnnPlan(doc["num_qubits"], stages, doc["total_parameters"], doc["tied"])


# ---------------------------------------------------------------------------
# execution

def _resolve_angle(op: GateOp, theta: np.ndarray) -> float | None:
    if op.kind in (GateKind.CZ, GateKind.CNOT):
        return None
    return op.angle if op.angle is not None else float(theta[op.symbol])


def run_batch(
    circuit: Circuit,
    theta: np.ndarray,
    amps: np.ndarray,
    shifts: dict[int, float] | None = None,
    start_op: int = 0,
) -> np.ndarray:
    """Run the bound circuit over a (B, 2^n) batch of statevectors.

    ``shifts`` maps op indices to angle offsets (parameter-shift rule
    shifts one gate occurrence, not every gate sharing the symbol).
    ``start_op`` allows resuming from a cached intermediate state.
    """
    n = circuit.num_qubits
    psi = np.ascontiguousarray(amps, dtype=np.complex128).copy()
    for i in range(start_op, len(circuit.ops)):
        op = circuit.ops[i]
        angle = _resolve_angle(op, theta)
        if shifts and i in shifts:
            angle = angle + shifts[i]
        apply_op_inplace(psi, n, op, angle)
    return psi


def run_density(
    circuit: Circuit,
    theta: np.ndarray,
    rho: np.ndarray,
    noise: NoiseConfig,
    shifts: dict[int, float] | None = None,
) -> np.ndarray:
    """Density-matrix evolution with depolarizing noise after each block."""
    n = circuit.num_qubits
    noise_points = dict(circuit.noise_after) if noise.enabled else {}
    for i, op in enumerate(circuit.ops):
        angle = _resolve_angle(op, theta)
        if shifts and i in shifts:
            angle = angle + shifts[i]
        rho = dm_apply_op(rho, n, op, angle)
        if i in noise_points and noise.p > 0.0:
            for q in noise_points[i]:
                rho = dm_depolarize(rho, n, q, noise.p)
    return rho


def bind_and_run(
    circuit: Circuit,
    theta: np.ndarray,
    sample: EncodedSample,
    noise: NoiseConfig | None = None,
) -> StateVector | DensityMatrix:
    """Evaluate the circuit on one encoded input.

    Returns a StateVector on the noiseless path; with noise enabled the
    density-matrix path is engaged instead.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (circuit.num_symbols,):
        raise ValueError(
            f"parameter vector length {theta.size} != {circuit.num_symbols} symbols"
        )
    n = circuit.num_qubits
    if sample.amplitudes.shape != (2**n,):
        raise ValueError("sample dimension does not match circuit")
    if noise is not None and noise.enabled:
        rho = np.outer(sample.amplitudes, sample.amplitudes.conj())
        return DensityMatrix(n, run_density(circuit, theta, rho, noise))
    out = run_batch(circuit, theta, sample.amplitudes[None, :])
    return StateVector(n, out[0])
