"""Cost functions, parameter-shift gradients, Adam, and the training loop.

The composite loss is MSE between the circuit's score and the binary
label.  The parameter-shift rule differentiates the quantum score; the
MSE outer derivative is applied classically.  Symbols shared across
weight-tied blocks are differentiated by summing single-occurrence
shifts, which keeps the gradient exact (a naive whole-symbol shift is
not, once a symbol appears in more than one gate).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .circuit import Circuit, EncodedSample, QcnnPlan, circuit_from_plan, run_batch, run_density
from .sim import DensityMatrix, NoiseConfig, StateVector, dm_zexp, dm_projector_prob, projector_prob_batch, zexp_batch

METRICS_SCHEMA = "qcnnlab.metrics.v1"
CHECKPOINT_SCHEMA = "qcnnlab.checkpoint.v1"


class CostKind(str, Enum):
    LOCAL = "LOCAL"
    GLOBAL = "GLOBAL"


@dataclass
class TrainConfig:
    eta0: float = 0.015
    gamma: float = 0.9
    decay_steps: int | None = None  # None: one decay tier per epoch
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 150
    cost_kind: CostKind = CostKind.LOCAL
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.cost_kind, str):
            self.cost_kind = CostKind(self.cost_kind)
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.decay_steps is not None and self.decay_steps < 1:
            raise ValueError("decay_steps must be >= 1")


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, num_params: int) -> "OptimizerState":
        return cls(np.zeros(num_params), np.zeros(num_params), 0)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    grad_norm: float


# ---------------------------------------------------------------------------
# costs and scores

def _scores_from_batch(circuit: Circuit, psi: np.ndarray, survivors: list[int],
                       kind: CostKind) -> np.ndarray:
    n = circuit.num_qubits
    if kind == CostKind.GLOBAL:
        return 1.0 - projector_prob_batch(psi, n, tuple(survivors))
    z = np.stack([zexp_batch(psi, n, q) for q in survivors])
    return np.mean((1.0 - z) / 2.0, axis=0)


def cost_local(output: StateVector | DensityMatrix, survivors: list[int]) -> float:
    """(1/m) sum_i (1 - <Z_i>)/2 over the surviving qubits."""
    if len(survivors) == 0:
        raise ValueError("survivor set must be non-empty")
    if isinstance(output, DensityMatrix):
        z = [dm_zexp(output.elements, output.num_qubits, q) for q in survivors]
    else:
        z = [float(zexp_batch(output.amplitudes[None, :], output.num_qubits, q)[0])
             for q in survivors]
    return float(np.mean([(1.0 - zi) / 2.0 for zi in z]))


def cost_global(output: StateVector | DensityMatrix, survivors: list[int]) -> float:
    """1 - P(all survivors measured 0); 0 is optimal for label-0 targets."""
    if len(survivors) == 0:
        raise ValueError("survivor set must be non-empty")
    if isinstance(output, DensityMatrix):
        p = dm_projector_prob(output.elements, output.num_qubits, tuple(survivors))
    else:
        p = float(projector_prob_batch(output.amplitudes[None, :], output.num_qubits,
                                       tuple(survivors))[0])
    return 1.0 - p


def _stack_amplitudes(batch: list[EncodedSample]) -> tuple[np.ndarray, np.ndarray]:
    amps = np.stack([s.amplitudes for s in batch])
    labels = np.array([s.label for s in batch], dtype=np.float64)
    return amps, labels


def batch_scores(circuit: Circuit, theta: np.ndarray, amps: np.ndarray,
                 survivors: list[int], kind: CostKind) -> np.ndarray:
    psi = run_batch(circuit, theta, amps)
    return _scores_from_batch(circuit, psi, survivors, kind)


def predict(theta: np.ndarray, sample: EncodedSample, plan: QcnnPlan,
            noise: NoiseConfig | None = None,
            circuit: Circuit | None = None) -> tuple[float, int]:
    """Score (mean local one-population over survivors) and thresholded class."""
    from .circuit import bind_and_run

    circuit = circuit or circuit_from_plan(plan)
    out = bind_and_run(circuit, theta, sample, noise)
    score = cost_local(out, plan.survivors)
    return score, int(score >= 0.5)


def batch_loss(theta: np.ndarray, batch: list[EncodedSample], plan: QcnnPlan,
               cost_kind: CostKind = CostKind.LOCAL,
               circuit: Circuit | None = None) -> float:
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    circuit = circuit or circuit_from_plan(plan)
    amps, labels = _stack_amplitudes(batch)
    scores = batch_scores(circuit, theta, amps, plan.survivors, cost_kind)
    return float(np.mean((scores - labels) ** 2))


# ---------------------------------------------------------------------------
# parameter-shift differentiation

def score_jacobian(
    circuit: Circuit,
    theta: np.ndarray,
    amps: np.ndarray,
    survivors: list[int],
    kind: CostKind,
    symbols: list[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Scores (B,) and d(score)/d(theta) (B, len(symbols)) by shift rule.

    Caches the state before every parameterized op so each shifted
    evaluation replays only the circuit suffix.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if symbols is None:
        symbols = list(range(circuit.num_symbols))
    occ: dict[int, list[int]] = {s: [] for s in symbols}
    for i, op in enumerate(circuit.ops):
        if op.symbol in occ:
            occ[op.symbol].append(i)

    from .circuit import _resolve_angle
    from .sim import apply_op_inplace

    wanted = {i for idxs in occ.values() for i in idxs}
    prefix: dict[int, np.ndarray] = {}
    psi = np.ascontiguousarray(amps, dtype=np.complex128).copy()
    for i, op in enumerate(circuit.ops):
        if i in wanted:
            prefix[i] = psi.copy()
        apply_op_inplace(psi, circuit.num_qubits, op, _resolve_angle(op, theta))
    scores = _scores_from_batch(circuit, psi, survivors, kind)

    B = amps.shape[0]
    jac = np.zeros((B, len(symbols)))
    for col, s in enumerate(symbols):
        total = np.zeros(B)
        for k in occ[s]:
            plus = run_batch(circuit, theta, prefix[k], shifts={k: np.pi / 2}, start_op=k)
            minus = run_batch(circuit, theta, prefix[k], shifts={k: -np.pi / 2}, start_op=k)
            sp = _scores_from_batch(circuit, plus, survivors, kind)
            sm = _scores_from_batch(circuit, minus, survivors, kind)
            total += (sp - sm) / 2.0
        jac[:, col] = total
    return scores, jac


def parameter_shift_gradient(
    theta: np.ndarray,
    batch: list[EncodedSample],
    plan: QcnnPlan,
    cost_kind: CostKind = CostKind.LOCAL,
    circuit: Circuit | None = None,
) -> np.ndarray:
    """Gradient of the batch MSE loss via occurrence-summed shifts."""
    circuit = circuit or circuit_from_plan(plan)
    amps, labels = _stack_amplitudes(batch)
    scores, jac = score_jacobian(circuit, theta, amps, plan.survivors, cost_kind)
    outer = 2.0 * (scores - labels) / len(batch)
    return outer @ jac


# ---------------------------------------------------------------------------
# optimizer

def lr_at(t: int, config: TrainConfig, steps_per_tier: int | None = None) -> float:
    """eta0 * gamma^floor(t / S)."""
    s = config.decay_steps if config.decay_steps is not None else steps_per_tier
    if s is None or s < 1:
        raise ValueError("decay steps must be >= 1")
    return config.eta0 * config.gamma ** (t // s)


def adam_step(
    opt: OptimizerState,
    theta: np.ndarray,
    grad: np.ndarray,
    config: TrainConfig,
    lr: float,
) -> tuple[OptimizerState, np.ndarray]:
    if grad.shape != theta.shape or opt.m.shape != theta.shape:
        raise ValueError("gradient/optimizer dimensions do not match parameters")
    t = opt.t + 1
    m = config.beta1 * opt.m + (1 - config.beta1) * grad
    v = config.beta2 * opt.v + (1 - config.beta2) * grad**2
    m_hat = m / (1 - config.beta1**t)
    v_hat = v / (1 - config.beta2**t)
    theta_new = theta - lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return OptimizerState(m, v, t), theta_new


# ---------------------------------------------------------------------------
# training loop

def train(
    config: TrainConfig,
    plan: QcnnPlan,
    train_set: list[EncodedSample],
    val_set: list[EncodedSample],
    theta_init: np.ndarray,
) -> tuple[list[EpochMetrics], np.ndarray, OptimizerState]:
    """Mini-batch parameter-shift descent; deterministic for a fixed seed."""
    if not train_set or not val_set:
        raise ValueError("datasets must be non-empty")
    theta = np.asarray(theta_init, dtype=np.float64).copy()
    if theta.shape != (plan.total_parameters,):
        raise ValueError("theta_init length does not match plan")
    circuit = circuit_from_plan(plan)
    survivors = plan.survivors
    kind = config.cost_kind
    opt = OptimizerState.fresh(plan.total_parameters)
    rng = np.random.default_rng(config.seed)
    val_amps, val_labels = _stack_amplitudes(val_set)
    steps_per_epoch = max(1, (len(train_set) + config.batch_size - 1) // config.batch_size)

    history: list[EpochMetrics] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        losses, norms = [], []
        correct = 0
        for b0 in range(0, len(order), config.batch_size):
            idx = order[b0 : b0 + config.batch_size]
            batch = [train_set[i] for i in idx]
            amps, labels = _stack_amplitudes(batch)
            scores, jac = score_jacobian(circuit, theta, amps, survivors, kind)
            losses.append(float(np.mean((scores - labels) ** 2)))
            correct += int(np.sum((scores >= 0.5).astype(int) == labels.astype(int)))
            grad = (2.0 * (scores - labels) / len(batch)) @ jac
            norms.append(float(np.linalg.norm(grad)))
            lr = lr_at(opt.t, config, steps_per_tier=steps_per_epoch)
            opt, theta = adam_step(opt, theta, grad, config, lr)
        val_scores = batch_scores(circuit, theta, val_amps, survivors, kind)
        history.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                val_loss=float(np.mean((val_scores - val_labels) ** 2)),
                train_acc=correct / len(train_set),
                val_acc=float(np.mean((val_scores >= 0.5).astype(int) == val_labels.astype(int))),
                grad_norm=float(np.mean(norms)),
            )
        )
    return history, theta, opt


def evaluate(
    theta: np.ndarray,
    samples: list[EncodedSample],
    plan: QcnnPlan,
    noise: NoiseConfig | None = None,
    check_cptp: bool = False,
    cost_kind: CostKind = CostKind.LOCAL,
) -> tuple[float, float]:
    """(accuracy, mean score) over a dataset, optionally on the noisy path."""
    from .circuit import bind_and_run

    circuit = circuit_from_plan(plan)
    cost_fn = cost_global if cost_kind == CostKind.GLOBAL else cost_local
    if noise is None or not noise.enabled:
        amps, labels = _stack_amplitudes(samples)
        scores = batch_scores(circuit, theta, amps, plan.survivors, cost_kind)
    else:
        scores_l, labels_l = [], []
        for s in samples:
            out = bind_and_run(circuit, theta, s, noise)
            if check_cptp:
                out.check_physical(eig_atol=1e-10)
                tr = np.trace(out.elements)
                if abs(tr.real - 1.0) > 1e-12 or abs(tr.imag) > 1e-12:
                    raise ValueError("noisy output trace deviates from 1 beyond 1e-12")
            scores_l.append(cost_fn(out, plan.survivors))
            labels_l.append(s.label)
        scores = np.array(scores_l)
        labels = np.array(labels_l, dtype=np.float64)
    acc = float(np.mean((scores >= 0.5).astype(int) == labels.astype(int)))
    return acc, float(np.mean(scores))


# ---------------------------------------------------------------------------
# metrics / checkpoint files

def write_metrics_csv(path: str | Path, history: list[EpochMetrics]) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# schema: {METRICS_SCHEMA}\n")
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc", "grad_norm"])
        for m in history:
            w.writerow([m.epoch, f"{m.train_loss:.12g}", f"{m.val_loss:.12g}",
                        f"{m.train_acc:.12g}", f"{m.val_acc:.12g}", f"{m.grad_norm:.12g}"])


def save_checkpoint(
    path: str | Path,
    theta: np.ndarray,
    optimizer: OptimizerState | None = None,
    provenance: dict | None = None,
) -> None:
    doc: dict = {
        "schema": CHECKPOINT_SCHEMA,
        "theta": {str(i): float(v) for i, v in enumerate(np.asarray(theta))},
    }
    if optimizer is not None:
        doc["optimizer"] = {
            "m": [float(x) for x in optimizer.m],
            "v": [float(x) for x in optimizer.v],
            "t": optimizer.t,
        }
    if provenance is not None:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, indent=2))


def load_checkpoint(path: str | Path) -> tuple[np.ndarray, OptimizerState | None, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unexpected checkpoint schema {doc.get('schema')!r}")
    items = sorted(doc["theta"].items(), key=lambda kv: int(kv[0]))
    theta = np.array([v for _, v in items], dtype=np.float64)
    opt = None
    if "optimizer" in doc:
        o = doc["optimizer"]
        opt = OptimizerState(np.array(o["m"]), np.array(o["v"]), int(o["t"]))
    return theta, opt, doc.get("provenance", {})
