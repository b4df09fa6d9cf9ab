"""Reusable experiment drivers behind the command-line front end.

Each driver is a pure function of explicit inputs plus a named seed, so
runs are reproducible and the CLI layer only handles argument plumbing
and file output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import EncodedSample, QcnnPlan, Stage, variance_scan_plan
from .data import BinaryDataset
from .sim import NoiseConfig
from .tni import TniConfig, tni_pretrain
from .training import (
    CostKind,
    EpochMetrics,
    TrainConfig,
    batch_scores,
    evaluate,
    run_batch,
    train,
)
from .training import _scores_from_batch  # shared cost dispatch


@dataclass
class VarianceRow:
    n: int
    cost_kind: str
    variance: float
    samples: int


@dataclass
class AblationRow:
    seed: int
    tni_first_loss: float
    random_first_loss: float
    tni_terminal_acc: float
    random_terminal_acc: float


@dataclass
class AblationSummary:
    rows: list[AblationRow]
    median_initial_loss_reduction: float
    random_premature_fraction: float


@dataclass
class NoiseRow:
    p: float
    accuracy: float
    mean_score: float


def gradient_variance_scan(
    n_min: int,
    n_max: int,
    samples_per_n: int,
    seed: int,
    step: int = 2,
    input_state: str = "zero",
) -> list[VarianceRow]:
    """Empirical Var[dC/dtheta_0] per qubit count and cost kind.

    theta_0 is the first rotation of the first convolution block; its
    gradient comes from a single +/- pi/2 shifted pair per draw, on the
    untied single-stage ansatz.  The input is |0...0> by default, or a
    fresh random product state per draw with input_state="random-product".
    """
    if not (2 <= n_min <= n_max <= 14):
        raise ValueError("qubit range must satisfy 2 <= n_min <= n_max <= 14")
    if samples_per_n < 1:
        raise ValueError("samples_per_n must be >= 1")
    if input_state not in ("zero", "random-product"):
        raise ValueError(f"unknown input_state {input_state!r}")
    rng = np.random.default_rng(seed)
    rows: list[VarianceRow] = []
    for n in range(n_min, n_max + 1, step):
        plan, circ = variance_scan_plan(n)
        grads = {CostKind.GLOBAL: [], CostKind.LOCAL: []}
        for _ in range(samples_per_n):
            psi0 = _scan_input(rng, n, input_state)
            theta = rng.uniform(0.0, 2.0 * np.pi, plan.total_parameters)
            shifted = {}
            for sign in (1.0, -1.0):
                psi = run_batch(circ, theta, psi0, shifts={0: sign * np.pi / 2})
                shifted[sign] = {
                    kind: _scores_from_batch(circ, psi, plan.survivors, kind)[0]
                    for kind in grads
                }
            for kind in grads:
                grads[kind].append((shifted[1.0][kind] - shifted[-1.0][kind]) / 2.0)
        for kind, g in grads.items():
            rows.append(VarianceRow(n, kind.value, float(np.var(g)), samples_per_n))
    return rows


def _scan_input(rng: np.random.Generator, n: int, input_state: str) -> np.ndarray:
    if input_state == "zero":
        psi = np.zeros((1, 2**n), dtype=np.complex128)
        psi[0, 0] = 1.0
        return psi
    site_states = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    site_states /= np.linalg.norm(site_states, axis=1, keepdims=True)
    psi = site_states[0]
    for s in site_states[1:]:
        psi = np.kron(psi, s)
    return psi[None, :]


def ablation_study(
    train_set: list[EncodedSample],
    val_set: list[EncodedSample],
    test_set: list[EncodedSample],
    plan: QcnnPlan,
    num_seeds: int,
    train_config: TrainConfig,
    tni_config: TniConfig,
    premature_acc_cap: float = 0.90,
) -> AblationSummary:
    """Paired warm-start-vs-random runs over independent seeds."""
    if num_seeds < 3:
        raise ValueError("ablation needs num_seeds >= 3")
    rows: list[AblationRow] = []
    for seed in range(num_seeds):
        rng = np.random.default_rng(seed + tni_config.seed)
        subset_idx = rng.choice(
            len(train_set), size=min(tni_config.subset_size, len(train_set)),
            replace=False,
        )
        subset = [train_set[i] for i in subset_idx]
        tni_cfg = TniConfig(**{**tni_config.__dict__, "seed": seed + tni_config.seed})
        theta_tni = tni_pretrain(subset, plan, tni_cfg)
        theta_rand = rng.uniform(0.0, 2.0 * np.pi, plan.total_parameters)

        cfg = TrainConfig(**{**train_config.__dict__, "seed": seed})
        hist_t, theta_t, _ = train(cfg, plan, train_set, val_set, theta_tni)
        hist_r, theta_r, _ = train(cfg, plan, train_set, val_set, theta_rand)
        acc_t, _ = evaluate(theta_t, test_set, plan)
        acc_r, _ = evaluate(theta_r, test_set, plan)
        rows.append(AblationRow(seed, hist_t[0].train_loss, hist_r[0].train_loss,
                                acc_t, acc_r))
    reductions = [1.0 - r.tni_first_loss / r.random_first_loss for r in rows]
    premature = np.mean([r.random_terminal_acc < premature_acc_cap for r in rows])
    return AblationSummary(rows, float(np.median(reductions)), float(premature))


def noise_sweep(
    theta: np.ndarray,
    test_set: list[EncodedSample],
    plan: QcnnPlan,
    p_list: list[float],
    cost_kind: CostKind = CostKind.LOCAL,
    check_cptp: bool = True,
) -> list[NoiseRow]:
    """Fixed-checkpoint test accuracy per depolarizing strength."""
    for p in p_list:
        if not 0.0 <= p <= 0.75:
            raise ValueError(f"depolarizing strength {p} outside [0, 0.75]")
    rows = []
    for p in p_list:
        noise = NoiseConfig(p=p, enabled=p > 0.0)
        acc, mean_score = evaluate(theta, test_set, plan, noise=noise,
                                   cost_kind=cost_kind, check_cptp=check_cptp)
        rows.append(NoiseRow(p, acc, mean_score))
    return rows


def global_baseline_plan(plan: QcnnPlan) -> QcnnPlan:
    """Same circuit, but the cost observable covers the full register.

    The stagnating global-cost baseline measures the all-zeros projector
    over every qubit; a projector restricted to the two final survivors
    is effectively a local observable and trains almost as well as the
    local cost, which is not the behavior the baseline models.
    """
    last = plan.stages[-1]
    widened = Stage(last.even_pairs, last.offset_pairs, last.pool_pairs,
                    list(range(plan.num_qubits)), last.even_symbols,
                    last.offset_symbols, last.pool_symbols)
    return QcnnPlan(plan.num_qubits, plan.stages[:-1] + [widened],
                    plan.total_parameters, plan.tied)


def train_study(
    train_set: list[EncodedSample],
    val_set: list[EncodedSample],
    test_set: list[EncodedSample],
    plan: QcnnPlan,
    train_config: TrainConfig,
    init: str,
    tni_config: TniConfig | None = None,
) -> tuple[list[EpochMetrics], np.ndarray, float]:
    """Optional TNI warm start followed by training; returns history,
    final parameters, and test accuracy."""
    if train_config.cost_kind == CostKind.GLOBAL:
        plan = global_baseline_plan(plan)
    if init == "tni":
        cfg = tni_config or TniConfig(seed=train_config.seed)
        rng = np.random.default_rng(cfg.seed)
        subset_idx = rng.choice(len(train_set),
                                size=min(cfg.subset_size, len(train_set)),
                                replace=False)
        theta0 = tni_pretrain([train_set[i] for i in subset_idx], plan, cfg)
    elif init == "random":
        rng = np.random.default_rng(train_config.seed)
        theta0 = rng.uniform(0.0, 2.0 * np.pi, plan.total_parameters)
    else:
        raise ValueError(f"unknown init scheme {init!r}")
    history, theta, _ = train(train_config, plan, train_set, val_set, theta0)
    acc, _ = evaluate(theta, test_set, plan, cost_kind=train_config.cost_kind)
    return history, theta, acc
