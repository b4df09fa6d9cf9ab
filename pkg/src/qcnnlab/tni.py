"""Classical tensor-network warm start for the QCNN parameters.

Inputs are compressed to matrix product states (MPS); the staged
conv/pool architecture maps to a tree of two-qubit block tensors that is
contracted against the MPS to score samples without materializing 2^n
amplitudes.  A short Adam descent on a cross-entropy pseudo-loss yields
parameter seeds for the quantum training loop.

Blocks act on possibly non-adjacent chain sites; routing is handled by
nearest-neighbour swaps with the same split-and-truncate primitive, so
every bond stays capped at the configured dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import EncodedSample, QcnnPlan
from .sim import GateKind, rotation_matrix
from .training import OptimizerState, TrainConfig, adam_step

_CZ4 = np.diag([1.0, 1.0, 1.0, -1.0]).astype(np.complex128)
_CNOT4 = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)
_SWAP4 = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128
)
_EYE2 = np.eye(2, dtype=np.complex128)

_SVD_CUTOFF = 1e-12


@dataclass
class TniConfig:
    chi: int = 16
    chi_data: int = 1
    iterations: int = 50
    subset_size: int = 128
    init_stddev: float = 0.1
    seed: int = 0
    batch_size: int = 8
    eta: float = 0.05

    def __post_init__(self):
        if self.chi < 1 or self.chi_data < 1 or self.iterations < 1:
            raise ValueError("chi, chi_data, and iterations must all be >= 1")


@dataclass
class MpsState:
    """Chain of rank-3 tensors (left bond, physical 2, right bond)."""

    tensors: list[np.ndarray]

    def __post_init__(self):
        bond = 1
        for t in self.tensors:
            if t.ndim != 3 or t.shape[0] != bond or t.shape[1] != 2:
                raise ValueError("inconsistent MPS tensor shapes")
            bond = t.shape[2]
        if bond != 1:
            raise ValueError("MPS boundary bond must be 1")

    @property
    def num_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]


@dataclass
class TtnNode:
    kind: str  # "conv" | "pool"
    qubits: tuple[int, int]
    symbols: list[int]  # 4 for conv, 1 for pool
    matrix: np.ndarray  # 4x4 unitary at the bound angles


@dataclass
class TtnModel:
    num_qubits: int
    nodes: list[TtnNode]
    survivors: list[int]
    total_parameters: int


def conv_matrix(angles: np.ndarray) -> np.ndarray:
    """(RY(a3) x RY(a4)) . CZ . (RX(a1) x RX(a2))."""
    a1, a2, a3, a4 = angles
    pre = np.kron(rotation_matrix(GateKind.RX, a1), rotation_matrix(GateKind.RX, a2))
    post = np.kron(rotation_matrix(GateKind.RY, a3), rotation_matrix(GateKind.RY, a4))
    return post @ _CZ4 @ pre


def pool_matrix(angle: float) -> np.ndarray:
    """CNOT . (I x RY(angle)) . CNOT, control on the first qubit."""
    return _CNOT4 @ np.kron(_EYE2, rotation_matrix(GateKind.RY, angle)) @ _CNOT4


def ttn_from_plan(plan: QcnnPlan, theta: np.ndarray) -> TtnModel:
    """One tree node per conv/pool block, in circuit emission order."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (plan.total_parameters,):
        raise ValueError("theta length does not match plan")
    nodes: list[TtnNode] = []
    for stage in plan.stages:
        for pair, syms in zip(stage.even_pairs, stage.even_symbols):
            nodes.append(TtnNode("conv", pair, list(syms), conv_matrix(theta[syms])))
        for pair, syms in zip(stage.offset_pairs, stage.offset_symbols):
            nodes.append(TtnNode("conv", pair, list(syms), conv_matrix(theta[syms])))
        for pair, sym in zip(stage.pool_pairs, stage.pool_symbols):
            nodes.append(TtnNode("pool", pair, [sym], pool_matrix(float(theta[sym]))))
    return TtnModel(plan.num_qubits, nodes, plan.survivors, plan.total_parameters)


# ---------------------------------------------------------------------------
# batched MPS engine; tensors carry a leading batch axis (B, l, 2, r)

def _split(theta_t: np.ndarray, chi: int | None) -> tuple[np.ndarray, np.ndarray]:
    """SVD-split a (B, l, 2, 2, r) two-site blob back into two tensors.

    The kept rank is uniform across the batch (max numerical rank, capped)
    so tensor shapes stay deterministic; dropped weight is renormalized
    away per sample.
    """
    B, l, _, _, r = theta_t.shape
    mat = theta_t.reshape(B, l * 2, 2 * r)
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    smax = np.max(s, axis=1, keepdims=True)
    significant = s > _SVD_CUTOFF * np.maximum(smax, _SVD_CUTOFF)
    k = max(1, int(np.max(np.sum(significant, axis=1))))
    if chi is not None:
        k = min(k, chi)
    u, s, vt = u[:, :, :k], s[:, :k], vt[:, :k, :]
    norm = np.linalg.norm(s, axis=1, keepdims=True)
    s = s / np.maximum(norm, _SVD_CUTOFF)
    left = u.reshape(B, l, 2, k)
    right = (s[:, :, None] * vt).reshape(B, k, 2, r)
    return left, right


class _BatchedMps:
    """Mutable batched MPS used by the contraction engine."""

    def __init__(self, tensors: list[np.ndarray]):
        self.tensors = tensors

    @classmethod
    def from_vectors(cls, amps: np.ndarray, num_sites: int, chi: int | None) -> "_BatchedMps":
        B = amps.shape[0]
        tensors = []
        rest = np.ascontiguousarray(amps, dtype=np.complex128).reshape(B, 1, -1)
        for site in range(num_sites - 1):
            l = rest.shape[1]
            mat = rest.reshape(B, l * 2, -1)
            u, s, vt = np.linalg.svd(mat, full_matrices=False)
            smax = np.max(s, axis=1, keepdims=True)
            significant = s > _SVD_CUTOFF * np.maximum(smax, _SVD_CUTOFF)
            k = max(1, int(np.max(np.sum(significant, axis=1))))
            if chi is not None:
                k = min(k, chi)
            u, s, vt = u[:, :, :k], s[:, :k], vt[:, :k, :]
            norm = np.linalg.norm(s, axis=1, keepdims=True)
            s = s / np.maximum(norm, _SVD_CUTOFF)
            tensors.append(u.reshape(B, l, 2, k))
            rest = s[:, :, None] * vt
        tensors.append(rest.reshape(B, -1, 2, 1))
        # normalize the last tensor per sample
        last = tensors[-1]
        nrm = np.sqrt(np.sum(np.abs(last) ** 2, axis=(1, 2, 3), keepdims=True))
        tensors[-1] = last / np.maximum(nrm, _SVD_CUTOFF)
        return cls(tensors)

    def copy(self) -> "_BatchedMps":
        return _BatchedMps([t.copy() for t in self.tensors])

    def apply_two_site(self, i: int, mat4: np.ndarray, chi: int | None) -> None:
        a, b = self.tensors[i], self.tensors[i + 1]
        blob = np.einsum("Blpm,Bmqr->Blpqr", a, b, optimize=True)
        B, l, _, _, r = blob.shape
        blob = np.einsum("xy,Blyr->Blxr", mat4, blob.reshape(B, l, 4, r), optimize=True)
        self.tensors[i], self.tensors[i + 1] = _split(blob.reshape(B, l, 2, 2, r), chi)

    def apply_gate(self, a: int, b: int, mat4: np.ndarray, chi: int | None) -> None:
        """Apply a two-qubit gate to sites a < b, routing with swaps."""
        if not a < b:
            raise ValueError("expects a < b")
        for j in range(b - 1, a, -1):
            self.apply_two_site(j, _SWAP4, chi)
        self.apply_two_site(a, mat4, chi)
        for j in range(a + 1, b):
            self.apply_two_site(j, _SWAP4, chi)

    def _sweep(self, z_site: int | None) -> np.ndarray:
        B = self.tensors[0].shape[0]
        env = np.ones((B, 1, 1), dtype=np.complex128)
        for site, t in enumerate(self.tensors):
            top = t.conj()
            bot = t
            if site == z_site:
                bot = bot.copy()
                bot[:, :, 1, :] *= -1
            env = np.einsum("Blm,Blpr,Bmps->Brs", env, top, bot, optimize=True)
        return env[:, 0, 0]

    def z_expectations(self, sites: list[int]) -> np.ndarray:
        """<Z_site>/<1> per batch entry, shape (B, len(sites))."""
        norm = np.real(self._sweep(None))
        cols = [np.real(self._sweep(s)) / norm for s in sites]
        return np.stack(cols, axis=1)


def mps_from_vector(amplitudes: np.ndarray, chi_cap: int) -> MpsState:
    """Left-to-right SVD sweep with per-bond truncation and renormalization."""
    amps = np.asarray(amplitudes, dtype=np.complex128).ravel()
    n = int(np.log2(amps.size))
    if 2**n != amps.size:
        raise ValueError("amplitude vector length must be a power of 2")
    if np.linalg.norm(amps) < _SVD_CUTOFF:
        raise ValueError("cannot build an MPS from the zero vector")
    batched = _BatchedMps.from_vectors(amps[None, :], n, chi_cap)
    return MpsState([t[0] for t in batched.tensors])


def mps_to_vector(mps: MpsState) -> np.ndarray:
    vec = mps.tensors[0].reshape(2, -1)
    for t in mps.tensors[1:]:
        vec = np.einsum("ki,ipr->kpr", vec, t, optimize=True).reshape(-1, t.shape[2])
    return vec.reshape(-1)


def contract_and_score(
    ttn: TtnModel,
    mps: MpsState,
    survivors: list[int] | None = None,
    chi: int | None = None,
) -> float:
    """Mean (1 - <Z_i>)/2 over survivors, by pure tensor contraction."""
    if survivors is None:
        survivors = ttn.survivors
    if len(survivors) == 0:
        raise ValueError("survivor set must be non-empty")
    if mps.num_sites != ttn.num_qubits:
        raise ValueError("MPS site count does not match the network")
    state = _BatchedMps([t[None, ...] for t in mps.tensors])
    for node in ttn.nodes:
        state.apply_gate(*node.qubits, node.matrix, chi)
    z = state.z_expectations(survivors)[0]
    return float(np.mean((1.0 - z) / 2.0))


def pseudo_loss(score: float, label: int) -> float:
    """Binary cross-entropy on the clamped score."""
    s = min(max(score, 1e-7), 1.0 - 1e-7)
    return float(-(label * np.log(s) + (1 - label) * np.log(1.0 - s)))


# ---------------------------------------------------------------------------
# pre-training

def _node_matrix(node: TtnNode, theta: np.ndarray, shift_slot: int | None = None,
                 delta: float = 0.0) -> np.ndarray:
    angles = theta[node.symbols].astype(np.float64).copy()
    if shift_slot is not None:
        angles[shift_slot] += delta
    if node.kind == "conv":
        return conv_matrix(angles)
    return pool_matrix(float(angles[0]))


def _batched_scores(
    nodes: list[TtnNode],
    theta: np.ndarray,
    state0: _BatchedMps,
    survivors: list[int],
    chi: int,
    with_jacobian: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Scores (B,) and optional d(score)/d(theta) by occurrence shifts.

    The MPS state is checkpointed before each node so a shifted
    evaluation replays only the node suffix.
    """
    checkpoints: list[_BatchedMps] = []
    state = state0.copy()
    for node in nodes:
        checkpoints.append(state.copy() if with_jacobian else None)
        state.apply_gate(*node.qubits, _node_matrix(node, theta), chi)
    z = state.z_expectations(survivors)
    scores = np.mean((1.0 - z) / 2.0, axis=1)
    if not with_jacobian:
        return scores, None

    B = scores.shape[0]
    jac = np.zeros((B, theta.size))
    for j, node in enumerate(nodes):
        for slot, sym in enumerate(node.symbols):
            shifted_scores = []
            for delta in (np.pi / 2, -np.pi / 2):
                st = checkpoints[j].copy()
                st.apply_gate(*node.qubits, _node_matrix(node, theta, slot, delta), chi)
                for later in nodes[j + 1 :]:
                    st.apply_gate(*later.qubits, _node_matrix(later, theta), chi)
                zz = st.z_expectations(survivors)
                shifted_scores.append(np.mean((1.0 - zz) / 2.0, axis=1))
            jac[:, sym] += (shifted_scores[0] - shifted_scores[1]) / 2.0
    return scores, jac


def tni_pretrain(
    data: list[EncodedSample],
    plan: QcnnPlan,
    config: TniConfig,
) -> np.ndarray:
    """Alg-style warm start: seeded small-variance init, T iterations of
    Adam on the cross-entropy pseudo-loss of the TTN/MPS contraction."""
    if len(data) == 0:
        raise ValueError("pre-training subset must be non-empty")
    rng = np.random.default_rng(config.seed)
    theta = rng.normal(0.0, config.init_stddev, plan.total_parameters)
    nodes = ttn_from_plan(plan, theta).nodes  # layout only; matrices rebuilt per step
    survivors = plan.survivors

    adam_cfg = TrainConfig(eta0=config.eta, gamma=1.0, decay_steps=1,
                           batch_size=config.batch_size, epochs=1, seed=config.seed)
    opt = OptimizerState.fresh(plan.total_parameters)
    amps_all = np.stack([s.amplitudes for s in data])
    labels_all = np.array([s.label for s in data], dtype=np.float64)
    n = plan.num_qubits

    for _ in range(config.iterations):
        idx = rng.choice(len(data), size=min(config.batch_size, len(data)), replace=False)
        amps, labels = amps_all[idx], labels_all[idx]
        state0 = _BatchedMps.from_vectors(amps, n, config.chi_data)
        nodes = ttn_from_plan(plan, theta).nodes
        scores, jac = _batched_scores(nodes, theta, state0, survivors, config.chi, True)
        s = np.clip(scores, 1e-7, 1.0 - 1e-7)
        outer = (s - labels) / (s * (1.0 - s)) / len(labels)
        grad = outer @ jac
        opt, theta = adam_step(opt, theta, grad, adam_cfg, config.eta)
    return theta
