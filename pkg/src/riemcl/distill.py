"""Label-free teacher/student distillation across a stream of graphs.

Each session trains the student on one graph with two contrastive terms:

* intra -- a node's shallow (first-layer) encoding against its deep encoding,
* inter -- the frozen teacher's deep encoding against the student's,

both scored by the negated distance after a Lorentz layer.  After the session
the student is copied into the next teacher.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import autodiff as ad
from . import diffgeo as dg
from . import lorentz
from .curvnet import DEFAULT_KAPPA_SCALE, GraphInputs, curvnet_forward, init_curvnet, oracle_kappa
from .graphstore import Graph, TaskSequence, labels_forbidden
from .manifold import check_kappa
from .rgcn import EncoderConfig, encode, init_encoder, neighborhood_mask

log = logging.getLogger(__name__)

CURVATURE_MODES = ("curvnet", "fixed", "forman_oracle")
SIMILARITY_MODES = ("glp", "tangent")
DENOMINATOR_MODES = ("paper_literal", "standard")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    layer_dims: list[int] = field(default_factory=lambda: [8, 16, 16])
    slope: float = ad.LEAKY_SLOPE
    curvature_mode: str = "curvnet"
    fixed_kappa: float = -1.0
    kappa_scale: float = DEFAULT_KAPPA_SCALE
    curvnet_hidden: int = 16
    similarity: str = "glp"

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if self.curvature_mode not in CURVATURE_MODES:
            raise ValueError(f"curvature_mode must be one of {CURVATURE_MODES}")
        if self.similarity not in SIMILARITY_MODES:
            raise ValueError(f"similarity must be one of {SIMILARITY_MODES}")
        if self.curvature_mode == "fixed":
            check_kappa(self.fixed_kappa)

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.layer_dims, self.slope)


@dataclass
class DistillConfig:
    lambda_: float = 1.0
    epochs_max: int = 500
    patience: int = 20
    tol: float = 1e-5
    lr: float = 0.01
    tau: float = 1.0
    seed: int = 0
    denominator_mode: str = "paper_literal"
    glp_mode: str = "lenient"

    def __post_init__(self):
        if self.epochs_max < 1:
            raise ValueError("epochs_max must be >= 1")
        if self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ValueError(f"denominator_mode must be one of {DENOMINATOR_MODES}")
        if self.glp_mode not in ("strict", "lenient"):
            raise ValueError("glp_mode must be 'strict' or 'lenient'")


@dataclass
class StudentState:
    """All trainable arrays (flat names) plus the curvature from the last forward pass."""

    params: dict[str, np.ndarray]
    kappa: float
    model: ModelConfig

    def copy(self) -> "StudentState":
        return StudentState({k: v.copy() for k, v in self.params.items()}, self.kappa, copy.deepcopy(self.model))


@dataclass(frozen=True)
class TeacherState:
    params: dict[str, np.ndarray]
    kappa: float
    model: ModelConfig


def init_student(model: ModelConfig, seed: int) -> StudentState:
    rng = np.random.default_rng(seed)
    params = {f"enc.{k}": v for k, v in init_encoder(model.encoder, rng).items()}
    params.update({f"curv.{k}": v for k, v in init_curvnet(rng, model.curvnet_hidden).items()})
    low, high = model.layer_dims[1], model.layer_dims[-1]
    params.update({f"intra.{k}": v for k, v in lorentz.init_lorentz(low, high, rng).items()})
    params.update({f"inter.{k}": v for k, v in lorentz.init_lorentz(high, high, rng).items()})
    kappa = model.fixed_kappa if model.curvature_mode == "fixed" else float("nan")
    return StudentState(params, kappa, model)


def promote(student: StudentState) -> TeacherState:
    """Deep, read-only copy of the student."""
    params = {}
    for k, v in student.params.items():
        a = np.array(v, copy=True)
        a.flags.writeable = False
        params[k] = a
    return TeacherState(params, float(student.kappa), copy.deepcopy(student.model))


def _sub(params: dict, prefix: str) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".")}


class SessionInputs:
    """Everything derived from the graph once per session (no labels)."""

    def __init__(self, g: Graph, model: ModelConfig):
        self.n = g.n_nodes
        self.mask = neighborhood_mask(g)
        self.features = g.input_features()
        if self.features.shape[1] != model.layer_dims[0]:
            raise ValueError(
                f"graph {g.name!r} has {self.features.shape[1]} features, encoder expects {model.layer_dims[0]}"
            )
        self.curv = GraphInputs(g) if model.curvature_mode == "curvnet" else None
        self.oracle = oracle_kappa(g, model.kappa_scale) if model.curvature_mode == "forman_oracle" else None


def curvature(params: dict, inputs: SessionInputs, model: ModelConfig):
    if model.curvature_mode == "fixed":
        return ad.Tensor(model.fixed_kappa)
    if model.curvature_mode == "forman_oracle":
        return ad.Tensor(inputs.oracle)
    return curvnet_forward(inputs.curv, _sub(params, "curv"), model.kappa_scale)


def forward(params: dict, inputs: SessionInputs, model: ModelConfig, kappa=None):
    """``(kappa, low_view, high_view)``; ``kappa`` overrides the curvature source when given."""
    k = curvature(params, inputs, model) if kappa is None else ad.as_tensor(kappa)
    low, high = encode(inputs.mask, inputs.features, _sub(params, "enc"), k, model.encoder)
    return k, low, high


def embed(state: StudentState | TeacherState, g: Graph, kappa: float | None = None):
    """Frozen encodings of ``g``: ``(kappa, low, high)`` as numpy arrays."""
    inputs = SessionInputs(g, state.model)
    k, low, high = forward(state.params, inputs, state.model, kappa)
    return float(k.value), low.value, high.value


# --- losses -----------------------------------------------------------------


class LossTerm(NamedTuple):
    value: ad.Tensor
    pairs: int  # pair similarities in the denominators


def project(x, proj: dict, kappa_src, kappa_tgt, similarity: str = "glp", glp_mode: str = "lenient"):
    if similarity == "glp":
        return lorentz.lorentz_forward(x, proj["W"], proj["b"], kappa_tgt, glp_mode)
    return lorentz.tangent_forward(x, proj["W"], proj["b"], kappa_src, kappa_tgt)


def similarity_matrix(anchors, candidates, proj, kappa_src, kappa_tgt, similarity="glp", glp_mode="lenient"):
    """``S[i, j] = -d(project(anchor_i), candidate_j)`` on the target manifold."""
    p = project(anchors, proj, kappa_src, kappa_tgt, similarity, glp_mode)
    return -dg.pairwise_distance(p, candidates, kappa_tgt)


def info_nce(sim, tau: float, mode: str = "paper_literal") -> LossTerm:
    """``sum_i -log(exp(S_ii/tau) / sum_j exp(S_ij/tau))`` over the masked ``j``.

    ``paper_literal`` drops ``j == i`` from the denominator; ``standard`` keeps it.
    """
    n = sim.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least two nodes (empty negative set)")
    s = sim / tau
    eye = np.eye(n, dtype=bool)
    mask = ~eye if mode == "paper_literal" else np.ones((n, n), dtype=bool)
    if mode not in DENOMINATOR_MODES:
        raise ValueError(f"unknown denominator mode {mode!r}")
    shift = np.max(np.where(mask, s.value, -np.inf), axis=1, keepdims=True)
    z = ad.where(mask, s, shift) - shift
    lse = ad.log((ad.exp(z) * mask).sum(axis=1)) + shift[:, 0]
    positive = (s * eye).sum(axis=1)
    return LossTerm((lse - positive).sum(), int(mask.sum()))


def intra_loss(low, high, proj: dict, kappa, tau: float = 1.0, mode: str = "paper_literal",
               similarity: str = "glp", glp_mode: str = "lenient") -> LossTerm:
    if low.shape[0] != high.shape[0]:
        raise ValueError("views must cover the same nodes")
    return info_nce(similarity_matrix(low, high, proj, kappa, kappa, similarity, glp_mode), tau, mode)


def inter_loss(teacher_high, student_high, proj: dict, kappa_teacher, kappa_student, tau: float = 1.0,
               mode: str = "paper_literal", similarity: str = "glp", glp_mode: str = "lenient") -> LossTerm:
    if teacher_high.shape[0] != student_high.shape[0]:
        raise ValueError("views must cover the same nodes")
    sim = similarity_matrix(teacher_high, student_high, proj, kappa_teacher, kappa_student, similarity, glp_mode)
    return info_nce(sim, tau, mode)


# --- sessions ---------------------------------------------------------------


@dataclass
class SessionLog:
    loss: list[float] = field(default_factory=list)
    intra: list[float] = field(default_factory=list)
    inter: list[float] = field(default_factory=list)
    kappa: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def epochs(self) -> int:
        return len(self.loss)


def teacher_view(teacher: TeacherState, inputs: SessionInputs):
    """The teacher's deep encoding of the current graph under its frozen curvature."""
    _, _, high = forward(teacher.params, inputs, teacher.model, kappa=teacher.kappa)
    return high.value


def objective(params: dict, inputs: SessionInputs, model: ModelConfig, cfg: DistillConfig,
              teacher: TeacherState | None = None, teacher_high: np.ndarray | None = None):
    """``(J, J_intra, J_inter or None, kappa)`` for one full-graph pass."""
    kappa, low, high = forward(params, inputs, model)
    j_intra = intra_loss(low, high, _sub(params, "intra"), kappa, cfg.tau, cfg.denominator_mode,
                         model.similarity, cfg.glp_mode).value
    j_inter = None
    total = j_intra
    if teacher is not None and cfg.lambda_ > 0:
        if teacher_high is None:
            teacher_high = teacher_view(teacher, inputs)
        j_inter = inter_loss(teacher_high, high, _sub(params, "inter"), teacher.kappa, kappa, cfg.tau,
                             cfg.denominator_mode, model.similarity, cfg.glp_mode).value
        total = j_intra + cfg.lambda_ * j_inter
    return total, j_intra, j_inter, kappa


def run_session(g: Graph, teacher: TeacherState | None, init: StudentState, cfg: DistillConfig):
    """Train the student on one graph until the loss plateaus; labels are never read."""
    model = init.model
    params = {k: v.copy() for k, v in init.params.items()}
    opt = ad.AdamState(learning_rate=cfg.lr)
    record = SessionLog()
    with labels_forbidden():
        inputs = SessionInputs(g, model)
        t_high = teacher_view(teacher, inputs) if teacher is not None and cfg.lambda_ > 0 else None
        still = 0
        kappa_val = init.kappa
        for epoch in range(cfg.epochs_max):
            leaves = {k: ad.Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
            total, j_intra, j_inter, kappa = objective(leaves, inputs, model, cfg, teacher, t_high)
            loss = float(total.value)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} on graph {g.name!r}")
            kappa_val = float(kappa.value)
            record.loss.append(loss)
            record.intra.append(float(j_intra.value))
            record.inter.append(float(j_inter.value) if j_inter is not None else float("nan"))
            record.kappa.append(kappa_val)
            grads = ad.backward(total, wrt=leaves.values())
            params = ad.optimizer_step(params, {k: grads[t] for k, t in leaves.items()}, opt)
            if epoch and abs(record.loss[-2] - loss) < cfg.tol:
                still += 1
                if still >= cfg.patience:
                    record.converged = True
                    break
            else:
                still = 0
        # curvature of the final parameters, for the next teacher
        inputs_kappa = curvature(params, inputs, model)
        kappa_val = float(inputs_kappa.value)
    return StudentState(params, kappa_val, model), record


@dataclass
class SequenceResult:
    states: list[StudentState]
    logs: list[SessionLog]
    promotions: int = 0


def run_sequence(seq: TaskSequence, model: ModelConfig, cfg: DistillConfig,
                 checkpoint_dir=None, on_session_end: Callable | None = None) -> SequenceResult:
    """Chain sessions over the stream: train, checkpoint, promote, drop the graph.

    ``on_session_end(t, state)`` runs after session ``t`` (0-based) -- the
    evaluation harness hooks in here.
    """
    from .checkpoint import save_checkpoint

    state = init_student(model, cfg.seed)
    teacher = None
    result = SequenceResult([], [])
    for t, task in enumerate(seq):
        g = task.load()
        state, record = run_session(g, teacher, state, cfg)
        del g
        result.states.append(state)
        result.logs.append(record)
        log.info("task %d/%d: %d epochs, loss %.6g, kappa %.4f", t + 1, len(seq), record.epochs,
                 record.loss[-1], state.kappa)
        if checkpoint_dir is not None:
            save_checkpoint(f"{checkpoint_dir}/task{t + 1}.ckpt", state, task_index=t + 1, seed=cfg.seed,
                            config_hash=config_hash(model, cfg))
        if on_session_end is not None:
            on_session_end(t, state)
        if t + 1 < len(seq):
            teacher = promote(state)
            result.promotions += 1
    return result


def config_hash(model: ModelConfig, cfg: DistillConfig) -> str:
    doc = json.dumps({"model": asdict(model), "distill": asdict(cfg)}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]
