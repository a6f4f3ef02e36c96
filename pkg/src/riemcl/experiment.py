"""Run configuration and the train-then-evaluate harness behind ``riemcl run``."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .distill import (
    CURVATURE_MODES,
    DENOMINATOR_MODES,
    SIMILARITY_MODES,
    DistillConfig,
    ModelConfig,
    SessionLog,
    embed,
    run_sequence,
)
from .evaluate import AccuracyMatrix, accuracy, distortion, pm_fm
from .graphstore import TaskSequence, load_sequence, synth_sequence

log = logging.getLogger(__name__)

DEFAULT_SYNTH_SPEC = {
    "feature_dim": 8,
    "seed": 0,
    "tasks": [
        {"name": "tree", "generator": "balanced_tree", "branching": 3, "depth": 3},
        {"name": "cliques", "generator": "clique_ring", "clique_size": 6, "n_cliques": 10},
        {"name": "random", "generator": "erdos_renyi", "n": 60, "p": 0.1, "n_classes": 3},
    ],
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything one ``run`` needs; serialized verbatim next to its outputs."""

    manifest: str | None = None
    synthetic: dict | None = None
    layer_dims: list[int] = field(default_factory=lambda: [8, 16, 16])
    slope: float = 0.2
    lambda_: float = 1.0
    tau: float = 1.0
    lr: float = 0.01
    epochs_max: int = 500
    patience: int = 20
    tol: float = 1e-5
    seeds: list[int] = field(default_factory=lambda: [0])
    curvature_mode: str = "curvnet"
    fixed_kappa: float = -1.0
    kappa_scale: float = 2.0
    curvnet_hidden: int = 16
    similarity: str = "glp"
    denominator_mode: str = "paper_literal"
    glp_mode: str = "lenient"
    output_dir: str = "runs/out"
    parallel_seeds: bool = False

    def validate(self) -> "RunConfig":
        if (self.manifest is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of 'manifest' or 'synthetic'")
        if not self.seeds:
            raise ConfigError("'seeds' must list at least one seed")
        if self.curvature_mode not in CURVATURE_MODES:
            raise ConfigError(f"curvature_mode must be one of {CURVATURE_MODES}")
        if self.similarity not in SIMILARITY_MODES:
            raise ConfigError(f"similarity must be one of {SIMILARITY_MODES}")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ConfigError(f"denominator_mode must be one of {DENOMINATOR_MODES}")
        try:
            self.model()
            self.distill(self.seeds[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def model(self) -> ModelConfig:
        return ModelConfig(
            layer_dims=list(self.layer_dims), slope=self.slope, curvature_mode=self.curvature_mode,
            fixed_kappa=self.fixed_kappa, kappa_scale=self.kappa_scale, curvnet_hidden=self.curvnet_hidden,
            similarity=self.similarity,
        )

    def distill(self, seed: int) -> DistillConfig:
        return DistillConfig(
            lambda_=self.lambda_, epochs_max=self.epochs_max, patience=self.patience, tol=self.tol,
            lr=self.lr, tau=self.tau, seed=int(seed), denominator_mode=self.denominator_mode,
            glp_mode=self.glp_mode,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lambda_"] = doc.pop("lambda")
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        return cls(**doc).validate()

    def sequence(self) -> TaskSequence:
        if self.manifest is not None:
            return load_sequence(self.manifest)
        return synth_sequence(self.synthetic)


def config_keys() -> list[str]:
    return ["lambda" if f.name == "lambda_" else f.name for f in fields(RunConfig)]


@dataclass
class SeedResult:
    seed: int
    acc: AccuracyMatrix
    kappa: list[float]
    distortion: list[float]
    logs: list[SessionLog]

    @property
    def pm_fm(self) -> tuple[float, float]:
        if self.acc.n_tasks == 1:
            return float(self.acc[0, 0]), float("nan")
        return pm_fm(self.acc)


def evaluate_state(state, seq: TaskSequence, upto: int | None = None):
    """Accuracy, curvature, and distortion of a frozen student on tasks ``0..upto``."""
    upto = len(seq) - 1 if upto is None else upto
    rows = []
    for i in range(upto + 1):
        g = seq[i].load()
        k, _, high = embed(state, g)
        rows.append((accuracy(g, high, k), k, distortion(g, high, k).value))
    return rows


def run_seed(cfg: RunConfig, seed: int, checkpoint_dir=None, seq: TaskSequence | None = None) -> SeedResult:
    seq = cfg.sequence() if seq is None else seq
    acc = AccuracyMatrix(len(seq))
    kappas, dists = [], []

    def after_session(t, state):
        rows = evaluate_state(state, seq, t)
        for i, (a, _, _) in enumerate(rows):
            acc.set(t, i, a)
        kappas.append(rows[t][1])
        dists.append(rows[t][2])

    result = run_sequence(seq, cfg.model(), cfg.distill(seed), checkpoint_dir, after_session)
    return SeedResult(int(seed), acc, kappas, dists, result.logs)


def _run_seed_job(args):
    cfg_doc, seed, ckpt = args
    return run_seed(RunConfig.from_dict(cfg_doc), seed, ckpt)


def run_experiment(cfg: RunConfig) -> list[SeedResult]:
    """Train every seed, writing checkpoints and all metric files under ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    jobs = [(cfg.to_dict(), s, str(out / "checkpoints" / f"seed{s}")) for s in cfg.seeds]
    if cfg.parallel_seeds and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            results = list(pool.map(_run_seed_job, jobs))
    else:
        results = [_run_seed_job(j) for j in jobs]
    write_outputs(out, results, [t.name for t in cfg.sequence()])
    return results


# --- output files ------------------------------------------------------------


def _fmt(x: float) -> str:
    return "nan" if x != x else format(float(x), ".17g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[_fmt(c) if isinstance(c, float) else c for c in r] for r in rows])
    return buf.getvalue()


def summary_rows(results: list[SeedResult]):
    rows = [[r.seed, *r.pm_fm] for r in results]
    arr = np.array([[r.pm_fm[0], r.pm_fm[1]] for r in results])
    rows.append(["mean", float(arr[:, 0].mean()), float(arr[:, 1].mean())])
    rows.append(["std", float(arr[:, 0].std()), float(arr[:, 1].std())])
    return rows


def write_outputs(out: Path, results: list[SeedResult], task_names: list[str]) -> None:
    out = Path(out)
    (out / "metrics.csv").write_text(_csv_text(["seed", "pm", "fm"], summary_rows(results)))
    acc_rows, task_rows = [], []
    for r in results:
        n = r.acc.n_tasks
        for t in range(n):
            for i in range(t + 1):
                acc_rows.append([r.seed, t + 1, i + 1, float(r.acc[t, i])])
        for t in range(n):
            task_rows.append([r.seed, t + 1, task_names[t], float(r.kappa[t]), float(r.distortion[t]),
                              r.logs[t].epochs, float(r.acc[t, t]), float(r.acc[n - 1, t])])
        loss_rows = [[t + 1, e + 1, float(lg.loss[e]), float(lg.intra[e]), float(lg.inter[e]), float(lg.kappa[e])]
                     for t, lg in enumerate(r.logs) for e in range(lg.epochs)]
        (out / f"loss_seed{r.seed}.csv").write_text(
            _csv_text(["task", "epoch", "loss", "intra", "inter", "kappa"], loss_rows))
    (out / "accuracy.csv").write_text(_csv_text(["seed", "after_task", "task", "accuracy"], acc_rows))
    (out / "tasks.csv").write_text(_csv_text(
        ["seed", "task", "name", "kappa", "distortion", "epochs", "acc_just_trained", "acc_final"], task_rows))
    (out / "report.txt").write_text(format_report(results, task_names))


def format_report(results: list[SeedResult], task_names: list[str]) -> str:
    lines = []
    for r in results:
        pm, fm = r.pm_fm
        lines.append(f"seed {r.seed}: PM {pm:.4f}  FM {fm:+.4f}")
        n = r.acc.n_tasks
        lines.append("  accuracy matrix (row = after task, column = task)")
        for t in range(n):
            cells = " ".join(f"{r.acc[t, i]:.3f}" for i in range(t + 1))
            lines.append(f"    {t + 1}: {cells}")
        for t in range(n):
            lines.append(f"  task {t + 1} ({task_names[t]}): kappa {r.kappa[t]:+.4f}  distortion "
                         f"{r.distortion[t]:.4f}  epochs {r.logs[t].epochs}")
    s = summary_rows(results)
    lines.append(f"mean over {len(results)} seed(s): PM {s[-2][1]:.4f} (std {s[-1][1]:.4f})  "
                 f"FM {s[-2][2]:+.4f} (std {s[-1][2]:.4f})")
    return "\n".join(lines) + "\n"
