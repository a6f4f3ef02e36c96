"""Command-line front end: ``riemcl {run,eval,curvature,synth}``.

Exit status 0 on success, 2 for bad input (config, missing files, unusable
graphs), 1 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint
from .curvnet import curvnet_forward, forman_graph_curvature, oracle_kappa
from .distill import _sub
from .evaluate import distortion
from .experiment import DEFAULT_SYNTH_SPEC, ConfigError, RunConfig, evaluate_state, run_experiment
from .graphstore import GraphFormatError, load_edge_list, load_sequence, synth_sequence, write_sequence

log = logging.getLogger("riemcl")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

_HELP = {
    "manifest": "task manifest (JSON)",
    "synthetic": "synthetic spec JSON file, or 'default' for the built-in 3-task stream",
    "layer_dims": "encoder widths, input first",
    "slope": "leaky-rectifier slope of the layer nonlinearity",
    "lambda_": "weight of the teacher-student term",
    "tau": "contrastive temperature",
    "lr": "Adam learning rate",
    "epochs_max": "epoch cap per task",
    "patience": "stop after this many epochs of loss change below tol",
    "tol": "plateau threshold on the loss change",
    "seeds": "seeds to run",
    "curvature_mode": "curvnet | fixed | forman_oracle",
    "fixed_kappa": "curvature used when curvature_mode is fixed",
    "kappa_scale": "bound on |kappa|",
    "curvnet_hidden": "hidden width of the curvature estimator",
    "similarity": "glp | tangent",
    "denominator_mode": "paper_literal (negatives only) | standard (positive included)",
    "glp_mode": "strict | lenient handling of projections that leave the target sphere",
    "output_dir": "where outputs are written",
    "parallel_seeds": "run seeds in separate processes",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    for f in fields(RunConfig):
        flag = "--" + ("lambda" if f.name == "lambda_" else f.name).replace("_", "-")
        default = getattr(defaults, f.name)
        kw = {"dest": f.name, "default": argparse.SUPPRESS, "help": f"{_HELP[f.name]} (default: {default})"}
        if f.name in ("layer_dims", "seeds"):
            kw.update(type=int, nargs="+")
        elif f.name == "parallel_seeds":
            kw.update(action=argparse.BooleanOptionalAction)
        elif f.name in ("epochs_max", "patience", "curvnet_hidden"):
            kw["type"] = int
        elif isinstance(default, float):
            kw["type"] = float
        p.add_argument(flag, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riemcl", description="Continual self-supervised graph learning on "
                                     "adaptive-curvature manifolds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train over a task sequence and write metrics")
    run.add_argument("--config", help="JSON config file; flags override its keys")
    _add_run_flags(run)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on every task of a manifest")
    ev.add_argument("checkpoint")
    ev.add_argument("manifest")

    cv = sub.add_parser("curvature", help="Forman and learned curvature of edge-list graphs")
    cv.add_argument("graphs", nargs="+", help="edge-list files")
    cv.add_argument("--checkpoint", help="also report the checkpoint's estimated kappa")
    cv.add_argument("--kappa-scale", type=float, default=2.0, help="bound on |kappa| (default: 2.0)")

    sy = sub.add_parser("synth", help="write a synthetic task sequence to disk")
    sy.add_argument("out", help="output directory")
    sy.add_argument("--spec", help="synthetic spec JSON file (default: built-in 3-task stream)")
    return parser


def _resolve_synthetic(value):
    if value is None or isinstance(value, dict):
        return value
    if value == "default":
        return json.loads(json.dumps(DEFAULT_SYNTH_SPEC))
    try:
        return json.loads(Path(value).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read synthetic spec {value}: {exc}") from exc


def load_run_config(args: argparse.Namespace) -> RunConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    if "lambda_" in overrides:
        overrides["lambda"] = overrides.pop("lambda_")
    doc.update(overrides)
    if "synthetic" in doc:
        doc["synthetic"] = _resolve_synthetic(doc["synthetic"])
    try:
        return RunConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args) -> int:
    try:
        cfg = load_run_config(args)
        cfg.sequence()
    except (ConfigError, GraphFormatError, FileNotFoundError, ValueError) as exc:
        print(f"riemcl run: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        results = run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        print(f"riemcl run: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print((Path(cfg.output_dir) / "report.txt").read_text(), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        state, meta = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        print(f"riemcl eval: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        seq = load_sequence(args.manifest)
    except (OSError, GraphFormatError, ValueError) as exc:
        print(f"riemcl eval: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        rows = evaluate_state(state, seq)
    except Exception as exc:  # noqa: BLE001
        print(f"riemcl eval: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"checkpoint task {meta['task_index']}, seed {meta['seed']}")
    print("accuracy " + " ".join(f"{a:.4f}" for a, _, _ in rows))
    print(f"PM {sum(a for a, _, _ in rows) / len(rows):.4f}")
    for task, (_, k, d) in zip(seq, rows):
        print(f"{task.name}: kappa {k:+.4f}  distortion {d:.4f}")
    return EXIT_OK


def cmd_curvature(args) -> int:
    state = None
    if args.checkpoint:
        try:
            state, _ = load_checkpoint(args.checkpoint)
        except CheckpointError as exc:
            print(f"riemcl curvature: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    for path in args.graphs:
        try:
            g = load_edge_list(path)
        except (OSError, GraphFormatError) as exc:
            print(f"riemcl curvature: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if g.n_edges == 0:
            print(f"riemcl curvature: {path}: graph has no edges", file=sys.stderr)
            return EXIT_USAGE
        line = (f"{path}: nodes {g.n_nodes} edges {g.n_edges} forman {forman_graph_curvature(g):+.6g} "
                f"oracle_kappa {oracle_kappa(g, args.kappa_scale):+.6g}")
        if state is not None:
            k = curvnet_forward(g, _sub(state.params, "curv"), state.model.kappa_scale)
            line += f" curvnet_kappa {float(k.value):+.6g}"
        print(line)
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = _resolve_synthetic(args.spec or "default")
        seq = synth_sequence(spec)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"riemcl synth: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = write_sequence([t.load() for t in seq], args.out)
    print(manifest)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "eval": cmd_eval, "curvature": cmd_curvature, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
