"""Graphs, task sequences, and the on-disk formats they are read from.

Formats (all UTF-8):

* edge list -- one ``u v`` pair of 0-based node ids per line; ``#`` starts a
  comment; reversed duplicates collapse into one undirected edge.
* features -- CSV, one row per node, numeric cells.
* labels / masks -- CSV with a single column, one row per node (labels are
  integer class ids, masks are 0/1).
* manifest -- JSON document listing the tasks, see :func:`load_sequence`.
"""

from __future__ import annotations

import contextlib
import contextvars
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "riemcl-manifest"


class GraphFormatError(ValueError):
    pass


class LabelAccessError(RuntimeError):
    """Raised when labels are read inside a label-free (training) region."""


_labels_forbidden = contextvars.ContextVar("labels_forbidden", default=False)


@contextlib.contextmanager
def labels_forbidden():
    """Any ``Graph.labels`` read inside this block raises :class:`LabelAccessError`."""
    token = _labels_forbidden.set(True)
    try:
        yield
    finally:
        _labels_forbidden.reset(token)


def _canonical_edges(pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.sort(pairs, axis=1)
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(pairs, axis=0)


@dataclass(frozen=True, eq=False)
class Graph:
    """An undirected, unweighted graph with node features and an optional split."""

    n_nodes: int
    edges: np.ndarray
    features: np.ndarray | None = None
    _labels: np.ndarray | None = field(default=None, repr=False)
    train_mask: np.ndarray | None = None
    test_mask: np.ndarray | None = None
    num_classes: int | None = None
    name: str = ""

    def __post_init__(self):
        n = int(self.n_nodes)
        edges = _canonical_edges(self.edges)
        if len(edges) and (edges.min() < 0 or edges.max() >= n):
            raise GraphFormatError(f"edge endpoint outside [0, {n})")
        object.__setattr__(self, "edges", edges)
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != n:
                raise GraphFormatError(f"features must be {n} x d, got {feats.shape}")
            object.__setattr__(self, "features", feats)
        for name in ("train_mask", "test_mask"):
            m = getattr(self, name)
            if m is not None:
                m = np.asarray(m, dtype=bool)
                if m.shape != (n,):
                    raise GraphFormatError(f"{name} must have {n} entries, got {m.shape}")
                object.__setattr__(self, name, m)
        if self.train_mask is not None and self.test_mask is not None:
            if np.any(self.train_mask & self.test_mask):
                raise GraphFormatError("train and test masks overlap")
        if self._labels is not None:
            y = np.asarray(self._labels, dtype=np.int64)
            if y.shape != (n,):
                raise GraphFormatError(f"labels must have {n} entries, got {y.shape}")
            if y.min(initial=0) < 0:
                raise GraphFormatError("labels must be nonnegative")
            if self.num_classes is not None and n and y.max() >= self.num_classes:
                raise GraphFormatError(f"label {y.max()} >= num_classes {self.num_classes}")
            object.__setattr__(self, "_labels", y)

    @property
    def labels(self) -> np.ndarray | None:
        if _labels_forbidden.get():
            raise LabelAccessError("labels were read on a label-free code path")
        return self._labels

    @property
    def has_labels(self) -> bool:
        return self._labels is not None

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        if self.n_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes).astype(np.int64)

    def neighbors(self) -> list[np.ndarray]:
        """Sorted neighbor ids per node (self excluded)."""
        order = np.concatenate([self.edges, self.edges[:, ::-1]])
        order = order[np.lexsort((order[:, 1], order[:, 0]))]
        splits = np.searchsorted(order[:, 0], np.arange(1, self.n_nodes))
        return np.split(order[:, 1], splits)

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """``(indptr, indices)`` of the symmetric adjacency."""
        nbrs = self.neighbors()
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(x) for x in nbrs])
        indices = np.concatenate(nbrs) if nbrs else np.zeros(0, dtype=np.int64)
        return indptr, indices.astype(np.int64)

    def input_features(self) -> np.ndarray:
        return self.features if self.features is not None else degree_features(self)

    def permuted(self, perm) -> "Graph":
        """Relabel nodes so old node ``perm[k]`` becomes new node ``k``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))

        def take(a):
            return None if a is None else np.asarray(a)[perm]

        return Graph(
            n_nodes=self.n_nodes,
            edges=inv[self.edges] if self.n_edges else self.edges,
            features=take(self.features),
            _labels=take(self._labels),
            train_mask=take(self.train_mask),
            test_mask=take(self.test_mask),
            num_classes=self.num_classes,
            name=self.name,
        )


def degree_features(g: Graph) -> np.ndarray:
    """Per node: ``[degree, mean, max, min of neighbor degrees]`` (zeros if isolated)."""
    deg = g.degrees().astype(np.float64)
    out = np.zeros((g.n_nodes, 4))
    out[:, 0] = deg
    for i, nb in enumerate(g.neighbors()):
        if len(nb):
            nd = deg[nb]
            out[i, 1:] = nd.mean(), nd.max(), nd.min()
    return out


# --- file ingestion ----------------------------------------------------------


def load_edge_list(path, n_nodes: int | None = None) -> Graph:
    path = Path(path)
    pairs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'u v', got {line.strip()!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line.strip()!r}") from None
            if u < 0 or v < 0 or (n_nodes is not None and max(u, v) >= n_nodes):
                raise GraphFormatError(f"{path}:{lineno}: node id out of range in {line.strip()!r}")
            if u == v:
                log.warning("%s:%d: dropping self-loop on node %d", path, lineno, u)
                continue
            pairs.append((u, v))
    if n_nodes is None:
        n_nodes = 1 + max((max(p) for p in pairs), default=-1)
    return Graph(n_nodes=n_nodes, edges=np.array(pairs, dtype=np.int64).reshape(-1, 2), name=path.stem)


def _read_csv_rows(path) -> list[list[float]]:
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric cell in {row!r}") from None
            if len(rows[-1]) != len(rows[0]):
                raise GraphFormatError(f"{path}:{lineno}: ragged row ({len(row)} cells, expected {len(rows[0])})")
    if not rows:
        raise GraphFormatError(f"{path}: empty file")
    return rows


def load_features(path) -> np.ndarray:
    return np.array(_read_csv_rows(path), dtype=np.float64)


def _load_column(path, kind: str) -> np.ndarray:
    arr = np.array(_read_csv_rows(path), dtype=np.float64)
    if arr.shape[1] != 1:
        raise GraphFormatError(f"{path}: {kind} file must have one column")
    col = arr[:, 0]
    if np.any(col != np.round(col)):
        raise GraphFormatError(f"{path}: {kind} values must be integers")
    return col.astype(np.int64)


def write_edge_list(g: Graph, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"# {g.n_nodes} nodes, {g.n_edges} edges\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def _write_csv(path, rows) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


# --- task sequences ----------------------------------------------------------


@dataclass
class Task:
    """One entry of a task sequence; the graph is materialized by :meth:`load`."""

    name: str
    num_classes: int
    loader: Callable[[], Graph] = field(repr=False)

    def load(self) -> Graph:
        return self.loader()


@dataclass
class TaskSequence:
    tasks: list[Task]
    source: str = ""

    def __post_init__(self):
        if not self.tasks:
            raise GraphFormatError("a task sequence needs at least one task")

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i) -> Task:
        return self.tasks[i]


def _load_task(entry: dict, base: Path, index: int) -> Graph:
    name = entry.get("name", f"task{index + 1}")

    def resolve(key):
        p = entry.get(key)
        if p is None:
            return None
        p = base / p
        if not p.exists():
            raise FileNotFoundError(f"task {name!r}: {key} file not found: {p}")
        return p

    edges_path = resolve("edges")
    if edges_path is None:
        raise GraphFormatError(f"task {name!r}: missing 'edges'")
    feat_path = resolve("features")
    features = load_features(feat_path) if feat_path else None
    n = features.shape[0] if features is not None else entry.get("n_nodes")
    g = load_edge_list(edges_path, n_nodes=n)
    n = g.n_nodes
    labels_path, train_path, test_path = resolve("labels"), resolve("train_mask"), resolve("test_mask")
    labels = _load_column(labels_path, "labels") if labels_path else None
    if labels is not None and test_path is None:
        raise GraphFormatError(f"task {name!r}: labels given without a test mask")
    masks = {}
    for key, p in (("train_mask", train_path), ("test_mask", test_path)):
        if p is not None:
            col = _load_column(p, key)
            if not set(np.unique(col)) <= {0, 1}:
                raise GraphFormatError(f"task {name!r}: {key} must be 0/1")
            if len(col) != n:
                raise GraphFormatError(f"task {name!r}: {key} has {len(col)} rows, graph has {n} nodes")
            masks[key] = col.astype(bool)
    if labels is not None and len(labels) != n:
        raise GraphFormatError(f"task {name!r}: labels has {len(labels)} rows, graph has {n} nodes")
    try:
        return Graph(
            n_nodes=n,
            edges=g.edges,
            features=features,
            _labels=labels,
            num_classes=int(entry["num_classes"]),
            name=name,
            **masks,
        )
    except GraphFormatError as exc:
        raise GraphFormatError(f"task {name!r}: {exc}") from None


def load_sequence(manifest_path) -> TaskSequence:
    """Read a JSON manifest::

        {"format": "riemcl-manifest", "version": 1,
         "tasks": [{"name": "t1", "edges": "t1/edges.txt", "features": "t1/features.csv",
                    "labels": "t1/labels.csv", "train_mask": "t1/train.csv",
                    "test_mask": "t1/test.csv", "num_classes": 3}, ...]}

    Paths are relative to the manifest's directory.  Every task is loaded once
    here to validate it; later loads re-read the files.
    """
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    if doc.get("format") != MANIFEST_FORMAT:
        raise GraphFormatError(f"{manifest_path}: not a {MANIFEST_FORMAT} document")
    entries = doc.get("tasks") or []
    base = manifest_path.parent
    tasks = []
    for i, entry in enumerate(entries):
        if "num_classes" not in entry:
            raise GraphFormatError(f"task {entry.get('name', i + 1)!r}: missing num_classes")
        _load_task(entry, base, i)
        tasks.append(
            Task(
                name=entry.get("name", f"task{i + 1}"),
                num_classes=int(entry["num_classes"]),
                loader=lambda e=entry, i=i: _load_task(e, base, i),
            )
        )
    return TaskSequence(tasks, source=str(manifest_path))


def write_sequence(graphs: list[Graph], directory) -> Path:
    """Write graphs in the text formats plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, g in enumerate(graphs):
        name = g.name or f"task{i + 1}"
        sub = directory / name
        sub.mkdir(exist_ok=True)
        write_edge_list(g, sub / "edges.txt")
        entry = {"name": name, "edges": f"{name}/edges.txt", "num_classes": int(g.num_classes or 0)}
        if g.features is not None:
            _write_csv(sub / "features.csv", g.features.tolist())
            entry["features"] = f"{name}/features.csv"
        else:
            entry["n_nodes"] = g.n_nodes
        if g.has_labels:
            _write_csv(sub / "labels.csv", [[int(y)] for y in g._labels])
            entry["labels"] = f"{name}/labels.csv"
        for key in ("train_mask", "test_mask"):
            m = getattr(g, key)
            if m is not None:
                _write_csv(sub / f"{key}.csv", [[int(b)] for b in m])
                entry[key] = f"{name}/{key}.csv"
        entries.append(entry)
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"format": MANIFEST_FORMAT, "version": 1, "tasks": entries}, indent=2) + "\n")
    return manifest


# --- synthetic data ----------------------------------------------------------


def _balanced_tree(branching: int, depth: int):
    if branching < 1 or depth < 0:
        raise ValueError("balanced_tree needs branching >= 1 and depth >= 0")
    n = sum(branching**k for k in range(depth + 1))
    edges = [((i - 1) // branching, i) for i in range(1, n)]
    # community = which child subtree of the root a node sits in; root joins 0
    comm = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        comm[i] = i - 1 if (i - 1) // branching == 0 else comm[(i - 1) // branching]
    return n, edges, comm, max(branching, 1)


def _clique_ring(clique_size: int, n_cliques: int):
    if clique_size < 1 or n_cliques < 1:
        raise ValueError("clique_ring needs clique_size >= 1 and n_cliques >= 1")
    n = clique_size * n_cliques
    edges = []
    for c in range(n_cliques):
        base = c * clique_size
        edges += [(base + a, base + b) for a in range(clique_size) for b in range(a + 1, clique_size)]
    if n_cliques > 1:
        links = n_cliques if n_cliques > 2 else 1
        for c in range(links):
            nxt = (c + 1) % n_cliques
            edges.append((c * clique_size + clique_size - 1, nxt * clique_size))
    comm = np.repeat(np.arange(n_cliques), clique_size)
    return n, edges, comm, n_cliques


def _erdos_renyi(n: int, p: float, n_classes: int, rng):
    if n < 1 or not 0 <= p <= 1 or n_classes < 1:
        raise ValueError("erdos_renyi needs n >= 1, 0 <= p <= 1, n_classes >= 1")
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    comm = (np.arange(n) * n_classes) // n
    return n, edges, comm, n_classes


GENERATORS = {
    "balanced_tree": ("branching", "depth"),
    "clique_ring": ("clique_size", "n_cliques"),
    "erdos_renyi": ("n", "p"),
}


def synth_graph(task_spec: dict, feature_dim: int, rng: np.random.Generator, name: str = "",
                separation: float = 2.0, train_frac: float = 0.5) -> Graph:
    kind = task_spec.get("generator")
    if kind not in GENERATORS:
        raise ValueError(f"unknown generator {kind!r}; expected one of {sorted(GENERATORS)}")
    if kind == "balanced_tree":
        n, edges, comm, k = _balanced_tree(int(task_spec["branching"]), int(task_spec["depth"]))
    elif kind == "clique_ring":
        n, edges, comm, k = _clique_ring(int(task_spec["clique_size"]), int(task_spec["n_cliques"]))
    else:
        n, edges, comm, k = _erdos_renyi(int(task_spec["n"]), float(task_spec["p"]),
                                         int(task_spec.get("n_classes", 3)), rng)
    if feature_dim < 1:
        raise ValueError("feature_dim must be >= 1")
    sep = float(task_spec.get("separation", separation))
    means = rng.standard_normal((k, feature_dim))
    means *= sep / np.maximum(np.linalg.norm(means, axis=1, keepdims=True), 1e-12)
    features = rng.standard_normal((n, feature_dim)) + means[comm]
    train = np.zeros(n, dtype=bool)
    frac = float(task_spec.get("train_frac", train_frac))
    for c in range(k):
        members = np.flatnonzero(comm == c)
        members = members[rng.permutation(len(members))]
        n_train = max(1, int(math.floor(frac * len(members))))
        train[members[:n_train]] = True
    return Graph(
        n_nodes=n,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        features=features,
        _labels=comm,
        train_mask=train,
        test_mask=~train,
        num_classes=k,
        name=name,
    )


def synth_sequence(spec: dict) -> TaskSequence:
    """Deterministic synthetic task stream.

    ``spec`` looks like ``{"feature_dim": 8, "seed": 0, "tasks": [{"generator":
    "balanced_tree", "branching": 2, "depth": 4}, ...]}``; optional keys
    ``separation`` (class-mean norm) and ``train_frac`` apply globally or per task.
    """
    tasks = spec.get("tasks")
    if not tasks:
        raise ValueError("synthetic spec needs a non-empty 'tasks' list")
    rng = np.random.default_rng(int(spec.get("seed", 0)))
    dim = int(spec.get("feature_dim", 8))
    graphs = [
        synth_graph(t, dim, rng, name=t.get("name", f"task{i + 1}"),
                    separation=float(spec.get("separation", 2.0)),
                    train_frac=float(spec.get("train_frac", 0.5)))
        for i, t in enumerate(tasks)
    ]
    return TaskSequence(
        [Task(g.name, int(g.num_classes), loader=lambda g=g: g) for g in graphs],
        source="synthetic",
    )
