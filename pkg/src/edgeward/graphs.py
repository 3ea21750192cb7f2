"""Graph containers, Laplacians, spectral bases, and dataset loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

Edge = tuple[int, int, float]


def _canonical_edges(edges) -> tuple[Edge, ...]:
    seen = {}
    for e in edges:
        if len(e) == 2:
            i, j, w = int(e[0]), int(e[1]), 1.0
        else:
            i, j, w = int(e[0]), int(e[1]), float(e[2])
        if i == j:
            raise ValueError(f"self loop at node {i}")
        if i > j:
            i, j = j, i
        if (i, j) in seen:
            raise ValueError(f"duplicate edge ({i}, {j})")
        seen[(i, j)] = w
    return tuple((i, j, seen[(i, j)]) for (i, j) in sorted(seen))


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph with node features and optional labels.

    Instances are immutable; derived graphs are produced with
    :func:`dataclasses.replace` or the ``with_*`` helpers. Edges are stored
    canonically as ``(i, j, weight)`` with ``i < j``, sorted.
    """

    n_nodes: int
    features: np.ndarray
    edges: tuple[Edge, ...]
    labels: Optional[np.ndarray] = None
    train_mask: Optional[np.ndarray] = None
    val_mask: Optional[np.ndarray] = None
    test_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.n_nodes
        if n <= 0:
            raise ValueError("graph needs at least one node")
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] != n:
            raise ValueError(f"features must be ({n}, d), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        for i, j, w in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for {n} nodes")
            if not np.isfinite(w):
                raise ValueError(f"edge ({i}, {j}) has non-finite weight")
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (n,):
                raise ValueError(f"labels must have shape ({n},)")
            if lab.min() < 0:
                raise ValueError("labels must be non-negative class ids")
            object.__setattr__(self, "labels", lab)
        masks = []
        for name in ("train_mask", "val_mask", "test_mask"):
            m = getattr(self, name)
            if m is None:
                masks.append(None)
                continue
            m = np.asarray(m, dtype=np.int64)
            if m.ndim != 1 or (m.size and (m.min() < 0 or m.max() >= n)):
                raise ValueError(f"{name} indices out of range")
            if len(np.unique(m)) != len(m):
                raise ValueError(f"{name} contains duplicates")
            object.__setattr__(self, name, m)
            masks.append(m)
        present = [set(m.tolist()) for m in masks if m is not None]
        for a in range(len(present)):
            for b in range(a + 1, len(present)):
                if present[a] & present[b]:
                    raise ValueError("masks overlap")

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            raise ValueError("graph has no labels")
        return int(self.labels.max()) + 1

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted indices adjacent to ``v``."""
        out = set()
        for i, j, _ in self.edges:
            if i == v:
                out.add(j)
            elif j == v:
                out.add(i)
        return np.array(sorted(out), dtype=np.int64)

    def degree(self, v: int) -> float:
        return float(sum(w for i, j, w in self.edges if v in (i, j)))


def with_masks(g: Graph, train, val, test) -> Graph:
    return replace(g, train_mask=np.asarray(train, dtype=np.int64),
                   val_mask=np.asarray(val, dtype=np.int64),
                   test_mask=np.asarray(test, dtype=np.int64))


def with_edges(g: Graph, edges) -> Graph:
    return replace(g, edges=tuple(edges))


def graph_from_adjacency(a: np.ndarray, template: Graph) -> Graph:
    """Graph with ``template``'s features/labels/masks and edges read off ``a``."""
    a = np.asarray(a, dtype=np.float64)
    n = template.n_nodes
    if a.shape != (n, n):
        raise ValueError(f"adjacency must be ({n}, {n})")
    if not np.allclose(a, a.T):
        raise ValueError("adjacency must be symmetric")
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j] != 0.0:
                edges.append((i, j, float(a[i, j])))
    return with_edges(template, edges)


def build_adjacency(g: Graph) -> np.ndarray:
    """Dense symmetric weighted adjacency, zero diagonal."""
    a = np.zeros((g.n_nodes, g.n_nodes), dtype=np.float64)
    for i, j, w in g.edges:
        a[i, j] = w
        a[j, i] = w
    return a


def build_laplacian(g: Graph, kind: str = "combinatorial") -> np.ndarray:
    """Graph Laplacian of ``g``.

    Parameters
    ----------
    g : Graph
    kind : str
        ``"combinatorial"`` gives D - A. ``"normalized"`` gives
        I - D^{-1/2} A D^{-1/2}; isolated nodes contribute identity rows.
    """
    a = build_adjacency(g)
    deg = a.sum(axis=1)
    if kind == "combinatorial":
        return np.diag(deg) - a
    if kind == "normalized":
        with np.errstate(divide="ignore"):
            dinv = np.where(deg > 0, deg, 1.0) ** -0.5
        dinv = np.where(deg > 0, dinv, 0.0)
        return np.eye(g.n_nodes) - (dinv[:, None] * a) * dinv[None, :]
    raise ValueError(f"unknown laplacian kind {kind!r}")


@dataclass(frozen=True)
class SpectralBasis:
    """Eigendecomposition of a Laplacian.

    ``vectors`` holds eigenvectors as columns, ordered by ascending
    eigenvalue, each column signed so its first entry with magnitude above
    1e-12 is positive.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    kind: str = "combinatorial"

    @property
    def n_nodes(self) -> int:
        return self.vectors.shape[0]

    def row_of(self, alpha: int) -> np.ndarray:
        """Row alpha of U: the node's coordinates across all eigenvectors."""
        if not 0 <= alpha < self.n_nodes:
            raise ValueError(f"node {alpha} out of range")
        return self.vectors[alpha, :].copy()


def eigendecompose(laplacian: np.ndarray, kind: str = "combinatorial") -> SpectralBasis:
    """Symmetric eigendecomposition with a deterministic sign convention.

    Raises
    ------
    ValueError
        If the input is not symmetric within 1e-10.
    """
    m = np.asarray(laplacian, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got {m.shape}")
    if not np.allclose(m, m.T, atol=1e-10):
        raise ValueError("matrix is not symmetric within 1e-10")
    vals, vecs = np.linalg.eigh(m)
    # eigh returns ascending order already; fix each column's sign by its
    # first entry with |x| > 1e-12
    for c in range(vecs.shape[1]):
        col = vecs[:, c]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            vecs[:, c] = -col
    return SpectralBasis(eigenvalues=vals, vectors=vecs, kind=kind)


# ---------------------------------------------------------------------------
# dataset loading


def load_cora(content_path, cites_path, split_sizes=(140, 500, 1000)):
    """Parse the citation dataset's .content/.cites pair.

    Node order is first appearance in the content file. Class ids follow
    lexicographic order of the label strings. The split takes the first
    ``split_sizes[0] // n_classes`` nodes of each class (file order) for
    training, the first ``split_sizes[1]`` remaining indices for validation,
    and the last ``split_sizes[2]`` untouched indices for test.

    Returns
    -------
    (Graph, dict)
        The graph and a report with ``n_nodes``, ``n_edges``,
        ``skipped_cites`` (citation lines naming unknown ids) and
        ``duplicate_cites``.

    Raises
    ------
    ValueError
        On a malformed content line, with its line number.
    """
    ids = []
    feats = []
    label_strs = []
    index = {}
    with open(content_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ValueError(f"{content_path}: line {lineno}: expected id, features, label")
            nid, *mid, label = parts
            if nid in index:
                raise ValueError(f"{content_path}: line {lineno}: duplicate id {nid!r}")
            try:
                row = np.array([float(x) for x in mid], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{content_path}: line {lineno}: bad feature value ({exc})") from None
            if feats and row.size != feats[0].size:
                raise ValueError(
                    f"{content_path}: line {lineno}: feature width {row.size} != {feats[0].size}")
            index[nid] = len(ids)
            ids.append(nid)
            feats.append(row)
            label_strs.append(label)
    if not ids:
        raise ValueError(f"{content_path}: no nodes")

    classes = sorted(set(label_strs))
    class_id = {c: k for k, c in enumerate(classes)}
    labels = np.array([class_id[s] for s in label_strs], dtype=np.int64)

    skipped = 0
    dupes = 0
    pairs = set()
    with open(cites_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{cites_path}: line {lineno}: expected two ids")
            a, b = parts
            if a not in index or b not in index:
                skipped += 1
                continue
            i, j = index[a], index[b]
            if i == j:
                skipped += 1
                continue
            key = (min(i, j), max(i, j))
            if key in pairs:
                dupes += 1
                continue
            pairs.add(key)

    edges = tuple((i, j, 1.0) for i, j in sorted(pairs))
    n = len(ids)
    n_classes = len(classes)
    t, v, s = split_sizes
    per_class = t // n_classes
    extra = t % n_classes
    want = {k: per_class + (1 if k < extra else 0) for k in range(n_classes)}
    train = []
    for idx in range(n):
        k = labels[idx]
        if want[k] > 0:
            want[k] -= 1
            train.append(idx)
    if len(train) < t:
        raise ValueError(f"not enough nodes per class for a {t}-node train split")
    train_set = set(train)
    rest = [i for i in range(n) if i not in train_set]
    if len(rest) < v + s:
        raise ValueError("not enough nodes for the requested val/test split")
    val = rest[:v]
    test = rest[len(rest) - s:] if s else []

    g = Graph(n_nodes=n, features=np.vstack(feats), edges=edges, labels=labels,
              train_mask=np.array(train), val_mask=np.array(val), test_mask=np.array(test))
    report = {"n_nodes": n, "n_edges": len(edges), "n_classes": n_classes,
              "skipped_cites": skipped, "duplicate_cites": dupes}
    return g, report


# ---------------------------------------------------------------------------
# synthetic fixtures


def ring_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("ring needs n >= 3")
    edges = [(i, (i + 1) % n, 1.0) for i in range(n)]
    return Graph(n_nodes=n, features=np.eye(n), edges=edges)


def barbell_graph(k: int) -> Graph:
    """Two k-cliques joined by one bridge edge."""
    if k < 3:
        raise ValueError("barbell needs clique size >= 3")
    n = 2 * k
    edges = []
    for a in range(k):
        for b in range(a + 1, k):
            edges.append((a, b, 1.0))
            edges.append((k + a, k + b, 1.0))
    edges.append((k - 1, k, 1.0))
    return Graph(n_nodes=n, features=np.eye(n), edges=edges)


def sbm_graph(block_sizes: Sequence[int], p_in: float, p_out: float, seed: int,
              noise_scale: float = 0.1) -> Graph:
    """Stochastic block model with one-hot block features plus seeded noise.

    Labels are block ids. Each block is split 60/20/20 into
    train/val/test by index order, so the fixture is ready for training.
    """
    if not 0.0 <= p_out <= p_in <= 1.0:
        raise ValueError("need 0 <= p_out <= p_in <= 1")
    rng = np.random.default_rng(seed)
    sizes = [int(s) for s in block_sizes]
    n = sum(sizes)
    labels = np.concatenate([np.full(s, b, dtype=np.int64) for b, s in enumerate(sizes)])
    feats = np.zeros((n, len(sizes)), dtype=np.float64)
    feats[np.arange(n), labels] = 1.0
    feats += noise_scale * rng.standard_normal(feats.shape)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = p_in if labels[i] == labels[j] else p_out
            if rng.random() < p:
                edges.append((i, j, 1.0))
    train, val, test = [], [], []
    start = 0
    for s in sizes:
        idx = list(range(start, start + s))
        a = max(1, int(0.6 * s))
        b = max(1, int(0.2 * s))
        train += idx[:a]
        val += idx[a:a + b]
        test += idx[a + b:]
        start += s
    return Graph(n_nodes=n, features=feats, edges=edges, labels=labels,
                 train_mask=np.array(train), val_mask=np.array(val),
                 test_mask=np.array(test))


def synth_graph(spec: str) -> Graph:
    """Build a fixture from a compact spec string.

    Formats: ``ring:N``, ``barbell:K``, ``sbm:BxS:p_in:p_out:seed[:noise]``
    (B blocks of S nodes each; noise is the feature noise scale).
    """
    parts = spec.split(":")
    kind = parts[0]
    try:
        if kind == "ring":
            return ring_graph(int(parts[1]))
        if kind == "barbell":
            return barbell_graph(int(parts[1]))
        if kind == "sbm":
            blocks, size = parts[1].lower().split("x")
            noise = float(parts[5]) if len(parts) > 5 else 0.1
            return sbm_graph([int(size)] * int(blocks), float(parts[2]),
                             float(parts[3]), int(parts[4]), noise_scale=noise)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ValueError) and "needs" in str(exc):
            raise
        raise ValueError(f"bad synth spec {spec!r}") from None
    raise ValueError(f"unknown synth kind {kind!r}")


# ---------------------------------------------------------------------------
# connectivity and degree helpers


def connected(g: Graph) -> bool:
    if g.n_nodes == 1:
        return True
    adj = {i: set() for i in range(g.n_nodes)}
    for i, j, _ in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == g.n_nodes


def bfs_layers(g: Graph, source: int) -> dict[int, int]:
    """Hop distance from ``source`` for every reachable node."""
    adj = {i: set() for i in range(g.n_nodes)}
    for i, j, _ in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    dist = {source: 0}
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist


def degree_histogram(g: Graph) -> dict[int, int]:
    counts = {}
    deg = [0] * g.n_nodes
    for i, j, _ in g.edges:
        deg[i] += 1
        deg[j] += 1
    for d in deg:
        counts[d] = counts.get(d, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# native JSON graph format


def save_graph(g: Graph, path) -> None:
    """Write the native JSON graph format.

    Layout: ``{n_nodes, d, features (row-major flat), edges [[i, j, w]...],
    labels, masks}``.
    """
    doc = {
        "n_nodes": g.n_nodes,
        "d": g.n_features,
        "features": [float(x) for x in g.features.reshape(-1)],
        "edges": [[i, j, w] for i, j, w in g.edges],
        "labels": None if g.labels is None else [int(x) for x in g.labels],
        "masks": None if g.train_mask is None else {
            "train": [int(x) for x in g.train_mask],
            "val": [int(x) for x in (g.val_mask if g.val_mask is not None else [])],
            "test": [int(x) for x in (g.test_mask if g.test_mask is not None else [])],
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_graph(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        n = int(doc["n_nodes"])
        d = int(doc["d"])
        feats = np.array(doc["features"], dtype=np.float64).reshape(n, d)
        edges = [(int(i), int(j), float(w)) for i, j, w in doc["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: not a native graph file ({exc})") from None
    labels = doc.get("labels")
    masks = doc.get("masks") or {}
    return Graph(
        n_nodes=n, features=feats, edges=edges,
        labels=None if labels is None else np.array(labels, dtype=np.int64),
        train_mask=np.array(masks["train"], dtype=np.int64) if masks else None,
        val_mask=np.array(masks["val"], dtype=np.int64) if masks else None,
        test_mask=np.array(masks["test"], dtype=np.int64) if masks else None,
    )
