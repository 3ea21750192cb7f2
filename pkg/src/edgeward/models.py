"""Spectral and message-passing node classifiers with a shared training loop.

Two model families: a single-layer spectral filter with a dense decoder
(y = act(U diag(theta) U^T f) W), and the two-layer semi-supervised GCN
(softmax(P relu(P f W1) W2)) used as the attack target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor2, backward, optimizer_step, zero_grad
from .graphs import Graph, SpectralBasis, build_adjacency
from .rng import substream

ACTIVATIONS = ("relu", "identity")


def glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class SpectralModel:
    basis: SpectralBasis
    filter_diag: Tensor2        # 1 x N, trainable spectral filter
    decoder: Tensor2            # d x n_classes, no bias
    activation: str = "relu"

    def __post_init__(self):
        n = self.basis.n_nodes
        if self.filter_diag.shape != (1, n):
            raise ValueError(f"filter must be (1, {n}), got {self.filter_diag.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def params(self) -> list[Tensor2]:
        return [self.filter_diag, self.decoder]


@dataclass
class SemiGcnModel:
    w1: Tensor2                 # d x h
    w2: Tensor2                 # h x n_classes
    propagation: str = "renormalized"   # or "raw"

    def __post_init__(self):
        if self.w1.cols != self.w2.rows:
            raise ValueError(f"layer shapes do not chain: {self.w1.shape} -> {self.w2.shape}")
        if self.propagation not in ("renormalized", "raw"):
            raise ValueError(f"unknown propagation {self.propagation!r}")

    @property
    def params(self) -> list[Tensor2]:
        return [self.w1, self.w2]


def init_spectral_model(basis: SpectralBasis, n_features: int, n_classes: int,
                        seed: int = 0, activation: str = "relu") -> SpectralModel:
    rng = substream(seed, "model-init")
    theta = Tensor2(np.ones((1, basis.n_nodes)), requires_grad=True, name="theta")
    dec = Tensor2(glorot(rng, n_features, n_classes), requires_grad=True, name="decoder")
    return SpectralModel(basis=basis, filter_diag=theta, decoder=dec, activation=activation)


def init_semi_model(n_features: int, hidden: int, n_classes: int, seed: int = 0,
                    propagation: str = "renormalized") -> SemiGcnModel:
    rng = substream(seed, "model-init")
    w1 = Tensor2(glorot(rng, n_features, hidden), requires_grad=True, name="w1")
    w2 = Tensor2(glorot(rng, hidden, n_classes), requires_grad=True, name="w2")
    return SemiGcnModel(w1=w1, w2=w2, propagation=propagation)


def _act(m, t: Tensor2) -> Tensor2:
    return ad.relu(t) if m.activation == "relu" else t


def forward_spectral(m: SpectralModel, f) -> Tensor2:
    """Logits act(U diag(theta) U^T f) W for all nodes; differentiable."""
    ft = f if isinstance(f, Tensor2) else Tensor2(np.asarray(f, dtype=np.float64))
    n = m.basis.n_nodes
    if ft.rows != n:
        raise ValueError(f"features have {ft.rows} rows, basis has {n} nodes")
    if ft.cols != m.decoder.rows:
        raise ValueError(f"decoder expects {m.decoder.rows} features, got {ft.cols}")
    u = Tensor2(m.basis.vectors)
    b = ad.matmul(ad.transpose(u), ft)
    emb = _act(m, ad.matmul(u, ad.diag_scale(m.filter_diag, b)))
    return ad.matmul(emb, m.decoder)


def node_embedding(m: SpectralModel, f, v: int) -> Tensor2:
    """Pre-decoder embedding row act(u(v) diag(theta) U^T f), shape 1 x d."""
    n = m.basis.n_nodes
    if not 0 <= v < n:
        raise ValueError(f"node {v} out of range for {n} nodes")
    ft = f if isinstance(f, Tensor2) else Tensor2(np.asarray(f, dtype=np.float64))
    u_row = Tensor2(m.basis.vectors[v:v + 1, :])
    b = ad.matmul(ad.transpose(Tensor2(m.basis.vectors)), ft)
    return _act(m, ad.matmul(ad.hadamard(u_row, m.filter_diag), b))


def forward_semi(m: SemiGcnModel, p, f) -> Tensor2:
    """Row-stochastic softmax(P relu(P f W1) W2); differentiable in P too."""
    pt = p if isinstance(p, Tensor2) else Tensor2(np.asarray(p, dtype=np.float64))
    ft = f if isinstance(f, Tensor2) else Tensor2(np.asarray(f, dtype=np.float64))
    if pt.rows != pt.cols or pt.cols != ft.rows:
        raise ValueError(f"propagation {pt.shape} does not match features {ft.shape}")
    h = ad.relu(ad.matmul(pt, ad.matmul(ft, m.w1)))
    return ad.softmax_rows(ad.matmul(pt, ad.matmul(h, m.w2)))


def renormalize(a: np.ndarray) -> np.ndarray:
    """Symmetric renormalization with self-loops: D^{-1/2} (A + I) D^{-1/2}."""
    a = np.asarray(a, dtype=np.float64)
    at = a + np.eye(a.shape[0])
    d = at.sum(axis=1)
    dinv = d ** -0.5
    return (dinv[:, None] * at) * dinv[None, :]


def propagation_matrix(g: Graph, kind: str) -> np.ndarray:
    a = build_adjacency(g)
    if kind == "raw":
        return a
    if kind == "renormalized":
        return renormalize(a)
    raise ValueError(f"unknown propagation {kind!r}")


# ---------------------------------------------------------------------------
# evaluation (plain numpy on current parameter values, no tape)


def spectral_logits(m: SpectralModel, f: np.ndarray, rows=None,
                    ut_f: np.ndarray | None = None) -> np.ndarray:
    """Logits for the given rows (all rows when None). ``ut_f`` may carry a
    precomputed U^T f to amortize the dominant product across epochs."""
    f = np.asarray(f, dtype=np.float64)
    b = (m.basis.vectors.T @ f) if ut_f is None else ut_f
    scaled = m.filter_diag.value.reshape(-1, 1) * b
    u = m.basis.vectors if rows is None else m.basis.vectors[np.asarray(rows)]
    emb = u @ scaled
    if m.activation == "relu":
        emb = np.maximum(emb, 0.0)
    return emb @ m.decoder.value


def semi_logits(m: SemiGcnModel, p: np.ndarray, f: np.ndarray, rows=None) -> np.ndarray:
    h = np.maximum(p @ (np.asarray(f, dtype=np.float64) @ m.w1.value), 0.0)
    out = (p @ h) @ m.w2.value
    return out if rows is None else out[np.asarray(rows)]


def predict(m, g: Graph, rows=None) -> np.ndarray:
    """Predicted class ids under the model's own propagation convention."""
    if isinstance(m, SpectralModel):
        return np.argmax(spectral_logits(m, g.features, rows), axis=1)
    p = propagation_matrix(g, m.propagation)
    return np.argmax(semi_logits(m, p, g.features, rows), axis=1)


def accuracy(m, g: Graph, rows) -> float:
    rows = np.asarray(rows)
    if rows.size == 0:
        raise ValueError("empty evaluation row set")
    return float(np.mean(predict(m, g, rows) == g.labels[rows]))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: object
    trace: list = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.trace[-1] if self.trace else {}


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def train_model(model, g: Graph, epochs: int = 200, optimizer: str = "adam",
                lr: float = 0.01, l2_coefficient: float = 5e-4,
                epoch_hook: Optional[Callable] = None) -> TrainResult:
    """Fit the model on g's train mask; trace per-epoch train/val metrics.

    Works for both model families. Deterministic: no randomness inside the
    loop, so identical inits give identical traces. ``epoch_hook(epoch,
    model)`` runs after each step, before metrics.
    """
    if g.labels is None:
        raise ValueError("training needs labels")
    if g.train_mask is None or len(g.train_mask) == 0:
        raise ValueError("training needs a non-empty train mask")
    train_idx = g.train_mask
    val_idx = g.val_mask if g.val_mask is not None and len(g.val_mask) else None
    n_classes = g.n_classes
    targets = one_hot(g.labels[train_idx], n_classes)
    opt = ad.make_optimizer(optimizer, lr=lr)
    result = TrainResult(model=model)

    spectral = isinstance(model, SpectralModel)
    if spectral:
        if model.decoder.cols < n_classes:
            raise ValueError("decoder is narrower than the label set")
        ut_f = model.basis.vectors.T @ g.features
        u_train = Tensor2(model.basis.vectors[train_idx])
        b_const = Tensor2(ut_f)
    else:
        p_np = propagation_matrix(g, model.propagation)
        p_const = Tensor2(p_np)
        f_const = Tensor2(g.features)

    for epoch in range(epochs):
        if spectral:
            emb = _act(model, ad.matmul(u_train, ad.diag_scale(model.filter_diag, b_const)))
            probs = ad.softmax_rows(ad.matmul(emb, model.decoder))
        else:
            probs = ad.select_rows(forward_semi(model, p_const, f_const), train_idx)
        loss = ad.cross_entropy(probs, targets)
        if l2_coefficient:
            reg = None
            for p in model.params:
                term = ad.sum_all(ad.hadamard(p, p))
                reg = term if reg is None else ad.add(reg, term)
            loss = ad.add(loss, ad.scale(reg, l2_coefficient))

        zero_grad(model.params)
        backward(loss)
        optimizer_step(opt, model.params)

        if epoch_hook is not None:
            epoch_hook(epoch, model)

        if spectral:
            train_logits = spectral_logits(model, g.features, train_idx, ut_f=ut_f)
            val_logits = (spectral_logits(model, g.features, val_idx, ut_f=ut_f)
                          if val_idx is not None else None)
        else:
            train_logits = semi_logits(model, p_np, g.features, train_idx)
            val_logits = semi_logits(model, p_np, g.features, val_idx) if val_idx is not None else None
        train_acc = float(np.mean(np.argmax(train_logits, axis=1) == g.labels[train_idx]))
        val_acc = (float(np.mean(np.argmax(val_logits, axis=1) == g.labels[val_idx]))
                   if val_logits is not None else None)
        result.trace.append({
            "epoch": epoch,
            "train_loss": float(loss.item()),
            "train_acc": train_acc,
            "val_acc": val_acc,
        })
    return result


def write_trace(path, trace) -> None:
    """JSON-lines metric trace, one record per epoch, keys sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in trace:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def freeze(model) -> None:
    for p in model.params:
        p.requires_grad = False


def spectral_params_dict(m: SpectralModel) -> dict:
    return {"filter_diag": m.filter_diag, "decoder": m.decoder}


def semi_params_dict(m: SemiGcnModel) -> dict:
    return {"w1": m.w1, "w2": m.w2}
