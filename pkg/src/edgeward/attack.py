"""Edge-perturbing attack: train an adjacency rewrite against a frozen target.

The attack owns a trainable matrix H. Each step symmetrizes it (H' = H +
H^T), re-freezes the target rows to the clean adjacency, pushes the result
through a frozen surrogate copy of the target model, and descends a
cross-entropy objective whose labels put each target at its desired class
and every other node at the target model's clean prediction. The binary
victim adjacency is emitted by thresholding at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor2, backward, optimizer_step, zero_grad
from .graphs import Graph, build_adjacency, graph_from_adjacency, degree_histogram
from .models import SemiGcnModel, forward_semi, one_hot, renormalize, semi_logits


@dataclass(frozen=True)
class AttackSpec:
    targets: tuple
    desired_labels: tuple
    mode: str = "single"
    theta: float = 1.0              # direct-perturbation coefficient, multi mode
    reg_weight: float = 0.05        # global-concealment weight, see run_attack
    epochs: int = 300
    lr: float = 0.01
    optimizer: str = "adam"
    seed: int = 0
    propagation: str = "raw"        # surrogate convention: raw | renormalized
    binarize_in_loop: bool = False
    stop_when_successful: bool = False   # stop early once the emitted graph flips

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        desired = tuple(int(c) for c in self.desired_labels)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "desired_labels", desired)
        if not targets:
            raise ValueError("attack needs at least one target")
        if len(set(targets)) != len(targets):
            raise ValueError("targets must be distinct")
        if len(desired) != len(targets):
            raise ValueError("one desired label per target")
        if self.mode not in ("single", "multi"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "single" and len(targets) != 1:
            raise ValueError("single mode takes exactly one target")
        if self.theta < 0 or self.reg_weight < 0:
            raise ValueError("theta and reg_weight must be nonnegative")
        if self.propagation not in ("raw", "renormalized"):
            raise ValueError(f"unknown propagation {self.propagation!r}")


@dataclass
class AttackResult:
    targets: tuple
    desired_labels: tuple
    h: np.ndarray                   # final continuous trainable matrix
    h_prime_kappa: np.ndarray       # symmetrized, row-frozen
    a_hat: np.ndarray               # binary victim adjacency
    edits_added: list
    edits_removed: list
    success: list
    clean_predictions: np.ndarray
    attacked_predictions: np.ndarray
    loss_trace: list = field(default_factory=list)
    partition: dict = field(default_factory=dict)

    @property
    def perturbation_count(self) -> int:
        return len(self.edits_added) + len(self.edits_removed)

    def to_json_dict(self) -> dict:
        return {
            "targets": list(self.targets),
            "desired_labels": list(self.desired_labels),
            "success": list(self.success),
            "perturbation_count": self.perturbation_count,
            "edits_added": [list(e) for e in self.edits_added],
            "edits_removed": [list(e) for e in self.edits_removed],
        }


# ---------------------------------------------------------------------------
# attack building blocks


def symmetrize(h):
    """H' = H + H^T; gradient splits to both occurrences."""
    ht = h if isinstance(h, Tensor2) else Tensor2(np.asarray(h, dtype=np.float64))
    if ht.rows != ht.cols:
        raise ValueError(f"symmetrize needs a square matrix, got {ht.shape}")
    return ad.add(ht, ad.transpose(ht))


def freeze_target_rows(h_prime, a: np.ndarray, targets):
    """Replace each target row of H' by the clean adjacency row.

    No gradient flows into frozen rows. An empty target set passes H'
    through untouched.
    """
    hp = h_prime if isinstance(h_prime, Tensor2) else Tensor2(np.asarray(h_prime, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    if hp.shape != a.shape:
        raise ValueError(f"shape mismatch: {hp.shape} vs {a.shape}")
    n = hp.rows
    for k in targets:
        if not 0 <= k < n:
            raise ValueError(f"target {k} out of range for {n} nodes")
    mask = np.ones_like(a)
    for k in targets:
        mask[k, :] = 0.0
    return ad.add(ad.hadamard(hp, Tensor2(mask)), Tensor2(a * (1.0 - mask)))


def complete_graph_ones(n: int) -> np.ndarray:
    """The all-ones reference adjacency (complete graph with closed loops)."""
    return np.ones((n, n), dtype=np.float64)


def concealment_reg(a: np.ndarray, h_prime_kappa, a_bar: np.ndarray | None = None):
    """Sum of all entries of (A - H'_kappa (.) A_bar), differentiable."""
    hpk = h_prime_kappa if isinstance(h_prime_kappa, Tensor2) else Tensor2(h_prime_kappa)
    a = np.asarray(a, dtype=np.float64)
    if a_bar is None:
        a_bar = complete_graph_ones(a.shape[0])
    masked = ad.hadamard(hpk, Tensor2(np.asarray(a_bar, dtype=np.float64)))
    return ad.sum_all(ad.add(Tensor2(a), ad.scale(masked, -1.0)))


def multi_target_reg(a: np.ndarray, h_prime_kappa, h, targets, theta: float,
                     a_bar: np.ndarray | None = None):
    """Concealment term plus theta * sum over the target rows of H."""
    base = concealment_reg(a, h_prime_kappa, a_bar)
    ht = h if isinstance(h, Tensor2) else Tensor2(h)
    rows = ad.select_rows(ht, np.asarray(sorted(targets), dtype=np.int64))
    return ad.add(base, ad.scale(ad.sum_all(rows), float(theta)))


def binarize(o, a: np.ndarray):
    """Threshold rule: entry 0 where A >= O, 1 where A < O.

    Tensor input keeps a straight-through gradient; array input returns a
    plain array.
    """
    a = np.asarray(a, dtype=np.float64)
    if isinstance(o, Tensor2):
        return ad.binarize_st(o, a)
    o = np.asarray(o, dtype=np.float64)
    if o.shape != a.shape:
        raise ValueError(f"binarize shape mismatch: {o.shape} vs {a.shape}")
    return np.where(a >= o, 0.0, 1.0)


def init_perturbation(a: np.ndarray, mode: str, targets):
    """Trainable H initialized to A, plus the trainable-entry mask.

    Single mode excludes the target's row and column, which partitions the
    trainable area into the four blocks around them; the block shapes are
    returned as bookkeeping. Multi mode trains every entry.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    h = Tensor2(a.copy(), requires_grad=True, name="H")
    mask = np.ones_like(a)
    if mode == "single":
        (k,) = tuple(targets)
        mask[k, :] = 0.0
        mask[:, k] = 0.0
        partition = {
            "blocks": {
                "H1": (k, k),
                "H2": (k, n - 1 - k),
                "H3": (n - 1 - k, k),
                "H4": (n - 1 - k, n - 1 - k),
            },
            "trainable_entries": int(mask.sum()),
        }
    elif mode == "multi":
        partition = {"trainable_entries": n * n}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return h, mask, partition


def _propagation(mat, kind: str):
    """Propagation matrix from a (possibly traced) adjacency-like matrix."""
    if kind == "raw":
        return mat
    if isinstance(mat, Tensor2):
        with_loops = ad.add(mat, Tensor2(np.eye(mat.rows)))
        dinv = ad.powf(ad.sum_rows(with_loops), -0.5)
        return ad.hadamard(with_loops, ad.matmul(dinv, ad.transpose(dinv)))
    return renormalize(mat)


# ---------------------------------------------------------------------------
# the attack runner


def attack_objective(target: SemiGcnModel, f_const: Tensor2, a: np.ndarray,
                     h_var: Tensor2, mask: np.ndarray, spec: AttackSpec,
                     y_hat: np.ndarray) -> Tensor2:
    """One forward pass of the full attack loss, differentiable in h_var."""
    if np.all(mask == 1.0):
        h_eff = h_var
    else:
        h_eff = ad.add(ad.hadamard(h_var, Tensor2(mask)), Tensor2(a * (1.0 - mask)))
    hp = symmetrize(h_eff)
    hpk = freeze_target_rows(hp, a, spec.targets)
    if spec.binarize_in_loop:
        hpk = binarize(hpk, a)
    p = _propagation(hpk, spec.propagation)
    out = forward_semi(target, p, f_const)
    loss = ad.cross_entropy(out, y_hat)
    if spec.reg_weight:
        if spec.mode == "single":
            reg = concealment_reg(a, hpk)
        else:
            reg = multi_target_reg(a, hpk, h_eff, spec.targets, spec.theta)
        loss = ad.add(loss, ad.scale(reg, spec.reg_weight))
    return loss


def _flips(target: SemiGcnModel, f: np.ndarray, spec: "AttackSpec",
           adj: np.ndarray) -> bool:
    pred = np.argmax(semi_logits(target, _propagation(adj, spec.propagation), f), axis=1)
    return all(pred[k] == want
               for k, want in zip(spec.targets, spec.desired_labels))


def _sparsify(h_value: np.ndarray, mask: np.ndarray, a: np.ndarray,
              targets, flips) -> np.ndarray:
    """Zero out weak perturbation mass while the emitted graph still succeeds.

    Edits are ranked by how much continuous mass backs them; the smallest
    strength-ordered prefix that flips every target is kept and then pruned
    edit by edit. Returns a copy of ``h_value`` projected onto the kept set.
    """
    h_final, hpk, a_hat = _emit(h_value, mask, a, targets)
    if not flips(a_hat):
        return h_value
    n = a.shape[0]
    cands = []
    for i in range(n):
        for j in range(i + 1, n):
            if a_hat[i, j] != a[i, j]:
                strength = hpk[i, j] if a[i, j] == 0.0 else 2.0 - hpk[i, j]
                cands.append((strength, i, j))
    cands.sort(reverse=True)

    trial = a.copy()
    kept = []
    for _, i, j in cands:
        trial[i, j] = trial[j, i] = 1.0 - a[i, j]
        kept.append((i, j))
        if flips(trial):
            break
    else:
        return h_value
    for i, j in list(kept):
        trial[i, j] = trial[j, i] = a[i, j]
        if flips(trial):
            kept.remove((i, j))
        else:
            trial[i, j] = trial[j, i] = 1.0 - a[i, j]

    keep = set(kept)
    out = h_value.copy()
    for _, i, j in cands:
        if (i, j) in keep:
            continue
        # dropped addition collapses to no mass, dropped removal back to edge
        out[i, j] = out[j, i] = a[i, j]
    return out


def _emit(h_value: np.ndarray, mask: np.ndarray, a: np.ndarray, targets):
    """Binary victim adjacency from the current continuous matrix."""
    h_final = mask * h_value + (1.0 - mask) * a
    hp = h_final + h_final.T
    hpk = hp.copy()
    for k in targets:
        hpk[k, :] = a[k, :]
    a_hat = binarize(hpk, a)
    for k in targets:
        a_hat[k, :] = a[k, :]
        a_hat[:, k] = a[:, k]
    np.fill_diagonal(a_hat, 0.0)
    return h_final, hpk, a_hat


def run_attack(target: SemiGcnModel, g: Graph, spec: AttackSpec) -> AttackResult:
    """Optimize the perturbation matrix and emit the binary victim adjacency.

    The target model must be frozen (no parameter requires grad); the run
    owns all mutable state, so concurrent attacks never interact. With
    ``stop_when_successful`` the loop ends at the first epoch whose emitted
    binary graph already flips every target, which keeps the edit set small.
    """
    if any(p.requires_grad for p in target.params):
        raise ValueError("target model must be frozen before attacking")
    n = g.n_nodes
    for k in spec.targets:
        if not 0 <= k < n:
            raise ValueError(f"target {k} out of range for {n} nodes")
    a = build_adjacency(g)
    f = g.features

    clean_pred = np.argmax(semi_logits(target, _propagation(a, spec.propagation), f), axis=1)
    n_classes = target.w2.cols
    for k, want in zip(spec.targets, spec.desired_labels):
        if not 0 <= want < n_classes:
            raise ValueError(f"desired label {want} out of range")
        if clean_pred[k] == want:
            raise ValueError(
                f"desired label for node {k} equals its current prediction ({want})")

    y_hat = one_hot(clean_pred, n_classes)
    for k, want in zip(spec.targets, spec.desired_labels):
        y_hat[k, :] = 0.0
        y_hat[k, want] = 1.0

    h_var, mask, partition = init_perturbation(a, spec.mode, spec.targets)
    if partition["trainable_entries"] == 0:
        raise ValueError("no trainable entries in the perturbation matrix")
    f_const = Tensor2(f)
    opt = ad.make_optimizer(spec.optimizer, lr=spec.lr)
    trace = []
    for _ in range(spec.epochs):
        loss = attack_objective(target, f_const, a, h_var, mask, spec, y_hat)
        zero_grad([h_var])
        backward(loss)
        optimizer_step(opt, [h_var])
        # keep H' = H + H^T inside [0, 2] and the graph free of self loops
        clipped = np.clip(h_var.value, 0.0, 1.0)
        np.fill_diagonal(clipped, 0.0)
        h_var.value = clipped
        trace.append(float(loss.item()))
        if spec.stop_when_successful:
            _, _, a_try = _emit(h_var.value, mask, a, spec.targets)
            if _flips(target, f, spec, a_try):
                break

    if spec.stop_when_successful:
        h_var.value = _sparsify(
            h_var.value, mask, a, spec.targets,
            lambda adj: _flips(target, f, spec, adj))
    h_final, hpk, a_hat = _emit(h_var.value, mask, a, spec.targets)

    added, removed = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j] == 0.0 and a_hat[i, j] != 0.0:
                added.append((i, j))
            elif a[i, j] != 0.0 and a_hat[i, j] == 0.0:
                removed.append((i, j))

    attacked_pred = np.argmax(
        semi_logits(target, _propagation(a_hat, spec.propagation), f), axis=1)
    success = [bool(attacked_pred[k] == want)
               for k, want in zip(spec.targets, spec.desired_labels)]
    return AttackResult(
        targets=spec.targets, desired_labels=spec.desired_labels,
        h=h_final, h_prime_kappa=hpk, a_hat=a_hat,
        edits_added=added, edits_removed=removed, success=success,
        clean_predictions=clean_pred, attacked_predictions=attacked_pred,
        loss_trace=trace, partition=partition)


def extract_victim_graph(result: AttackResult, g: Graph) -> Graph:
    """The attacked graph: same features/labels/masks, edges from A-hat."""
    return graph_from_adjacency(result.a_hat, g)


def degree_distribution_report(g_clean: Graph, g_victim: Graph) -> dict:
    if g_clean.n_nodes != g_victim.n_nodes:
        raise ValueError("graphs differ in node count")
    clean = degree_histogram(g_clean)
    victim = degree_histogram(g_victim)
    degrees = set(clean) | set(victim)
    l1 = sum(abs(clean.get(d, 0) - victim.get(d, 0)) for d in degrees)
    return {"clean": clean, "victim": victim, "l1_distance": int(l1)}
