"""Node signals over training epochs: Fourier model and localization probes.

A node's scalar feature across E training epochs is treated as a discrete
signal. The module provides the exact DFT of such trajectories, two inverse
forms (the standard one and an amplitude-phase pairing that carries an extra
rotation factor; both are evaluated and their disagreement reported), the
closed-form signal model built from Laplacian eigenpairs, and the two
basis-row experiments: scaling one row of U and deleting one node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import (
    Graph,
    SpectralBasis,
    bfs_layers,
    build_adjacency,
    build_laplacian,
    connected,
    eigendecompose,
)
from .models import SpectralModel, train_model


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class NodeTrajectory:
    """One node's scalar signal over E epochs (single-feature convention)."""

    node: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size < 1:
            raise ValueError("a trajectory needs at least one epoch")
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def epochs(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Spectrum:
    node: int
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.complex128).ravel()
        if c.size < 1:
            raise ValueError("a spectrum needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise ValueError("spectrum contains non-finite values")
        object.__setattr__(self, "coefficients", c)

    @property
    def epochs(self) -> int:
        return len(self.coefficients)

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.coefficients)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.coefficients)


@dataclass(frozen=True)
class SignalModelParams:
    """Closed-form trajectory coefficients.

    theta_bar is the length-E constant vector the derivation folds into the
    per-eigenvector coefficients c_bar, so it never enters the numerics here;
    it is kept because the analytic form is stated with it. epsilon_interval
    is the formal epoch-interval symbol: it cancels analytically
    ((2*pi*nu/(E*eps))*t*eps = 2*pi*nu*t/E) and is only validated, never used.
    """

    theta_bar: np.ndarray
    c_bar: np.ndarray
    lambdas: np.ndarray
    u_row: np.ndarray
    epsilon_interval: float = 1e-9

    def __post_init__(self):
        for name in ("theta_bar", "c_bar", "lambdas", "u_row"):
            v = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, v)
        if len(self.theta_bar) < 1:
            raise ValueError("theta_bar needs at least one epoch entry")
        n = len(self.u_row)
        if len(self.c_bar) != n or len(self.lambdas) != n:
            raise ValueError("c_bar, lambdas and u_row must share one length")
        if not self.epsilon_interval > 0:
            raise ValueError("epsilon_interval must be positive")

    @property
    def epochs(self) -> int:
        return len(self.theta_bar)


# ---------------------------------------------------------------------------
# transforms


def dft(traj: NodeTrajectory) -> Spectrum:
    """f_hat[nu] = sum_t f[t] exp(-2*pi*j*nu*t/E), evaluated directly."""
    f = traj.values
    e = traj.epochs
    t = np.arange(e)
    kernel = np.exp(-2j * np.pi * np.outer(t, t) / e)
    return Spectrum(node=traj.node, coefficients=kernel.T @ f.astype(np.complex128))


def reconstruct(spectrum: Spectrum) -> NodeTrajectory:
    """Standard inverse transform f[t] = (1/E) sum_nu f_hat[nu] e^{+...}.

    The real part is returned; spectra of real signals leave the imaginary
    part at rounding noise.
    """
    return NodeTrajectory(node=spectrum.node,
                          values=_standard_inverse(spectrum).real)


def _standard_inverse(spectrum: Spectrum) -> np.ndarray:
    c = spectrum.coefficients
    e = spectrum.epochs
    t = np.arange(e)
    kernel = np.exp(2j * np.pi * np.outer(t, t) / e)
    return (kernel @ c) / e


def amplitude_phase_reconstruction(spectrum: Spectrum) -> dict:
    """Both amplitude-phase inverse forms and their deviation from standard.

    "paired" follows the real-DFT pairing of nu with E-nu: unpaired terms
    (nu = 0, and nu = E/2 when E is even) carry 1/E, paired terms carry
    (2/E)|f_hat|cos(2*pi*nu*t/E + phase). "literal" instead runs the 2/E
    cosine over every nu and multiplies each term by the extra rotation
    exp(2j*pi*t*nu/E) that the source derivation carries; it is complex
    valued and generally disagrees with the standard inverse.
    """
    c = spectrum.coefficients
    e = spectrum.epochs
    t = np.arange(e)
    amp, phase = spectrum.amplitude, spectrum.phase

    paired = np.full(e, c[0].real / e)
    for nu in range(1, e // 2 + 1):
        term = (2.0 / e) * amp[nu] * np.cos(2 * np.pi * nu * t / e + phase[nu])
        if 2 * nu == e:
            # the Nyquist bin pairs with itself
            paired += term / 2.0
        else:
            paired += term

    literal = np.zeros(e, dtype=np.complex128)
    for nu in range(e):
        cosine = (2.0 / e) * amp[nu] * np.cos(2 * np.pi * nu * t / e + phase[nu])
        literal += cosine * np.exp(2j * np.pi * t * nu / e)

    standard = _standard_inverse(spectrum)
    return {
        "standard": standard.real,
        "paired": paired,
        "literal": literal,
        "paired_deviation": float(np.max(np.abs(paired - standard))),
        "literal_deviation": float(np.max(np.abs(literal - standard))),
    }


# ---------------------------------------------------------------------------
# the closed-form signal model


def initial_signal(theta_bar_0: float, u_row) -> float:
    """f[0] = 2 * theta_bar_0 * Sum[u(alpha)]."""
    row = np.asarray(u_row, dtype=np.float64).ravel()
    return 2.0 * float(theta_bar_0) * float(row.sum())


def analytic_trajectory(params: SignalModelParams, node: int) -> NodeTrajectory:
    """f[t] = sum_i c_bar_i exp(lambda_i t) u_i(alpha) for t = 0..E-1."""
    t = np.arange(params.epochs, dtype=np.float64)
    # (E, N) growth table; columns scaled by c_bar * u entries
    growth = np.exp(np.outer(t, params.lambdas))
    values = growth @ (params.c_bar * params.u_row)
    return NodeTrajectory(node=node, values=values)


@dataclass(frozen=True)
class SignalEvaluation:
    value: float
    literal_value: complex
    trajectory: NodeTrajectory
    spectrum: Spectrum


def eval_signal_model(params: SignalModelParams, alpha: int, t: int) -> SignalEvaluation:
    """Analytic trajectory -> DFT -> inverse, evaluated at epoch t.

    ``value`` comes from the standard inverse; ``literal_value`` from the
    amplitude-phase form with the extra rotation factor, which at E=1, t=0
    reproduces the 2*theta_bar_0*Sum[u] initial signal.
    """
    t = int(t)
    if not 0 <= t < params.epochs:
        raise ValueError(f"epoch {t} outside 0..{params.epochs - 1}")
    traj = analytic_trajectory(params, alpha)
    spec = dft(traj)
    forms = amplitude_phase_reconstruction(spec)
    return SignalEvaluation(
        value=float(forms["standard"][t]),
        literal_value=complex(forms["literal"][t]),
        trajectory=traj,
        spectrum=spec,
    )


# ---------------------------------------------------------------------------
# trajectory capture from a real training run


def capture_trajectories(model: SpectralModel, g: Graph, epochs: int,
                         projection=None, optimizer: str = "adam",
                         lr: float = 0.01, l2_coefficient: float = 5e-4):
    """Per-node trajectories of a scalar embedding projection during training.

    Runs the training loop with a hook that records the projected pre-decoder
    embedding of every node after each step. Default projection: first
    embedding coordinate. Returns (trajectories, train result).
    """
    if epochs < 1:
        raise ValueError("capturing needs at least one epoch")
    if projection is None:
        projection = lambda row: float(row[0])
    n = g.n_nodes
    series = [[] for _ in range(n)]

    def hook(epoch, m):
        emb = _embedding_matrix(m, g.features)
        for v in range(n):
            series[v].append(projection(emb[v]))

    result = train_model(model, g, epochs=epochs, optimizer=optimizer, lr=lr,
                         l2_coefficient=l2_coefficient, epoch_hook=hook)
    trajectories = [NodeTrajectory(node=v, values=np.asarray(series[v]))
                    for v in range(n)]
    return trajectories, result


def _embedding_matrix(m: SpectralModel, f: np.ndarray) -> np.ndarray:
    b = m.basis.vectors.T @ np.asarray(f, dtype=np.float64)
    emb = m.basis.vectors @ (m.filter_diag.value.reshape(-1, 1) * b)
    if m.activation == "relu":
        emb = np.maximum(emb, 0.0)
    return emb


# ---------------------------------------------------------------------------
# experiment 1: scaling one basis row


def neighbors_from_basis(basis: SpectralBasis, v: int, tol: float = 1e-8) -> list:
    """First-order neighbors of v read out of U Lambda U^T (= D - A)."""
    delta_row = (basis.vectors[v] * basis.eigenvalues) @ basis.vectors.T
    return [int(j) for j in range(basis.n_nodes)
            if j != v and delta_row[j] < -tol]


def default_delta_sweep() -> list:
    """delta = 1 - k/100 for k = 1..50."""
    return [1.0 - k / 100.0 for k in range(1, 51)]


def perturb_u_experiment(basis: SpectralBasis, filter_diag, f: np.ndarray,
                         v: int, c_v: int, deltas) -> list:
    """Embedding deviation of v when one basis row is scaled by delta.

    Acting targets are v itself and its first c_v neighbors (ascending node
    id). For each target i and each delta, row i of a copy of U is scaled by
    delta, the filtered embedding U g(Lambda) U^T f is recomputed without
    activation, and the Euclidean distance of row v from its unperturbed
    value is recorded. Returns rows {target, delta, deviation}.
    """
    theta = np.asarray(getattr(filter_diag, "value", filter_diag),
                       dtype=np.float64).ravel()
    n = basis.n_nodes
    if not 0 <= v < n:
        raise ValueError(f"node {v} out of range for {n} nodes")
    if len(theta) != n:
        raise ValueError("filter length must match the basis")
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != n:
        raise ValueError(f"features must be ({n}, d)")
    hood = neighbors_from_basis(basis, v)
    if not hood:
        raise ValueError(f"node {v} is isolated; the experiment needs neighbors")
    if c_v > len(hood):
        raise ValueError(f"c_v = {c_v} exceeds the {len(hood)} first-order neighbors")

    def embed(u):
        return u @ (theta[:, None] * (u.T @ f))

    base_row = embed(basis.vectors)[v]
    rows = []
    for i in [v] + hood[:c_v]:
        for delta in deltas:
            u_hat = basis.vectors.copy()
            u_hat[i] = u_hat[i] * float(delta)
            dev = float(np.linalg.norm(embed(u_hat)[v] - base_row))
            rows.append({"target": i, "delta": float(delta), "deviation": dev})
    return rows


# ---------------------------------------------------------------------------
# experiment 2: deleting one node


def reconnected_adjacency(g: Graph, tau: int):
    """Adjacency of the graph with tau removed and its neighbors re-tied.

    A surviving pair both adjacent to tau gains (w_tau_i + w_tau_j)/2 on
    its edge weight, creating the edge when absent; all other weights pass
    through. Returns (adjacency over survivors, survivor node ids).
    """
    n = g.n_nodes
    a = build_adjacency(g)
    w_tau = a[tau]
    survivors = [i for i in range(n) if i != tau]
    a_d = a[np.ix_(survivors, survivors)].copy()
    for p, i in enumerate(survivors):
        for q in range(p + 1, len(survivors)):
            j = survivors[q]
            if w_tau[i] != 0.0 and w_tau[j] != 0.0:
                bump = (w_tau[i] + w_tau[j]) / 2.0
                a_d[p, q] += bump
                a_d[q, p] += bump
    return a_d, survivors


def delete_node_experiment(g: Graph, tau: int, orders) -> dict:
    """Basis-row change C for each neighbor order after deleting node tau.

    Surviving pairs that were both tied to tau get their edge weight raised
    by (w_tau_i + w_tau_j)/2 (creating the edge when absent); the deleted
    graph's Laplacian is re-decomposed and each surviving node's clean basis
    row, truncated to the N-1 comparable coordinates, is compared against
    its new row via C = sum_i [log|u_i|^2 - log|u_i_deleted|^2] with
    magnitudes floored at 1e-12. Returns {order: {node: C}} for the
    requested neighbor orders of tau.
    """
    n = g.n_nodes
    if not 0 <= tau < n:
        raise ValueError(f"node {tau} out of range for {n} nodes")
    if not connected(g):
        raise ValueError("the experiment needs a connected graph")
    if n < 3:
        raise ValueError("deleting a node needs at least three nodes")

    a_d, survivors = reconnected_adjacency(g, tau)
    deleted = Graph(
        n_nodes=n - 1,
        features=g.features[survivors],
        edges=tuple((p, q, float(a_d[p, q]))
                    for p in range(n - 1) for q in range(p + 1, n - 1)
                    if a_d[p, q] != 0.0),
        labels=None if g.labels is None else g.labels[survivors],
    )
    if not connected(deleted):
        raise ValueError(
            f"deleting node {tau} disconnects the graph even after reconnection")

    basis = eigendecompose(build_laplacian(g), kind="combinatorial")
    basis_d = eigendecompose(build_laplacian(deleted), kind="combinatorial")

    def change(node: int) -> float:
        clean_row = np.abs(basis.vectors[node, : n - 1])
        new_row = np.abs(basis_d.vectors[survivors.index(node)])
        clean_row = np.maximum(clean_row, 1e-12)
        new_row = np.maximum(new_row, 1e-12)
        return float(np.sum(np.log(clean_row ** 2) - np.log(new_row ** 2)))

    dist = bfs_layers(g, tau)
    by_order: dict[int, dict[int, float]] = {}
    for beta in orders:
        beta = int(beta)
        if beta < 1:
            raise ValueError("neighbor orders start at 1")
        members = sorted(node for node, d in dist.items() if d == beta)
        by_order[beta] = {node: change(node) for node in members}
    return by_order


def most_connected_nodes(g: Graph, count: int) -> list:
    """Node ids sorted by descending degree (id breaks ties), first ``count``."""
    deg = [0.0] * g.n_nodes
    for i, j, w in g.edges:
        deg[i] += 1
        deg[j] += 1
    order = sorted(range(g.n_nodes), key=lambda v: (-deg[v], v))
    return order[:count]


# ---------------------------------------------------------------------------
# plot-ready exports


def write_deviation_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("target,delta,deviation\n")
        for r in rows:
            fh.write(f"{r['target']},{r['delta']:.17g},{r['deviation']:.17g}\n")


def write_change_csv(by_order: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("order,node,C\n")
        for beta in sorted(by_order):
            for node in sorted(by_order[beta]):
                fh.write(f"{beta},{node},{by_order[beta][node]:.17g}\n")
