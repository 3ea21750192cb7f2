"""Anonymous-position defense: noise-fed position generator vs spectral critic.

Node positions (rows of the Laplacian eigenvector matrix U) are what edge
perturbations ultimately reach, so this module trains a generator to produce
stand-in rows from staggered Gaussian noise while a two-part discriminator
(a trainable spectral diagonal plus a dense decoder) pushes classification
accuracy. After training, inference runs entirely on generated positions:
the call signature has no place to put edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor2, backward, make_optimizer, optimizer_step, zero_grad
from .graphs import Graph, SpectralBasis, build_laplacian, eigendecompose
from .models import glorot, one_hot
from .rng import substream


# ---------------------------------------------------------------------------
# staggered Gaussian noise


@dataclass(frozen=True)
class StaggeredNoiseSpec:
    """Per-node Gaussian components laid edge to edge on the number axis.

    Component n (1-based) is Norm(means[n-1], sigma^2); adjacent density
    boundaries coincide so the components tile the axis without overlap of
    their above-epsilon regions.
    """

    n_nodes: int
    sigma: float
    epsilon: float
    r: float
    means: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.means, dtype=np.float64).ravel()
        if len(m) != self.n_nodes:
            raise ValueError("one mean per node required")
        object.__setattr__(self, "means", m)


def staggered_spec(n_nodes: int, sigma: float, epsilon: float) -> StaggeredNoiseSpec:
    """Half-width r solves pdf(mu +- r) = epsilon; means are (2n-N-1)r.

    epsilon must lie in (0, 1/(sqrt(2*pi)*sigma)): at or beyond the upper
    bound the Gaussian density never comes down to epsilon and the half-width
    is undefined.
    """
    if n_nodes < 1:
        raise ValueError("need at least one node")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    bound = 1.0 / (np.sqrt(2.0 * np.pi) * sigma)
    if not 0.0 < epsilon < bound:
        raise ValueError(
            f"epsilon must lie in (0, {bound:.6g}) for sigma = {sigma:g}")
    r = sigma * np.sqrt(-2.0 * np.log(np.sqrt(2.0 * np.pi) * sigma * epsilon))
    n = np.arange(1, n_nodes + 1, dtype=np.float64)
    return StaggeredNoiseSpec(n_nodes=n_nodes, sigma=float(sigma),
                              epsilon=float(epsilon), r=float(r),
                              means=(2.0 * n - n_nodes - 1.0) * r)


def sample_noise(spec: StaggeredNoiseSpec, v: int, k: int, rng) -> np.ndarray:
    """k draws from node v's component. v is 1-based like the derivation."""
    if not 1 <= v <= spec.n_nodes:
        raise ValueError(f"node index {v} outside 1..{spec.n_nodes}")
    if k < 1:
        raise ValueError("need at least one draw")
    return rng.normal(spec.means[v - 1], spec.sigma, size=k)


# ---------------------------------------------------------------------------
# the two players


@dataclass
class Generator:
    """MLP from a noise vector of width k to a length-N position row."""

    noise_width: int
    n_nodes: int
    w1: Tensor2
    b1: Tensor2
    w2: Tensor2
    b2: Tensor2

    @property
    def params(self) -> list[Tensor2]:
        return [self.w1, self.b1, self.w2, self.b2]

    @property
    def hidden(self) -> int:
        return self.w1.cols


@dataclass
class Discriminator:
    """Spectral critic: trainable diagonal encoder and dense decoder."""

    enc_diag: Tensor2           # 1 x N, init ones like a fresh filter
    dec: Tensor2                # d x n_classes
    activation: str = "relu"

    @property
    def params(self) -> list[Tensor2]:
        return [self.enc_diag, self.dec]

    @property
    def n_nodes(self) -> int:
        return self.enc_diag.cols


def init_generator(noise_width: int, n_nodes: int, hidden: int = 64,
                   seed: int = 0) -> Generator:
    if noise_width < 1 or hidden < 1 or n_nodes < 1:
        raise ValueError("generator dimensions must be positive")
    rng = substream(seed, "generator-init")
    return Generator(
        noise_width=noise_width,
        n_nodes=n_nodes,
        w1=Tensor2(glorot(rng, noise_width, hidden), requires_grad=True, name="gen_w1"),
        b1=Tensor2(np.zeros((1, hidden)), requires_grad=True, name="gen_b1"),
        w2=Tensor2(glorot(rng, hidden, n_nodes), requires_grad=True, name="gen_w2"),
        b2=Tensor2(np.zeros((1, n_nodes)), requires_grad=True, name="gen_b2"),
    )


def init_discriminator(n_nodes: int, n_features: int, n_classes: int,
                       seed: int = 0) -> Discriminator:
    rng = substream(seed, "discriminator-init")
    return Discriminator(
        enc_diag=Tensor2(np.ones((1, n_nodes)), requires_grad=True, name="disc_enc"),
        dec=Tensor2(glorot(rng, n_features, n_classes), requires_grad=True,
                    name="disc_dec"),
    )


def generate_row(gen: Generator, z) -> Tensor2:
    """Differentiable forward: one noise vector to one 1 x N position row."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if len(z) != gen.noise_width:
        raise ValueError(f"noise width {len(z)} != {gen.noise_width}")
    h = ad.relu(ad.add(ad.matmul(ad.tensor(z.reshape(1, -1)), gen.w1), gen.b1))
    return ad.add(ad.matmul(h, gen.w2), gen.b2)


def generate_matrix(gen: Generator, z_batch: np.ndarray) -> np.ndarray:
    """Frozen batch forward: one noise row per node, stacked positions out."""
    z = np.asarray(z_batch, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != gen.noise_width:
        raise ValueError(f"noise batch must be (*, {gen.noise_width})")
    h = np.maximum(z @ gen.w1.value + gen.b1.value, 0.0)
    return h @ gen.w2.value + gen.b2.value


# ---------------------------------------------------------------------------
# training state: the linear-approximation matrix and its feature cache


@dataclass
class AnGcnState:
    """Mutable training scaffolding around the frozen clean basis.

    u_d starts as a copy of U and its column l drifts toward generated rows
    for node l; md caches u_d @ features and is maintained by rank-1 updates
    so a training step never pays the full N^2 d product.
    """

    basis: SpectralBasis
    features: np.ndarray
    q: float
    u_d: np.ndarray
    md: np.ndarray
    m_clean: np.ndarray
    epoch: int = 0


def init_angcn_state(g: Graph, q: float, laplacian: str = "normalized") -> AnGcnState:
    if not 0.0 < q <= 1.0:
        raise ValueError("approximation coefficient q must lie in (0, 1]")
    basis = eigendecompose(build_laplacian(g, kind=laplacian), kind=laplacian)
    f = np.asarray(g.features, dtype=np.float64)
    m_clean = basis.vectors @ f
    return AnGcnState(basis=basis, features=f, q=q,
                      u_d=basis.vectors.copy(), md=m_clean.copy(),
                      m_clean=m_clean)


def update_ud(state: AnGcnState, l: int, row) -> None:
    """Convex step of column l toward the generated row (transposed in).

    q = 1 lands the column exactly on the row; repeated steps with a fixed
    row shrink the residual by (1 - q) each time.
    """
    row = np.asarray(getattr(row, "value", row), dtype=np.float64).ravel()
    n = state.u_d.shape[0]
    if not 0 <= l < n:
        raise ValueError(f"node {l} out of range for {n} nodes")
    if len(row) != n:
        raise ValueError(f"row length {len(row)} != {n}")
    delta = state.q * (row - state.u_d[:, l])
    state.u_d[:, l] += delta
    state.md += np.outer(delta, state.features[l])


# ---------------------------------------------------------------------------
# label chains and losses


def _label_chain(disc: Discriminator, row_t, m: np.ndarray) -> Tensor2:
    """y = act(row * enc_diag @ m) @ dec, the shared 1 x iota soft label."""
    pre = ad.matmul(ad.hadamard(row_t, disc.enc_diag), ad.tensor(m))
    if disc.activation == "relu":
        pre = ad.relu(pre)
    return ad.matmul(pre, disc.dec)


def fake_and_real_labels(state: AnGcnState, gen: Generator, disc: Discriminator,
                         v: int, z) -> tuple[Tensor2, Tensor2]:
    """Soft labels of node v from its generated and clean positions.

    The generated row enters detached: this pairing feeds the critic's step,
    where the generator is frozen. Both labels use the full feature matrix
    through the cached products.
    """
    n = state.u_d.shape[0]
    if not 0 <= v < n:
        raise ValueError(f"node {v} out of range for {n} nodes")
    row = generate_row(gen, z)
    y_fake = _label_chain(disc, ad.tensor(row.value.copy()), state.md)
    y_real = _label_chain(disc, ad.tensor(state.basis.vectors[v:v + 1, :]),
                          state.m_clean)
    return y_fake, y_real


def loss_discriminator(y: Tensor2, kind: str, labels, v: int, rng=None) -> Tensor2:
    """Sigmoid cross-entropy against the true class (real) or a decoy (fake).

    The decoy is drawn uniformly from the classes other than node v's own,
    so a fake position is always pushed toward a wrong answer.
    """
    if labels is None:
        raise ValueError("labeled nodes are required for the adversarial losses")
    labels = np.asarray(labels)
    if not 0 <= v < len(labels):
        raise ValueError(f"node {v} has no label entry")
    label_v = int(labels[v])
    iota = y.cols
    if not 0 <= label_v < iota:
        raise ValueError(f"label {label_v} outside {iota} classes")
    if kind == "real":
        target = label_v
    elif kind == "fake":
        others = [c for c in range(iota) if c != label_v]
        if not others:
            raise ValueError("a decoy needs at least two classes")
        if rng is None:
            raise ValueError("decoy sampling needs an rng")
        target = int(others[rng.integers(len(others))])
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    return ad.cross_entropy(ad.sigmoid(y), one_hot(np.array([target]), iota))


def discriminator_step(state: AnGcnState, gen: Generator, disc: Discriminator,
                       v: int, z, labels, opt, rng) -> dict:
    """One critic update on enc_diag and dec; generator weights untouched."""
    y_fake, y_real = fake_and_real_labels(state, gen, disc, v, z)
    loss_real = loss_discriminator(y_real, "real", labels, v, rng)
    loss_fake = loss_discriminator(y_fake, "fake", labels, v, rng)
    loss = ad.add(loss_real, loss_fake)
    zero_grad(disc.params)
    backward(loss)
    optimizer_step(opt, disc.params)
    zero_grad(disc.params)
    return {"loss_D": float(loss.item()),
            "loss_real": float(loss_real.item()),
            "loss_fake": float(loss_fake.item())}


def generator_step(state: AnGcnState, gen: Generator, disc: Discriminator,
                   v: int, nspec: StaggeredNoiseSpec, labels, opt, rng,
                   inner_epochs: int) -> list:
    """Inner loop: resample noise, push the fooling label toward the truth.

    The critic participates in the forward pass but is never stepped here;
    its parameters are bit-identical before and after.
    """
    if inner_epochs < 1:
        raise ValueError("the generator loop needs at least one epoch")
    losses = []
    everything = gen.params + disc.params
    for _ in range(inner_epochs):
        z = sample_noise(nspec, v + 1, gen.noise_width, rng)
        y_fool = _label_chain(disc, generate_row(gen, z), state.md)
        loss = loss_discriminator(y_fool, "real", labels, v)
        zero_grad(everything)
        backward(loss)
        optimizer_step(opt, gen.params)
        zero_grad(everything)
        losses.append(float(loss.item()))
    return losses


# ---------------------------------------------------------------------------
# the adversarial loop


@dataclass(frozen=True)
class AngcnConfig:
    noise_width: int = 32
    hidden: int = 64
    q: float = 0.1
    lr_d: float = 0.01
    lr_g: float = 0.001
    inner_epochs: int = 5
    outer_epochs: int = 1500
    sigma: float = 1.0
    epsilon: float = float(np.exp(-0.5) / np.sqrt(2.0 * np.pi))
    seed: int = 0
    eval_every: int = 25
    sample_pool: str = "labeled"        # or "train"
    laplacian: str = "normalized"
    optimizer: str = "adam"

    def __post_init__(self):
        if self.outer_epochs < 0:
            raise ValueError("outer epochs cannot be negative")
        if self.inner_epochs < 1:
            raise ValueError("inner epochs must be at least 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")
        if self.sample_pool not in ("labeled", "train"):
            raise ValueError(f"unknown sample pool {self.sample_pool!r}")


@dataclass
class AngcnResult:
    generator: Generator
    discriminator: Discriminator
    state: AnGcnState
    noise_spec: StaggeredNoiseSpec
    config: AngcnConfig
    trace: list = field(default_factory=list)
    best: dict = field(default_factory=dict)


def _snapshot(gen: Generator, disc: Discriminator) -> dict:
    return {p.name: p.value.copy() for p in gen.params + disc.params}


def _restore(gen: Generator, disc: Discriminator, shot: dict) -> None:
    for p in gen.params + disc.params:
        p.value = shot[p.name].copy()


def _accuracy_pair(state: AnGcnState, gen: Generator, disc: Discriminator,
                   nspec: StaggeredNoiseSpec, labels, idx, rng) -> tuple[float, float]:
    enc = disc.enc_diag.value.ravel()
    dec = disc.dec.value
    z = np.stack([sample_noise(nspec, v + 1, gen.noise_width, rng)
                  for v in range(nspec.n_nodes)])
    u_g = generate_matrix(gen, z)
    y_g = np.maximum((u_g * enc) @ state.md, 0.0) @ dec
    y_real = np.maximum((state.basis.vectors * enc) @ state.m_clean, 0.0) @ dec
    want = labels[idx]
    acc_g = float(np.mean(np.argmax(y_g[idx], axis=1) == want))
    acc_d = float(np.mean(np.argmax(y_real[idx], axis=1) == want))
    return acc_d, acc_g


def train_angcn(g: Graph, config: AngcnConfig | None = None) -> AngcnResult:
    """Alternating critic/generator training over randomly sampled nodes.

    Per outer epoch: draw a node, draw its noise, generate its position row,
    drift the approximation column toward it, step the critic on the
    fake/real pair, then run the inner generator loop. Accuracy of both
    players is recorded every eval_every epochs and the generator checkpoint
    with the best generated-position accuracy is restored at the end.
    """
    cfg = config or AngcnConfig()
    if g.labels is None:
        raise ValueError("adversarial training needs a labeled graph")
    labels = np.asarray(g.labels)
    n_classes = int(labels.max()) + 1
    if n_classes < 2:
        raise ValueError("need at least two classes")

    if cfg.sample_pool == "train":
        if g.train_mask is None or len(g.train_mask) == 0:
            raise ValueError("sample pool 'train' needs a train mask")
        pool = np.asarray(g.train_mask, dtype=np.int64)
    else:
        pool = np.arange(g.n_nodes, dtype=np.int64)

    nspec = staggered_spec(g.n_nodes, cfg.sigma, cfg.epsilon)
    state = init_angcn_state(g, cfg.q, cfg.laplacian)
    gen = init_generator(cfg.noise_width, g.n_nodes, cfg.hidden, cfg.seed)
    disc = init_discriminator(g.n_nodes, g.features.shape[1], n_classes, cfg.seed)
    opt_d = make_optimizer(cfg.optimizer, cfg.lr_d)
    opt_g = make_optimizer(cfg.optimizer, cfg.lr_g)
    rng = substream(cfg.seed, "angcn-train")
    eval_idx = (np.asarray(g.test_mask, dtype=np.int64)
                if g.test_mask is not None and len(g.test_mask) else pool)

    result = AngcnResult(generator=gen, discriminator=disc, state=state,
                         noise_spec=nspec, config=cfg)
    best_shot = _snapshot(gen, disc)
    result.best = {"epoch": 0, "acc_G": -1.0, "acc_D": -1.0}

    for epoch in range(1, cfg.outer_epochs + 1):
        state.epoch = epoch
        v = int(pool[rng.integers(len(pool))])
        z = sample_noise(nspec, v + 1, cfg.noise_width, rng)
        update_ud(state, v, generate_row(gen, z).value.ravel())
        d_info = discriminator_step(state, gen, disc, v, z, labels, opt_d, rng)
        g_losses = generator_step(state, gen, disc, v, nspec, labels, opt_g,
                                  rng, cfg.inner_epochs)

        if epoch % cfg.eval_every == 0 or epoch == cfg.outer_epochs:
            eval_rng = substream(cfg.seed, f"angcn-eval-{epoch}")
            acc_d, acc_g = _accuracy_pair(state, gen, disc, nspec, labels,
                                          eval_idx, eval_rng)
            result.trace.append({"epoch": epoch, "acc_D": acc_d, "acc_G": acc_g,
                                 "loss_D": d_info["loss_D"],
                                 "loss_G": g_losses[-1]})
            if acc_g > result.best["acc_G"]:
                result.best = {"epoch": epoch, "acc_G": acc_g, "acc_D": acc_d}
                best_shot = _snapshot(gen, disc)

    _restore(gen, disc, best_shot)
    return result


# ---------------------------------------------------------------------------
# inference without edges


def infer_anonymous(gen: Generator, disc: Discriminator,
                    nspec: StaggeredNoiseSpec, features: np.ndarray,
                    indices, seed: int = 0) -> np.ndarray:
    """Class per requested node from generated positions only.

    Both position matrices come out of the generator; the signature carries
    no adjacency, Laplacian, or basis, so edge data cannot reach this path.
    """
    f = np.asarray(features, dtype=np.float64)
    n = nspec.n_nodes
    if gen.n_nodes != n:
        raise ValueError(f"generator emits {gen.n_nodes} entries, expected {n}")
    if disc.n_nodes != n:
        raise ValueError(f"critic diagonal has {disc.n_nodes} entries, expected {n}")
    if f.ndim != 2 or f.shape[0] != n:
        raise ValueError(f"features must be ({n}, d)")
    if f.shape[1] != disc.dec.rows:
        raise ValueError(f"decoder expects {disc.dec.rows} feature columns")
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("requested index out of range")

    rng = substream(seed, "angcn-infer")
    z = np.stack([sample_noise(nspec, v + 1, gen.noise_width, rng)
                  for v in range(n)])
    u_g = generate_matrix(gen, z)
    enc = disc.enc_diag.value.ravel()
    pre = (u_g * enc) @ (u_g.T @ f)
    if disc.activation == "relu":
        pre = np.maximum(pre, 0.0)
    y = pre @ disc.dec.value
    return np.argmax(y[idx], axis=1)


# ---------------------------------------------------------------------------
# checkpointing


def save_angcn(path, gen: Generator, disc: Discriminator,
               nspec: StaggeredNoiseSpec, q: float, seed: int) -> None:
    """Parameter map plus a meta row [N, sigma, epsilon, q, seed]."""
    params = {p.name: p for p in gen.params + disc.params}
    params["meta"] = np.array([[float(nspec.n_nodes), nspec.sigma,
                                nspec.epsilon, float(q), float(seed)]])
    ad.save_checkpoint(path, params)


def load_angcn(path):
    """Rebuild (generator, discriminator, noise spec, meta) from a checkpoint."""
    doc = ad.load_checkpoint(path)
    try:
        n, sigma, epsilon, q, seed = doc["meta"].ravel()
        gen = Generator(
            noise_width=doc["gen_w1"].shape[0],
            n_nodes=int(n),
            w1=Tensor2(doc["gen_w1"], requires_grad=True, name="gen_w1"),
            b1=Tensor2(doc["gen_b1"], requires_grad=True, name="gen_b1"),
            w2=Tensor2(doc["gen_w2"], requires_grad=True, name="gen_w2"),
            b2=Tensor2(doc["gen_b2"], requires_grad=True, name="gen_b2"),
        )
        disc = Discriminator(
            enc_diag=Tensor2(doc["disc_enc"], requires_grad=True, name="disc_enc"),
            dec=Tensor2(doc["disc_dec"], requires_grad=True, name="disc_dec"),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing checkpoint entry {exc}") from None
    nspec = staggered_spec(int(n), float(sigma), float(epsilon))
    return gen, disc, nspec, {"q": float(q), "seed": int(seed)}
