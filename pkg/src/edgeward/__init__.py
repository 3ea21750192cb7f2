"""Graph adversarial robustness toolkit.

Spectral and message-passing graph classifiers, an edge-perturbing attack
that rewrites a trainable adjacency while keeping the target's own row
untouched, an anonymization defense that replaces eigenvector rows with
generated stand-ins, and signal-model experiments for locating nodes from
training trajectories.
"""

__version__ = "0.1.0"

from .graphs import (
    Graph,
    SpectralBasis,
    build_adjacency,
    build_laplacian,
    eigendecompose,
    load_cora,
    load_graph,
    save_graph,
    sbm_graph,
    synth_graph,
)
from .models import (
    SemiGcnModel,
    SpectralModel,
    accuracy,
    init_semi_model,
    init_spectral_model,
    predict,
    train_model,
)
from .attack import (
    AttackResult,
    AttackSpec,
    degree_distribution_report,
    extract_victim_graph,
    run_attack,
)
from .defense import (
    AngcnConfig,
    AngcnResult,
    infer_anonymous,
    load_angcn,
    sample_noise,
    save_angcn,
    staggered_spec,
    train_angcn,
)
from .signals import (
    NodeTrajectory,
    Spectrum,
    capture_trajectories,
    delete_node_experiment,
    dft,
    perturb_u_experiment,
    reconstruct,
)

__all__ = [
    "AngcnConfig",
    "AngcnResult",
    "AttackResult",
    "AttackSpec",
    "Graph",
    "NodeTrajectory",
    "SemiGcnModel",
    "SpectralBasis",
    "SpectralModel",
    "Spectrum",
    "accuracy",
    "build_adjacency",
    "build_laplacian",
    "capture_trajectories",
    "degree_distribution_report",
    "delete_node_experiment",
    "dft",
    "eigendecompose",
    "extract_victim_graph",
    "infer_anonymous",
    "init_semi_model",
    "init_spectral_model",
    "load_angcn",
    "load_cora",
    "load_graph",
    "perturb_u_experiment",
    "predict",
    "reconstruct",
    "run_attack",
    "sample_noise",
    "save_angcn",
    "save_graph",
    "sbm_graph",
    "staggered_spec",
    "synth_graph",
    "train_angcn",
    "train_model",
    "__version__",
]
