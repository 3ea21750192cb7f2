import os

import numpy as np
import pytest

from edgeward.graphs import sbm_graph


def cora_paths():
    """Locate cora.content/cora.cites if the dataset is present.

    Checked locations: $CORA_DIR, then <repo>/data/cora. Returns None when
    the files are not available.
    """
    roots = []
    if os.environ.get("CORA_DIR"):
        roots.append(os.environ["CORA_DIR"])
    roots.append(os.path.join(os.path.dirname(os.path.dirname(__file__)), "data", "cora"))
    for root in roots:
        content = os.path.join(root, "cora.content")
        cites = os.path.join(root, "cora.cites")
        if os.path.exists(content) and os.path.exists(cites):
            return content, cites
    return None


requires_cora = pytest.mark.skipif(
    cora_paths() is None,
    reason="citation dataset not available: no network access in this sandbox and "
           "no package mirror carries it; place cora.content/cora.cites under "
           "$CORA_DIR or data/cora/ to run this criterion")


@pytest.fixture(scope="session")
def sbm_small():
    """Separable 2-block fixture shared by training tests."""
    return sbm_graph([10, 10], 0.9, 0.05, seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
