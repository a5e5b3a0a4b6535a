import os
import subprocess
import sys

import numpy as np
import pytest

from kstm import kernels

needs_ext = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")


def _random_weights(rng, n, density=0.4):
    w = np.triu(rng.integers(1, 4, (n, n)) * (rng.uniform(size=(n, n)) < density), 1).astype(float)
    return w + w.T


@needs_ext
@pytest.mark.parametrize("seed", range(10))
def test_cooccurrence_backends_identical(seed):
    rng = np.random.default_rng(seed)
    n_nodes = int(rng.integers(1, 30))
    ids = rng.integers(0, n_nodes, size=int(rng.integers(1, 80)))
    for window in (2, 3, 5):
        a = kernels.cooccurrence_matrix(ids, n_nodes, window, backend="python")
        b = kernels.cooccurrence_matrix(ids, n_nodes, window, backend="cython")
        assert a.tobytes() == b.tobytes()


@needs_ext
@pytest.mark.parametrize("seed", range(10))
def test_textrank_backends_identical(seed):
    rng = np.random.default_rng(seed)
    w = _random_weights(rng, int(rng.integers(1, 40)))
    sa, ia, da = kernels.textrank_iterate(w, 0.85, 1e-10, 500, backend="python")
    sb, ib, db = kernels.textrank_iterate(w, 0.85, 1e-10, 500, backend="cython")
    assert sa.tobytes() == sb.tobytes()
    assert (ia, da) == (ib, db)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.textrank_iterate(np.zeros((1, 1)), 0.85, 1e-6, 10, backend="fortran")


def test_env_var_forces_fallback():
    env = dict(os.environ, KSTM_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import kstm; print(kstm.KERNEL_BACKEND)"], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "python"


def test_extension_built():
    # the editable install compiles the extension; a silent fallback here would hide a build break
    if os.environ.get("KSTM_NO_EXT") or os.environ.get("KSTM_PURE_PYTHON"):
        pytest.skip("extension disabled by environment")
    assert kernels.BACKEND == "cython"
