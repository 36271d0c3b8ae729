import os

import numpy as np
import pytest

from wganlab import _fallback
from wganlab._backend import kernels

compiled = pytest.importorskip("wganlab._kernels")


@pytest.mark.parametrize("n", [1, 2, 5, 40, 200])
def test_assignment_kernels_agree(n):
    g = np.random.default_rng(n)
    for cost in (g.random((n, n)), g.integers(0, 3, (n, n)).astype(float)):
        a = compiled.solve_assignment(np.ascontiguousarray(cost))
        b = _fallback.solve_assignment(np.ascontiguousarray(cost))
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])


@pytest.mark.skipif(os.environ.get("WGANLAB_PURE", "") not in ("", "0"), reason="fallback forced")
def test_backend_prefers_compiled():
    assert kernels is compiled
