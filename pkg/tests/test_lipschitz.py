import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wganlab import lipschitz as lip
from wganlab import nn
from wganlab.numerics import Rng, spectral_norm


def test_alpha_bar_examples():
    assert lip.alpha_bar(lip.ArchSignature((1, 1), 0.1)) == pytest.approx(0.1)
    ab = lip.alpha_bar(lip.ArchSignature((2, 3, 1), 0.5))
    oracle = spectral_norm(np.full((3, 2), 0.5)) * spectral_norm(np.full((1, 3), 0.5))
    assert ab == pytest.approx(1.060660, abs=1e-6)
    assert ab == pytest.approx(oracle, rel=1e-12)


@given(st.lists(st.integers(1, 6), min_size=2, max_size=5), st.floats(0.01, 2))
def test_alpha_bar_homogeneous(widths, c):
    L = len(widths) - 1
    a = lip.alpha_bar(lip.ArchSignature(widths, c))
    assert lip.alpha_bar(lip.ArchSignature(widths, 2 * c)) == pytest.approx(a * 2 ** L, rel=1e-12)


def test_construct_single_layer():
    arch = lip.ArchSignature((1, 1), 0.3)
    p, x, y = lip.construct_exhausting_params(arch, [-1.0])
    assert p.weights[0][0, 0] == -0.3
    assert lip.witness_ratio(p, x, y) == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize("widths,signs", [((2, 3, 1), (1, 1)), ((2, 3, 1), (1, -1)), ((3, 5, 4, 1), (-1, 1, -1))])
def test_construction_attains_alpha_bar(widths, signs):
    arch = lip.ArchSignature(widths, 0.5)
    p, x, y = lip.construct_exhausting_params(arch, signs)
    assert all(np.all(np.abs(a) <= 0.5) for a in p.arrays())
    assert lip.witness_ratio(p, x, y) == pytest.approx(lip.alpha_bar(arch), abs=1e-9)
    est = lip.empirical_lipschitz(p, -1, 1, 50, Rng(0), include=np.vstack([x, y]))
    assert est == pytest.approx(lip.alpha_bar(arch), abs=1e-9)


def test_construction_is_rigid():
    arch = lip.ArchSignature((3, 4, 2, 1), 0.5)
    p, x, y = lip.construct_exhausting_params(arch, [1, -1, 1])
    base = lip.witness_ratio(p, x, y)
    delta = 1e-3 * arch.c_max
    for li, w in enumerate(p.weights):
        for pos in np.ndindex(w.shape):
            ws = [a.copy() for a in p.weights]
            ws[li][pos] -= delta * np.sign(ws[li][pos])  # shrink toward zero, stays clipped
            q = nn.MlpParams(p.spec, ws, p.biases)
            assert lip.witness_ratio(q, x, y) < base


def test_linear_critic_estimate_exact():
    w = np.array([[0.3, -0.4]])
    p = nn.MlpParams(nn.MlpSpec((2, 1), 0.0), [w], [np.zeros(1)])
    assert lip.empirical_lipschitz(p, -1, 1, 30, Rng(1)) == pytest.approx(0.5, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(2, 3, 1), (2, 8, 8, 1), (3, 5, 4, 1)]), st.floats(0.01, 1.0), st.integers(0, 10**6))
def test_alpha_bar_upper_bounds_clipped_nets(widths, c, seed):
    arch = lip.ArchSignature(widths, c)
    net = lip.random_clipped_params(arch, Rng(seed))
    assert lip.empirical_lipschitz(net, -2, 2, 64, Rng(seed + 1)) <= lip.alpha_bar(arch) + 1e-9


def test_random_clipped_nets_strictly_below():
    r = Rng(77)
    for k in range(60):
        arch = lip.ArchSignature([(2, 3, 1), (2, 8, 8, 1), (3, 5, 4, 1)][k % 3], 0.1)
        net = lip.random_clipped_params(arch, r)
        assert lip.empirical_lipschitz(net, -1, 1, 64, r) < lip.alpha_bar(arch) - 1e-6


def test_estimate_monotone_in_samples():
    arch = lip.ArchSignature((2, 8, 8, 1), 0.2)
    net = lip.random_clipped_params(arch, Rng(3))
    ests = [lip.empirical_lipschitz(net, -1, 1, n, Rng(11)) for n in (2, 8, 32, 128)]
    assert all(a <= b for a, b in zip(ests, ests[1:]))
