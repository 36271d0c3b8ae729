import io

import numpy as np
import pytest

from wganlab import nn
from wganlab.numerics import Rng, ShapeError, spectral_norm
from wganlab.verify import finite_difference_param_grads, points_away_from_kinks, rel_err


def linear_critic(w, b=0.0):
    w = np.asarray(w, dtype=np.float64)
    return nn.MlpParams(nn.MlpSpec((len(w), 1)), [w[None, :]], [np.array([b])])


def unit_chain(slope=0.2):
    spec = nn.MlpSpec((1, 1, 1), slope)
    return nn.MlpParams(spec, [np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])


def random_net(widths, seed, slope=0.2, bias_scale=0.1):
    r = Rng(seed)
    p = nn.init_params(nn.MlpSpec(widths, slope), r)
    return p.with_arrays(p.weights + [bias_scale * r.standard_normal(b.size) for b in p.biases])


def naive_forward(params, x):
    out = []
    for row in np.atleast_2d(x):
        a = list(row)
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            z = [sum(w[j, k] * a[k] for k in range(len(a))) + b[j] for j in range(len(b))]
            if i < len(params.weights) - 1:
                z = [v if v > 0 else params.spec.leaky_slope * v for v in z]
            a = z
        out.append(a)
    return np.array(out)


def test_init_bounds_and_determinism():
    spec = nn.MlpSpec((2, 4, 1))
    p = nn.init_params(spec, Rng(3))
    assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 6)
    assert np.abs(p.weights[1]).max() <= np.sqrt(6 / 5)
    assert all(np.all(b == 0) for b in p.biases)
    assert p == nn.init_params(spec, Rng(3))
    assert np.sqrt(6 / 3) == pytest.approx(1.414, abs=1e-3)


def test_init_mean():
    p = nn.init_params(nn.MlpSpec((100, 100)), Rng(8))
    assert abs(p.weights[0].mean()) < 0.02


def test_forward_examples():
    v, _ = nn.forward(linear_critic([2.0, -1.0], 0.5), [[1.0, 1.0]])
    assert v[0, 0] == 1.5
    v, _ = nn.forward(unit_chain(), [[-1.0]])
    assert v[0, 0] == pytest.approx(-0.2)


def test_forward_matches_naive_recurrence():
    p = random_net((3, 5, 4, 2), 1)
    x = np.random.default_rng(1).normal(size=(6, 3))
    assert np.allclose(nn.forward(p, x)[0], naive_forward(p, x), rtol=1e-12, atol=1e-12)


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        nn.forward(linear_critic([1.0, 1.0]), np.ones((3, 3)))


def test_input_gradient_examples():
    p = linear_critic([0.3, -0.7])
    _, tr = nn.forward(p, np.random.default_rng(0).normal(size=(5, 2)))
    assert np.allclose(nn.input_gradient(p, tr), [[0.3, -0.7]] * 5)
    _, tr = nn.forward(unit_chain(), [[-1.0]])
    assert nn.input_gradient(unit_chain(), tr)[0, 0] == pytest.approx(0.2)


def test_input_gradient_requires_scalar_output():
    p = random_net((2, 3, 2), 0)
    _, tr = nn.forward(p, np.ones((1, 2)))
    with pytest.raises(ShapeError):
        nn.input_gradient(p, tr)


def test_input_gradient_finite_differences():
    for seed in range(5):
        p = random_net((2, 16, 16, 1), seed)
        x = points_away_from_kinks(p, 8, Rng(seed + 100))
        _, tr = nn.forward(p, x)
        g = nn.input_gradient(p, tr)
        f = lambda z: nn.forward(p, z)[0][:, 0]
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1e-6
            assert rel_err(g[:, k], (f(x + e) - f(x - e)) / 2e-6).max() < 1e-5


def test_linear_net_input_gradient_is_weight_product():
    p = random_net((3, 4, 5, 1), 2, slope=1.0)
    _, tr = nn.forward(p, np.random.default_rng(2).normal(size=(4, 3)))
    prod = p.weights[2] @ p.weights[1] @ p.weights[0]
    assert np.allclose(nn.input_gradient(p, tr), np.repeat(prod, 4, axis=0), rtol=1e-13, atol=1e-13)


def test_input_gradient_below_spectral_product():
    for seed in range(10):
        p = random_net((2, 8, 8, 1), seed)
        _, tr = nn.forward(p, np.random.default_rng(seed).normal(size=(64, 2)) * 2)
        bound = np.prod([spectral_norm(w) for w in p.weights])
        assert np.linalg.norm(nn.input_gradient(p, tr), axis=1).max() <= bound * (1 + 1e-9)


def test_loss_grads_zero_coeffs():
    p = random_net((2, 4, 1), 0)
    _, tr = nn.forward(p, np.ones((3, 2)))
    g = nn.loss_param_grads(p, tr, np.zeros(3))
    assert all(np.all(a == 0) for a in g.arrays())


def test_loss_grads_linear_critic_mean_input():
    x = np.random.default_rng(4).normal(size=(10, 2))
    p = linear_critic([1.0, 2.0])
    _, tr = nn.forward(p, x)
    g = nn.loss_param_grads(p, tr, np.full(10, 0.1))
    assert np.allclose(g.weights[0][0], x.mean(axis=0))
    assert g.biases[0][0] == pytest.approx(1.0)


def test_loss_grads_finite_differences():
    for seed in range(4):
        p = random_net((2, 6, 6, 1), seed)
        x = points_away_from_kinks(p, 5, Rng(seed))
        coeffs = np.random.default_rng(seed).normal(size=5)
        _, tr = nn.forward(p, x)
        g = nn.loss_param_grads(p, tr, coeffs)
        fd = finite_difference_param_grads(p, lambda q: float(coeffs @ nn.forward(q, x)[0][:, 0]))
        for a, b in zip(g.arrays(), fd):
            assert rel_err(a, b).max() < 1e-4


@pytest.mark.parametrize("kind", ["gp", "lp"])
def test_penalty_grads_finite_differences(kind):
    for seed in range(4):
        p = random_net((2, 6, 6, 1), seed)
        p = p.with_arrays([2.5 * w for w in p.weights] + p.biases)
        x = points_away_from_kinks(p, 6, Rng(seed))

        def objective(q):
            _, tr = nn.forward(q, x)
            n = np.linalg.norm(nn.input_gradient(q, tr), axis=1)
            return 3.0 * float(nn.penalty_values(n, kind).mean())

        _, tr = nn.forward(p, x)
        value, g, norms = nn.penalty_param_grads(p, tr, kind, 3.0)
        assert value == pytest.approx(objective(p), rel=1e-12)
        fd = finite_difference_param_grads(p, objective)
        for a, b in zip(g.arrays(), fd):
            assert rel_err(a, b).max() < 1e-4


def test_lp_penalty_inactive_when_norm_below_one():
    p = linear_critic([0.6, 0.0])
    _, tr = nn.forward(p, np.ones((4, 2)))
    value, g, _ = nn.penalty_param_grads(p, tr, "lp", 10.0)
    assert value == 0.0
    assert all(np.all(a == 0) for a in g.arrays())


def test_lp_linear_critic_analytic():
    w = np.array([1.2, 1.6])  # ||w|| = 2
    lam = 7.0
    p = linear_critic(w)
    _, tr = nn.forward(p, np.random.default_rng(0).normal(size=(9, 2)))
    value, g, _ = nn.penalty_param_grads(p, tr, "lp", lam)
    assert value == pytest.approx(lam * 1.0)
    assert np.allclose(g.weights[0][0], lam * w)


def test_gp_zero_at_unit_norm():
    p = linear_critic([0.6, 0.8])
    _, tr = nn.forward(p, np.ones((3, 2)))
    value, _, norms = nn.penalty_param_grads(p, tr, "gp", 10.0)
    assert value == pytest.approx(0.0, abs=1e-28)
    assert np.allclose(norms, 1.0)


def test_zero_gradient_guard():
    p = linear_critic([0.0, 0.0])
    _, tr = nn.forward(p, np.ones((2, 2)))
    value, g, _ = nn.penalty_param_grads(p, tr, "gp", 1.0)
    assert value == 1.0
    assert all(np.all(np.isfinite(a)) and np.all(a == 0) for a in g.arrays())


def test_determinism_bitwise():
    p = random_net((2, 16, 1), 3)
    x = np.random.default_rng(3).normal(size=(32, 2))
    a = nn.penalty_param_grads(p, nn.forward(p, x)[1], "lp", 10.0)
    b = nn.penalty_param_grads(p, nn.forward(p, x)[1], "lp", 10.0)
    assert a[0] == b[0] and a[1] == b[1]


def test_checkpoint_roundtrip_and_layout(tmp_path):
    p = random_net((2, 3, 1), 5, slope=0.1)
    path = tmp_path / "net.ckpt"
    nn.save_params(p, path)
    raw = path.read_bytes()
    assert raw[:4] == b"WGLP"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 3
    assert np.frombuffer(raw[24:32], "<f8")[0] == 0.1
    first_w = np.frombuffer(raw[32:32 + 6 * 8], "<f8")
    assert np.array_equal(first_w, p.weights[0].ravel())
    assert len(raw) == 32 + 8 * (6 + 3 + 3 + 1)
    assert nn.load_params(path) == p
    buf = io.BytesIO()
    nn.save_params(p, buf)
    assert buf.getvalue() == raw


def test_checkpoint_rejects_bad_magic():
    with pytest.raises(ValueError, match="WGLP"):
        nn.params_from_bytes(b"XXXX" + bytes(40))
