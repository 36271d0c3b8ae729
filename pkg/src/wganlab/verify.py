"""Oracle suites behind ``wganlab verify``.

Each suite returns a list of ``Check`` records; a suite passes when every
check does. The oracles here (finite differences, permutation brute force,
quadrature, closed forms) never call the code path they check.
"""
import math
import time
from dataclasses import dataclass

import numpy as np

from wganlab import lipschitz as lip
from wganlab import nn, transport
from wganlab.numerics import Rng
from wganlab.regularizers import RegularizerSpec
from wganlab.training import critic_gradients

SUITES = ("gradcheck", "hungarian", "duality", "gaussian", "clipping")


@dataclass
class Check:
    name: str
    value: float
    expected: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: measured {self.value:.9g}, expected {self.expected:.9g}, tol {self.tol:g}{extra}"


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _min_abs_preact(params, x):
    _, trace = nn.forward(params, x)
    hidden = trace.pre[:-1]
    return min(float(np.abs(z).min()) for z in hidden) if hidden else math.inf


def points_away_from_kinks(params, n, rng, margin=1e-3, scale=1.0, tries=1000):
    """``n`` points in [-scale, scale]^d whose hidden pre-activations all
    stay at least ``margin`` from zero."""
    d = params.spec.widths[0]
    out = []
    for _ in range(tries):
        p = scale * (2.0 * rng.uniform(d) - 1.0)
        if _min_abs_preact(params, p[None, :]) > margin:
            out.append(p)
            if len(out) == n:
                return np.array(out)
    raise RuntimeError("could not find points away from activation kinks")


def _critic_objective(params, real, fake, x_hat, spec):
    """Direct evaluation of mean f(fake) - mean f(real) + lam * penalty, with
    the input gradient from central differences in x."""
    f = lambda x: nn.forward(params, x)[0][:, 0]
    value = float(f(fake).mean() - f(real).mean())
    if spec.kind in ("gp", "lp"):
        h = 1e-6
        grads = np.zeros_like(x_hat)
        for k in range(x_hat.shape[1]):
            e = np.zeros(x_hat.shape[1])
            e[k] = h
            grads[:, k] = (f(x_hat + e) - f(x_hat - e)) / (2 * h)
        norms = np.sqrt((grads ** 2).sum(axis=1))
        pen = (norms - 1.0) ** 2 if spec.kind == "gp" else np.maximum(norms - 1.0, 0.0) ** 2
        value += spec.lam * float(pen.mean())
    return value


def _exact_objective(params, real, fake, x_hat, spec):
    """Same objective with the analytic input gradient; used for parameter
    finite differences so that only the parameter derivative is tested."""
    f = lambda x: nn.forward(params, x)
    v_fake, _ = f(fake)
    v_real, _ = f(real)
    value = float(v_fake.mean() - v_real.mean())
    if spec.kind in ("gp", "lp"):
        _, tr = f(x_hat)
        g = nn.input_gradient(params, tr)
        norms = np.sqrt((g ** 2).sum(axis=1))
        pen = (norms - 1.0) ** 2 if spec.kind == "gp" else np.maximum(norms - 1.0, 0.0) ** 2
        value += spec.lam * float(pen.mean())
    return value


def finite_difference_param_grads(params, objective):
    arrays = [a.copy() for a in params.arrays()]
    out = []
    for idx, a in enumerate(arrays):
        g = np.zeros_like(a)
        for pos in np.ndindex(a.shape):
            theta = a[pos]
            h = 1e-5 * max(1.0, abs(theta))
            a[pos] = theta + h
            up = objective(params.with_arrays(arrays))
            a[pos] = theta - h
            down = objective(params.with_arrays(arrays))
            a[pos] = theta
            g[pos] = (up - down) / (2 * h)
        out.append(g)
    return out


def suite_gradcheck(n_nets=20, widths=(2, 16, 16, 16, 1), batch=4, seed=7):
    rng = Rng(seed).derive("gradcheck")
    spec = nn.MlpSpec(widths, 0.2)
    worst_param = 0.0
    worst_input = 0.0
    start = time.perf_counter()
    for net in range(n_nets):
        params = nn.init_params(spec, rng)
        # larger weights push gradient norms past 1 so both penalty branches are live
        params = params.with_arrays([a * (1.0 + 2.0 * (net % 2)) for a in params.arrays()[:spec.n_layers]]
                                    + [0.1 * rng.standard_normal(b.size) for b in params.biases])
        real = points_away_from_kinks(params, batch, rng)
        fake = points_away_from_kinks(params, batch, rng)
        x_hat = points_away_from_kinks(params, batch, rng)
        for kind in ("lp", "gp"):
            rspec = RegularizerSpec(kind=kind, lam=10.0)
            _, _, grads, _ = critic_gradients(params, real, fake, x_hat, rspec)
            fd = finite_difference_param_grads(params, lambda p: _exact_objective(p, real, fake, x_hat, rspec))
            for a, b in zip(grads.arrays(), fd):
                worst_param = max(worst_param, float(rel_err(a, b).max(initial=0.0)))
        _, trace = nn.forward(params, x_hat)
        g = nn.input_gradient(params, trace)
        h = 1e-6
        f = lambda x: nn.forward(params, x)[0][:, 0]
        for k in range(widths[0]):
            e = np.zeros(widths[0])
            e[k] = h
            fd_k = (f(x_hat + e) - f(x_hat - e)) / (2 * h)
            worst_input = max(worst_input, float(rel_err(g[:, k], fd_k).max()))
    elapsed = time.perf_counter() - start
    return [
        Check("parameter gradients vs finite differences (max rel err)", worst_param, 0.0, 1e-4,
              worst_param <= 1e-4, f"{n_nets} critics {list(widths)}, LP and GP, lambda=10"),
        Check("input gradients vs finite differences (max rel err)", worst_input, 0.0, 1e-5,
              worst_input <= 1e-5),
        Check("gradcheck runtime [s]", elapsed, 30.0, 0.0, elapsed < 30.0),
    ]


def suite_hungarian(n_instances=500, seed=11, big=500):
    rng = Rng(seed).derive("hungarian")
    worst = 0.0
    matches = 0
    for k in range(n_instances):
        n = 2 + k % 6
        cost = rng.uniform(n * n).reshape(n, n) * 10.0
        _, total = transport.hungarian(cost)
        ref = transport.brute_force_assignment(cost)
        err = abs(total - ref)
        worst = max(worst, err)
        matches += err <= 1e-9
    a = rng.uniform(2 * big).reshape(big, 2)
    b = rng.uniform(2 * big).reshape(big, 2)
    cost = transport.pairwise_distances(a, b)
    start = time.perf_counter()
    perm, _ = transport.hungarian(cost)
    elapsed = time.perf_counter() - start
    is_perm = sorted(perm.tolist()) == list(range(big))
    return [
        Check(f"hungarian vs brute force ({matches}/{n_instances} match, max abs err)", worst, 0.0, 1e-9,
              matches == n_instances),
        Check(f"{big}x{big} Euclidean solve time [s]", elapsed, 1.0, 0.0, elapsed < 1.0 and is_perm),
    ]


def bump_configuration():
    """Generated {0, 0} with f = 1 against real {-1, +1} with f = 0
    (critic 1 - |x|), each generated point coupled to one real point."""
    gen = np.array([[0.0], [0.0]])
    real = np.array([[-1.0], [1.0]])
    return gen, np.array([1.0, 1.0]), real, np.array([0.0, 0.0]), \
        transport.Coupling([(0, 0, 0.5), (1, 1, 0.5)])


def unit_square_configuration(a):
    """Higher-valued side {(1,0): 1, (1,1): a+1}, lower side {(0,0): 0, (0,1): a},
    horizontal coupling."""
    hi = np.array([[1.0, 0.0], [1.0, 1.0]])
    lo = np.array([[0.0, 0.0], [0.0, 1.0]])
    return hi, np.array([1.0, a + 1.0]), lo, np.array([0.0, a]), \
        transport.Coupling([(0, 0, 0.5), (1, 1, 0.5)])


def seven_point_configuration():
    """Seven generated points, each coupled to a real point one unit away."""
    real = np.arange(7.0)[:, None] * 3.0
    return real, real + 1.0


def suite_duality():
    checks = []
    r = transport.duality_report(*bump_configuration())
    checks.append(Check("bump configuration |gap|", abs(r.gap), 0.0, 1e-9,
                        abs(r.gap) < 1e-9 and r.lipschitz_feasible and r.exhausted_pairs
                        and abs(r.dual - 1.0) < 1e-12,
                        f"primal {r.primal}, dual {r.dual}, feasible {r.lipschitz_feasible}, "
                        f"exhausted {r.exhausted_pairs}"))
    for a in (-0.41, 0.0, 0.41):
        cfg = unit_square_configuration(a)
        r = transport.duality_report(*cfg)
        emd = transport.emd_empirical(cfg[0], cfg[2])
        checks.append(Check(f"unit square a={a} |gap|", abs(r.gap), 0.0, 1e-9,
                            abs(r.gap) < 1e-9 and r.lipschitz_feasible and r.exhausted_pairs
                            and abs(emd - r.primal) < 1e-12,
                            f"feasible {r.lipschitz_feasible}, exhausted {r.exhausted_pairs}, "
                            f"optimal assignment cost {emd}"))
    r = transport.duality_report(*unit_square_configuration(0.5))
    checks.append(Check("unit square a=0.5 infeasible", float(r.lipschitz_feasible), 0.0, 0.0,
                        not r.lipschitz_feasible, "a+1 > sqrt(2) breaks the diagonal constraint"))
    real, gen = seven_point_configuration()
    emd = transport.emd_empirical(real, gen)
    checks.append(Check("seven unit shifts EMD", emd, 1.0, 1e-12, abs(emd - 1.0) < 1e-12))
    return checks


def gaussian_quantities(n_nodes=200_001, lo=-10.0, hi=10.0):
    grid = np.linspace(lo, hi, n_nodes)
    p_mu = transport.normal_pdf(grid)
    p_nu = 0.5 * transport.normal_pdf(grid, -1.0) + 0.5 * transport.normal_pdf(grid, 1.0)
    w1 = transport.w1_1d_cdf(grid, p_mu, p_nu)
    dual = transport.trapezoid(grid, np.abs(grid) * (p_nu - p_mu))
    return w1, dual, transport.gaussian_mixture_w1_closed_form()


def suite_gaussian():
    start = time.perf_counter()
    w1, dual, exact = gaussian_quantities()
    elapsed = time.perf_counter() - start
    return [
        Check("W1 by CDF integral", w1, 0.368745, 1e-4, abs(w1 - 0.368745) < 1e-4),
        Check("critic -|x| dual value by quadrature", dual, 0.368745, 1e-4, abs(dual - 0.368745) < 1e-4),
        Check("CDF integral vs quadrature", abs(w1 - dual), 0.0, 1e-4, abs(w1 - dual) < 1e-4),
        Check("closed form", exact, 0.368745, 1e-5, abs(exact - 0.368745) < 1e-5),
        Check("gaussian runtime [s]", elapsed, 5.0, 0.0, elapsed < 5.0),
    ]


CLIP_ARCHS = ((2, 3, 1), (2, 8, 8, 1), (3, 5, 4, 1))


def suite_clipping(n_random=200, seed=5):
    start = time.perf_counter()
    arch = lip.ArchSignature((2, 3, 1), 0.5)
    ab = lip.alpha_bar(arch)
    # independent route: product of spectral norms of the extremal matrices
    via_svd = 0.5 * np.linalg.svd(np.ones((3, 2)), compute_uv=False)[0] * \
        0.5 * np.linalg.svd(np.ones((1, 3)), compute_uv=False)[0]
    params, x, y = lip.construct_exhausting_params(arch, [1.0, 1.0])
    ratio = lip.witness_ratio(params, x, y)
    checks = [
        Check("alpha_bar([2,3,1], 0.5)", ab, 1.060660, 1e-6, abs(ab - 1.060660) < 1e-6 and abs(ab - via_svd) < 1e-12),
        Check("witness ratio of constructed network", ratio, ab, 1e-9, abs(ratio - ab) < 1e-9),
    ]
    rng = Rng(seed).derive("clipping")
    worst_gap = math.inf
    worst_name = ""
    for k in range(n_random):
        widths = CLIP_ARCHS[k % len(CLIP_ARCHS)]
        a = lip.ArchSignature(widths, 0.1)
        net = lip.random_clipped_params(a, rng)
        est = lip.empirical_lipschitz(net, -1.0, 1.0, 64, rng)
        gap = lip.alpha_bar(a) - est
        if gap < worst_gap:
            worst_gap, worst_name = gap, str(list(widths))
    checks.append(Check(f"random clipped nets: min(alpha_bar - estimate) over {n_random}", worst_gap,
                        1e-6, 0.0, worst_gap > 1e-6, f"tightest architecture {worst_name}"))
    elapsed = time.perf_counter() - start
    checks.append(Check("clipping runtime [s]", elapsed, 30.0, 0.0, elapsed < 30.0))
    return checks


def run_suite(name):
    return {"gradcheck": suite_gradcheck, "hungarian": suite_hungarian, "duality": suite_duality,
            "gaussian": suite_gaussian, "clipping": suite_clipping}[name]()
