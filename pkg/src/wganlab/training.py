"""Alternating WGAN optimization with a pluggable Lipschitz regularizer."""
import dataclasses
import io
import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from wganlab import nn, regularizers as reg
from wganlab.data import DatasetKind, LatentSpec, sample_latent, sample_real
from wganlab.numerics import Rng
from wganlab.optim import NonFiniteGradient, RmsPropState, rmsprop_step
from wganlab.transport import emd_empirical

log = logging.getLogger(__name__)

STREAMS = ("init-critic", "init-generator", "data", "latent", "penalty", "emd")
CKPT_MAGIC = b"WGCK"
CKPT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "swissroll"
    critic_widths: tuple = (2, 512, 512, 512, 1)
    generator_widths: tuple = (2, 512, 512, 512, 2)
    latent_dim: int = 2
    leaky_slope: float = 0.2
    regularizer: reg.RegularizerSpec = reg.RegularizerSpec()
    perturbation: reg.PerturbationScheme = reg.PerturbationScheme()
    batch: int = 256
    lr: float = 5e-5
    rho: float = 0.9
    eps: float = 1e-8
    n_critic: int = 10
    warmup_gen_iters: int = 25
    warmup_n_critic: int = 100
    iterations: int = 1000
    emd_every: int = 10
    emd_sample_size: int = 500
    levelset_iters: tuple = (10, 50, 100, 1000)
    levelset_resolution: int = 128
    record_wall_ms: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "critic_widths", tuple(self.critic_widths))
        object.__setattr__(self, "generator_widths", tuple(self.generator_widths))
        object.__setattr__(self, "levelset_iters", tuple(int(i) for i in self.levelset_iters))
        DatasetKind(self.dataset)
        LatentSpec(self.latent_dim)
        for name in ("batch", "n_critic", "warmup_gen_iters", "warmup_n_critic", "iterations",
                     "emd_every", "emd_sample_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.levelset_resolution < 2:
            raise ValueError("levelset_resolution must be >= 2")
        if self.critic_widths[0] != 2 or self.critic_widths[-1] != 1:
            raise ValueError("critic must map 2-D points to a scalar")
        if self.generator_widths[0] != self.latent_dim or self.generator_widths[-1] != 2:
            raise ValueError("generator must map the latent space to 2-D points")
        if self.lr <= 0 or not 0 <= self.rho < 1 or self.eps <= 0:
            raise ValueError("invalid RMSprop hyperparameters")

    def critic_steps_for(self, iteration):
        return self.warmup_n_critic if iteration <= self.warmup_gen_iters else self.n_critic

    def total_critic_steps(self, iterations=None):
        t = self.iterations if iterations is None else iterations
        w = min(t, self.warmup_gen_iters)
        return w * self.warmup_n_critic + (t - w) * self.n_critic

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["critic_widths"] = list(self.critic_widths)
        d["generator_widths"] = list(self.generator_widths)
        d["levelset_iters"] = list(self.levelset_iters)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "regularizer" in d and isinstance(d["regularizer"], dict):
            d["regularizer"] = reg.RegularizerSpec(**d["regularizer"])
        if "perturbation" in d and isinstance(d["perturbation"], dict):
            d["perturbation"] = reg.PerturbationScheme(**d["perturbation"])
        return cls(**d)


@dataclass
class IterRecord:
    iter: int
    d_loss: float
    penalty: float
    grad_norm_mean: float
    grad_norm_max: float
    emd: float = None
    wall_ms: float = None


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    failed: bool = False
    reason: str = ""

    COLUMNS = ("iter", "d_loss", "penalty", "grad_norm_mean", "grad_norm_max", "emd", "wall_ms")

    def column(self, name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records])

    def to_csv(self, with_wall=False):
        out = io.StringIO()
        out.write(",".join(self.COLUMNS) + "\n")
        for r in self.records:
            cells = [str(r.iter)] + [repr(float(getattr(r, c))) for c in self.COLUMNS[1:5]]
            cells.append("" if r.emd is None else repr(float(r.emd)))
            cells.append(repr(float(r.wall_ms)) if with_wall and r.wall_ms is not None else "")
            out.write(",".join(cells) + "\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text):
        lines = text.strip().splitlines()
        if tuple(lines[0].split(",")) != cls.COLUMNS:
            raise ValueError(f"unexpected runlog header {lines[0]!r}")
        log_ = cls()
        for line in lines[1:]:
            c = line.split(",")
            log_.records.append(IterRecord(int(c[0]), float(c[1]), float(c[2]), float(c[3]), float(c[4]),
                                           float(c[5]) if c[5] else None, float(c[6]) if c[6] else None))
        return log_


@dataclass
class TrainState:
    critic: nn.MlpParams
    generator: nn.MlpParams
    critic_opt: RmsPropState
    generator_opt: RmsPropState
    iteration: int
    rngs: dict

    def copy(self):
        rngs = {}
        for k, r in self.rngs.items():
            c = Rng(0)
            c.set_state(*r.get_state())
            rngs[k] = c
        return TrainState(self.critic.copy(), self.generator.copy(), self.critic_opt.copy(),
                          self.generator_opt.copy(), self.iteration, rngs)


@dataclass
class CriticStats:
    d_loss: float
    penalty: float
    grad_norm_mean: float
    grad_norm_max: float


class RunAborted(RuntimeError):
    pass


def init_state(config):
    root = Rng(config.seed)
    rngs = {name: root.derive(name) for name in STREAMS}
    critic = nn.init_params(nn.MlpSpec(config.critic_widths, config.leaky_slope), rngs["init-critic"])
    gen = nn.init_params(nn.MlpSpec(config.generator_widths, config.leaky_slope), rngs["init-generator"])
    return TrainState(
        critic, gen,
        RmsPropState.for_params(critic, config.lr, config.rho, config.eps),
        RmsPropState.for_params(gen, config.lr, config.rho, config.eps),
        0, rngs)


def _add(a, b):
    return a.with_arrays([x + y for x, y in zip(a.arrays(), b.arrays())])


def critic_gradients(critic, real, fake, x_hat, spec):
    """Value pieces and parameter gradient of the critic loss
    ``mean f(fake) - mean f(real) + lam * penalty``."""
    n = real.shape[0]
    if fake.shape != real.shape:
        raise ValueError(f"batch shapes differ: {real.shape} vs {fake.shape}")
    both = np.vstack([real, fake])
    vals, trace = nn.forward(critic, both)
    vals = vals[:, 0]
    d_loss = float(vals[n:].mean() - vals[:n].mean())
    coeffs = np.concatenate([np.full(n, -1.0 / n), np.full(n, 1.0 / n)])
    penalty = 0.0
    if spec.kind in ("gp", "lp"):
        _, ptrace = nn.forward(critic, x_hat)
        penalty, pgrads, norms = nn.penalty_param_grads(critic, ptrace, spec.kind, spec.lam)
        grads = _add(nn.loss_param_grads(critic, trace, coeffs), pgrads)
        return d_loss, penalty, grads, norms
    if spec.kind == "ratio":
        value, d_fx, d_fy, _ = reg.ratio_penalty_batch(vals[:n], vals[n:], real, fake, spec.p, spec.one_sided)
        penalty = spec.lam * value
        coeffs = coeffs + spec.lam * np.concatenate([d_fx, d_fy])
    grads = nn.loss_param_grads(critic, trace, coeffs)
    _, ptrace = nn.forward(critic, x_hat)
    norms = np.sqrt((nn.input_gradient(critic, ptrace) ** 2).sum(axis=1))
    return d_loss, penalty, grads, norms


def critic_update(state, real, fake, config, x_hat=None):
    """One RMSprop step on the critic. Mutates ``state``; returns CriticStats.

    ``x_hat`` defaults to points drawn from the configured perturbation scheme.
    """
    spec = config.regularizer
    if x_hat is None:
        x_hat = reg.sample_penalty_points(real, fake, config.perturbation, state.rngs["penalty"])
    d_loss, penalty, grads, norms = critic_gradients(state.critic, real, fake, x_hat, spec)
    if not (math.isfinite(d_loss) and math.isfinite(penalty)):
        raise RunAborted(f"non-finite critic loss (d={d_loss}, penalty={penalty})")
    try:
        critic, opt = rmsprop_step(state.critic, grads, state.critic_opt)
    except NonFiniteGradient as exc:
        raise RunAborted(f"critic step rejected: {exc}") from None
    if spec.kind == "weight-clip":
        critic = reg.clip_weights(critic, spec.c_max)
    state.critic, state.critic_opt = critic, opt
    return CriticStats(d_loss, penalty, float(norms.mean()), float(norms.max()))


def generator_gradients(generator, critic, z):
    """Loss ``-mean f(G(z))`` and its generator gradient; the critic is frozen
    and its input gradient carries the signal back into G."""
    fake, gtrace = nn.forward(generator, z)
    vals, ctrace = nn.forward(critic, fake)
    loss = -float(vals.mean())
    dy = nn.input_gradient(critic, ctrace) * (-1.0 / len(z))
    grads, _ = nn.backprop(generator, gtrace, dy)
    return loss, grads


def generator_update(state, z):
    loss, grads = generator_gradients(state.generator, state.critic, z)
    if not math.isfinite(loss):
        raise RunAborted(f"non-finite generator loss {loss}")
    try:
        state.generator, state.generator_opt = rmsprop_step(state.generator, grads, state.generator_opt)
    except NonFiniteGradient as exc:
        raise RunAborted(f"generator step rejected: {exc}") from None
    return loss


def generate(generator, z):
    return nn.forward(generator, z)[0]


def levelset_bounds(dataset, margin=0.25):
    x0, x1, y0, y1 = DatasetKind(dataset).bounds()
    mx, my = margin * (x1 - x0), margin * (y1 - y0)
    return (x0 - mx, x1 + mx, y0 - my, y1 + my)


def levelset_grid(critic, bounds, resolution=128):
    """Critic values on a regular ``resolution x resolution`` grid.

    Entry ``[r, c]`` is f at (xs[c], ys[r]) with xs, ys ascending linspaces
    over the bounds, so y grows with the row index (downward in an image).
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    xx, yy = np.meshgrid(xs, ys)
    vals, _ = nn.forward(critic, np.stack([xx.ravel(), yy.ravel()], axis=1))
    return vals[:, 0].reshape(resolution, resolution)


@dataclass
class RunResult:
    log: RunLog
    state: TrainState
    levelsets: dict


def train_run(config, resume=None, on_levelset=None):
    """Run the full schedule (or continue ``resume`` up to ``config.iterations``).

    The first ``warmup_gen_iters`` generator steps are each preceded by
    ``warmup_n_critic`` critic steps, later ones by ``n_critic``. An abort
    leaves a partial log marked failed.
    """
    state = init_state(config) if resume is None else resume.copy()
    run_log = RunLog()
    levelsets = {}
    rngs = state.rngs
    latent = LatentSpec(config.latent_dim)
    dataset = DatasetKind(config.dataset)
    bounds = levelset_bounds(config.dataset)
    n = config.batch
    try:
        for t in range(state.iteration + 1, config.iterations + 1):
            start = time.perf_counter()
            stats = None
            for _ in range(config.critic_steps_for(t)):
                real = sample_real(dataset, n, rngs["data"])
                fake = generate(state.generator, sample_latent(latent, n, rngs["latent"]))
                stats = critic_update(state, real, fake, config)
            generator_update(state, sample_latent(latent, n, rngs["latent"]))
            state.iteration = t
            emd = None
            if t % config.emd_every == 0:
                m = config.emd_sample_size
                real = sample_real(dataset, m, rngs["emd"])
                fake = generate(state.generator, sample_latent(latent, m, rngs["emd"]))
                emd = emd_empirical(real, fake)
            if t in config.levelset_iters:
                grid = levelset_grid(state.critic, bounds, config.levelset_resolution)
                levelsets[t] = grid
                if on_levelset is not None:
                    on_levelset(t, grid, bounds)
            wall = (time.perf_counter() - start) * 1000.0
            run_log.records.append(IterRecord(t, stats.d_loss, stats.penalty, stats.grad_norm_mean,
                                              stats.grad_norm_max, emd, wall))
    except RunAborted as exc:
        log.warning("run aborted at iteration %d: %s", state.iteration + 1, exc)
        run_log.failed = True
        run_log.reason = str(exc)
    return RunResult(run_log, state, levelsets)


def _rms_bytes(opt):
    parts = [struct.pack("<3d", opt.lr, opt.rho, opt.eps)]
    parts += [np.ascontiguousarray(v, dtype="<f8").tobytes() for v in opt.v]
    return b"".join(parts)


def checkpoint_bytes(state):
    """Serialize a TrainState: header, RNG streams, both networks (WGLP
    blobs), then both RMSprop states, all little-endian."""
    parts = [CKPT_MAGIC, struct.pack("<IQI", CKPT_VERSION, state.iteration, len(state.rngs))]
    for name in sorted(state.rngs):
        seed, words = state.rngs[name].get_state()
        raw = name.encode()
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<5Q", seed, *(int(w) for w in words)))
    for params in (state.critic, state.generator):
        blob = nn.params_to_bytes(params)
        parts.append(struct.pack("<Q", len(blob)) + blob)
    parts.append(_rms_bytes(state.critic_opt))
    parts.append(_rms_bytes(state.generator_opt))
    return b"".join(parts)


def _read_rms(blob, pos, params):
    lr, rho, eps = struct.unpack_from("<3d", blob, pos)
    pos += 24
    v = []
    for a in params.arrays():
        v.append(np.frombuffer(blob, dtype="<f8", count=a.size, offset=pos).reshape(a.shape).astype(np.float64))
        pos += 8 * a.size
    return RmsPropState(v, lr, rho, eps), pos


def state_from_bytes(blob):
    if blob[:4] != CKPT_MAGIC:
        raise ValueError("not a training checkpoint")
    version, iteration, n_rngs = struct.unpack_from("<IQI", blob, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 4 + 16
    rngs = {}
    for _ in range(n_rngs):
        (ln,) = struct.unpack_from("<I", blob, pos)
        name = blob[pos + 4:pos + 4 + ln].decode()
        pos += 4 + ln
        seed, *words = struct.unpack_from("<5Q", blob, pos)
        pos += 40
        r = Rng(0)
        r.set_state(seed, words)
        rngs[name] = r
    nets = []
    for _ in range(2):
        (ln,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        params, _ = nn.params_from_bytes(blob[pos:pos + ln])
        nets.append(params)
        pos += ln
    critic_opt, pos = _read_rms(blob, pos, nets[0])
    gen_opt, pos = _read_rms(blob, pos, nets[1])
    return TrainState(nets[0], nets[1], critic_opt, gen_opt, iteration, rngs)


def save_checkpoint(state, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(state))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return state_from_bytes(fh.read())


def write_pgm(path, grid):
    """8-bit binary PGM (P5), min-max normalized; returns ``(lo, hi)``.

    Non-finite cells (a diverged critic) are drawn black and ignored by the
    normalization; an all-non-finite grid returns ``(None, None)``.
    """
    finite = np.isfinite(grid)
    img = np.zeros(grid.shape, dtype=np.uint8)
    lo = hi = None
    if finite.any():
        lo, hi = float(grid[finite].min()), float(grid[finite].max())
        if hi > lo:
            img[finite] = np.round((grid[finite] - lo) / (hi - lo) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (grid.shape[1], grid.shape[0]))
        fh.write(img.tobytes())
    return lo, hi


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    header = data.split(b"\n", 3)
    if header[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in header[1].split())
    return np.frombuffer(header[3], dtype=np.uint8, count=w * h).reshape(h, w)


def write_levelset(out_dir, name, grid, bounds):
    """Writes ``<name>.csv`` (x, y, f), ``<name>.pgm`` and ``<name>.json``."""
    x0, x1, y0, y1 = bounds
    res = grid.shape[0]
    xs = np.linspace(x0, x1, res)
    ys = np.linspace(y0, y1, res)
    with open(out_dir / f"{name}.csv", "w") as fh:
        fh.write("x,y,f\n")
        for r in range(res):
            for c in range(res):
                fh.write(f"{float(xs[c])!r},{float(ys[r])!r},{float(grid[r, c])!r}\n")
    lo, hi = write_pgm(out_dir / f"{name}.pgm", grid)
    with open(out_dir / f"{name}.json", "w") as fh:
        json.dump({"bounds": [x0, x1, y0, y1], "resolution": res, "min": lo, "max": hi,
                   "row_order": "y ascending (downward)"}, fh, indent=2)
