"""Command line entry point.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 runtime abort.
"""
import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from wganlab import regularizers as reg
from wganlab import training, transport, verify
from wganlab.data import DatasetKind, sample_real
from wganlab.numerics import Rng

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_ABORT = 0, 1, 2, 3

log = logging.getLogger("wganlab")

_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(training.TrainConfig)}
_EXTRA_FIELDS = {"out_dir", "n_seeds", "seeds", "seed_overrides"}
_NESTED = {"regularizer": reg.RegularizerSpec, "perturbation": reg.PerturbationScheme}
_INT_FIELDS = {"latent_dim", "batch", "n_critic", "warmup_gen_iters", "warmup_n_critic", "iterations",
               "emd_every", "emd_sample_size", "levelset_resolution", "seed"}
_FLOAT_FIELDS = {"leaky_slope", "lr", "rho", "eps"}


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class ExperimentConfig:
    train: training.TrainConfig
    out_dir: str = None
    seeds: tuple = (0,)
    seed_overrides: dict = dataclasses.field(default_factory=dict)

    def config_for_seed(self, seed):
        d = self.train.to_dict()
        d["seed"] = seed
        d.update(self.seed_overrides.get(str(seed), {}))
        return _train_config_from(d, f"seed_overrides[{seed}]")


def _check_number(name, value, kind):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {name!r}: expected a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"field {name!r}: expected an integer, got {value!r}")


def _train_config_from(d, where="config"):
    d = dict(d)
    for key, value in d.items():
        if key not in _TRAIN_FIELDS:
            raise ConfigError(f"{where}: unknown field {key!r}")
        if key in _INT_FIELDS:
            _check_number(key, value, int)
        elif key in _FLOAT_FIELDS:
            _check_number(key, value, float)
    for key, cls in _NESTED.items():
        if key in d and not isinstance(d[key], cls):
            if not isinstance(d[key], dict):
                raise ConfigError(f"{where}: field {key!r} must be an object")
            allowed = {f.name for f in dataclasses.fields(cls)}
            for sub in d[key]:
                if sub not in allowed:
                    raise ConfigError(f"{where}: unknown field {key}.{sub!r}")
            try:
                d[key] = cls(**d[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}: field {key!r}: {exc}") from None
    try:
        return training.TrainConfig(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(text, source="config"):
    """Validate an experiment config document; unknown keys are rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be an object")
    for key in doc:
        if key not in _TRAIN_FIELDS and key not in _EXTRA_FIELDS:
            raise ConfigError(f"{source}: unknown field {key!r}")
    train_part = {k: v for k, v in doc.items() if k in _TRAIN_FIELDS}
    env_seed = os.environ.get("WGANLAB_SEED")
    if env_seed is not None:
        try:
            train_part["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"WGANLAB_SEED={env_seed!r} is not an integer") from None
    train = _train_config_from(train_part, source)
    if "seeds" in doc:
        seeds = doc["seeds"]
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError(f"{source}: field 'seeds' must be a non-empty list")
        for s in seeds:
            _check_number("seeds", s, int)
        seeds = tuple(int(s) for s in seeds)
    elif "n_seeds" in doc:
        _check_number("n_seeds", doc["n_seeds"], int)
        if doc["n_seeds"] < 1:
            raise ConfigError(f"{source}: field 'n_seeds' must be >= 1")
        seeds = tuple(train.seed + k for k in range(int(doc["n_seeds"])))
    else:
        seeds = (train.seed,)
    overrides = doc.get("seed_overrides", {})
    if not isinstance(overrides, dict):
        raise ConfigError(f"{source}: field 'seed_overrides' must be an object")
    exp = ExperimentConfig(train, doc.get("out_dir"), seeds, overrides)
    for s in overrides:
        exp.config_for_seed(int(s))
    return exp


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def write_outputs(result, config, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "runlog.csv").write_text(result.log.to_csv(with_wall=config.record_wall_ms))
    training.save_checkpoint(result.state, out / "final.ckpt")
    grid = training.levelset_grid(result.state.critic, training.levelset_bounds(config.dataset),
                                  config.levelset_resolution)
    training.write_levelset(out, "levelset_final", grid, training.levelset_bounds(config.dataset))
    echo = config.to_dict()
    echo["status"] = "failed" if result.log.failed else "ok"
    if result.log.failed:
        echo["failure"] = result.log.reason
    (out / "config-echo.json").write_text(json.dumps(echo, indent=2) + "\n")


def run_to_dir(config, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    def emit(t, grid, bounds):
        training.write_levelset(out, f"levelset_{t:05d}", grid, bounds)

    # a diverging run overflows on its way to the abort; that is reported, not warned
    with np.errstate(over="ignore", invalid="ignore"):
        result = training.train_run(config, on_levelset=emit)
        write_outputs(result, config, out)
    return result


def cmd_train(args):
    exp = load_config(args.config)
    result = run_to_dir(exp.train, args.out)
    if result.log.failed:
        print(f"run aborted: {result.log.reason}", file=sys.stderr)
        return EXIT_ABORT
    print(f"wrote {args.out} ({len(result.log.records)} iterations)")
    return EXIT_OK


def _sweep_worker(job):
    config_dict, out = job
    config = training.TrainConfig.from_dict(config_dict)
    result = run_to_dir(config, out)
    return result.log.to_csv(), result.log.failed, result.log.reason


def aggregate(logs):
    """Median and quartiles of d_loss and EMD per iteration across runs.

    Each iteration only counts the runs that reached it.
    """
    by_iter = {}
    for run_log in logs:
        for r in run_log.records:
            by_iter.setdefault(r.iter, []).append(r)
    rows = []
    for it in sorted(by_iter):
        recs = by_iter[it]
        d = np.array([r.d_loss for r in recs])
        e = np.array([r.emd for r in recs if r.emd is not None])
        row = {"iter": it, "n_runs": len(recs),
               "d_loss_median": np.median(d), "d_loss_q25": np.quantile(d, 0.25),
               "d_loss_q75": np.quantile(d, 0.75)}
        if len(e):
            row.update(emd_median=np.median(e), emd_q25=np.quantile(e, 0.25), emd_q75=np.quantile(e, 0.75))
        else:
            row.update(emd_median=None, emd_q25=None, emd_q75=None)
        rows.append(row)
    return rows


AGG_COLUMNS = ("iter", "n_runs", "d_loss_median", "d_loss_q25", "d_loss_q75", "emd_median", "emd_q25", "emd_q75")


def write_aggregate(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_COLUMNS)
        for row in rows:
            w.writerow([row["iter"], row["n_runs"]] +
                       ["" if row[c] is None else repr(float(row[c])) for c in AGG_COLUMNS[2:]])


def cmd_sweep(args):
    exp = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(exp.config_for_seed(s).to_dict(), str(out / f"seed_{s}")) for s in exp.seeds]
    n_workers = max(1, min(args.jobs or os.cpu_count() or 1, len(jobs)))
    if n_workers == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    logs = []
    failures = []
    for seed, (text, failed, reason) in zip(exp.seeds, results):
        run_log = training.RunLog.from_csv(text)
        logs.append(run_log)
        if failed:
            failures.append((seed, reason))
    write_aggregate(out / "aggregate.csv", aggregate(logs))
    summary = {"seeds": list(exp.seeds), "failed": {str(s): r for s, r in failures}}
    (out / "sweep.json").write_text(json.dumps(summary, indent=2) + "\n")
    for seed, reason in failures:
        print(f"seed {seed} aborted: {reason}", file=sys.stderr)
    print(f"aggregated {len(logs) - len(failures)}/{len(logs)} surviving runs into {out / 'aggregate.csv'}")
    return EXIT_ABORT if failures else EXIT_OK


def cmd_verify(args):
    suites = verify.SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in suites:
        print(f"== {name}")
        for check in verify.run_suite(name):
            print(check.line())
            ok &= check.passed
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_emd(args):
    try:
        a = transport.read_points_csv(args.a)
        b = transport.read_points_csv(args.b)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if a.shape != b.shape:
        print(f"error: point sets differ: {a.shape[0]}x{a.shape[1]} vs {b.shape[0]}x{b.shape[1]}", file=sys.stderr)
        return EXIT_INPUT
    print(f"{transport.emd_empirical(a, b):.9f}")
    return EXIT_OK


def _parse_bounds(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        vals = []
    if len(vals) != 4 or vals[0] >= vals[1] or vals[2] >= vals[3]:
        raise ConfigError(f"--bounds expects x0,x1,y0,y1 with x0<x1 and y0<y1, got {text!r}")
    return tuple(vals)


def cmd_levelset(args):
    try:
        state = training.load_checkpoint(args.ckpt)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.bounds:
        bounds = _parse_bounds(args.bounds)
    else:
        bounds = training.levelset_bounds(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = training.levelset_grid(state.critic, bounds, args.res)
    training.write_levelset(out, f"levelset_{state.iteration:05d}", grid, bounds)
    print(f"wrote {out}/levelset_{state.iteration:05d}.{{csv,pgm,json}}")
    return EXIT_OK


def cmd_sample(args):
    pts = sample_real(DatasetKind(args.dataset), args.n, Rng(args.seed).derive("data"))
    transport.write_points_csv(args.out, pts)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="wganlab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run a configuration over several seeds and aggregate")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run oracle suites")
    v.add_argument("suite", choices=(*verify.SUITES, "all"))
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("emd", help="empirical EMD between two equal-size point CSVs")
    e.add_argument("a")
    e.add_argument("b")
    e.set_defaults(func=cmd_emd)

    ls = sub.add_parser("levelset", help="critic level-set grid from a checkpoint")
    ls.add_argument("--ckpt", required=True)
    ls.add_argument("--out", required=True)
    ls.add_argument("--res", type=int, default=128)
    ls.add_argument("--bounds", default=None)
    ls.add_argument("--dataset", default="swissroll", choices=("8gaussians", "25gaussians", "swissroll"))
    ls.set_defaults(func=cmd_levelset)

    sm = sub.add_parser("sample", help="dump dataset samples as CSV (x,y)")
    sm.add_argument("--dataset", default="swissroll", choices=("8gaussians", "25gaussians", "swissroll"))
    sm.add_argument("-n", type=int, default=1000)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--out", required=True)
    sm.set_defaults(func=cmd_sample)
    return p


def main(argv=None):
    parser = build_parser()
    raw = iter(sys.argv[1:] if argv is None else argv)
    argv = []
    for a in raw:
        # "--bounds -1,1,-1,1" would otherwise be taken for an option
        argv.append(f"--bounds={next(raw, '')}" if a == "--bounds" else a)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
