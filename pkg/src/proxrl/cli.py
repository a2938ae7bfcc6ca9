"""Experiment runner.

Config files are flat ``key = value`` text (``#`` starts a comment)::

    name         = baird_tdc
    environment  = baird               # see `proxrl list`
    env.gamma    = 0.99                # env.<param> passes through to the constructor
    algorithm    = tdc
    mode         = expected            # expected | sampled
    alpha        = 0.01
    eta          = 0.5
    n_iterations = 1000
    n_seeds      = 1
    seed0        = 0
    metrics      = mspbe, neu

Results go to ``$PROXRL_OUTPUT_DIR`` (default ``./results``) as
``<name>.csv`` with header ``iteration,seed,metric,value`` and
``<name>_aggregate.csv`` with ``iteration,metric,mean,std,n``. Files are
UTF-8 with LF line endings; numbers use ``%.12e``.
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import envs
from .errors import ConfigParse, MismatchedMetrics, ProxRLError, UnknownAlgorithm, UnknownEnvironment
from .geometry import BregmanGeometry, ProxFriendlyFunction
from .gtd import METRICS, SADDLE_ALGORITHMS, evaluate_metric, run_expected, run_sampled
from .mdp import expectations, trajectory_sampler
from .td import (
    Schedule,
    TdIterate,
    composite_mirror_td_step,
    mirror_td_step,
    sparse_mirror_td_step,
    td0_step,
    td_lambda_step,
)

OUTPUT_ENV = "PROXRL_OUTPUT_DIR"
NUM = "%.12e"

ENVIRONMENTS = {
    "baird": envs.baird_star,
    "random_walk_5": envs.random_walk_5,
    "two_state": envs.two_state,
    "random_mdp": envs.random_mdp,
    "gridworld": envs.gridworld_noisy,
}
TD_ALGORITHMS = {
    "td0": td0_step,
    "td_lambda": td_lambda_step,
    "mirror_td": mirror_td_step,
    "sparse_mirror_td": sparse_mirror_td_step,
    "composite_mirror_td": composite_mirror_td_step,
}
ALGORITHMS = tuple(SADDLE_ALGORITHMS) + tuple(TD_ALGORITHMS)


@dataclass
class ExperimentConfig:
    environment: str = "baird"
    algorithm: str = "tdc"
    name: str = "experiment"
    mode: str = "expected"
    alpha: float = 0.01
    eta: float = 10.0
    lam: float = 0.0
    rho1: float = 0.0
    rho2: float = 0.0
    beta: float = 0.0
    geometry: str = "euclidean"
    p: float = 2.0
    schedule: str = "constant"
    theta0: str = "default"
    n_iterations: int = 1000
    n_seeds: int = 1
    seed0: int = 0
    workers: int = 1
    metrics: tuple = ("mspbe",)
    env_params: dict = field(default_factory=dict)

    ALIASES = {"lambda": "lam"}

    def validate(self):
        if self.environment not in ENVIRONMENTS:
            raise UnknownEnvironment(self.environment)
        if self.algorithm not in ALGORITHMS:
            raise UnknownAlgorithm(self.algorithm)
        if self.mode not in ("expected", "sampled"):
            raise ConfigParse(f"mode must be 'expected' or 'sampled', got {self.mode!r}")
        if self.mode == "expected" and self.algorithm in TD_ALGORITHMS:
            raise ConfigParse(f"{self.algorithm} runs in sampled mode only")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ConfigParse(f"unknown metrics {bad}")
        if self.n_iterations < 0 or self.n_seeds < 1 or self.workers < 1:
            raise ConfigParse("n_iterations >= 0, n_seeds >= 1 and workers >= 1 are required")
        return self

    @property
    def seeds(self):
        return list(range(self.seed0, self.seed0 + self.n_seeds))


def _coerce(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def apply_settings(cfg, pairs, source="<args>"):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    for lineno, key, value in pairs:
        key = ExperimentConfig.ALIASES.get(key, key)
        where = f"{source}:{lineno}" if lineno else source
        if key.startswith("env."):
            cfg.env_params[key[4:]] = _coerce(value)
        elif key == "metrics":
            cfg.metrics = tuple(m.strip() for m in value.split(",") if m.strip())
        elif key in types and key != "env_params":
            try:
                t = types[key]
                cast = {"int": int, "float": float, "str": str}.get(getattr(t, "__name__", t), str)
                setattr(cfg, key, cast(value))
            except ValueError:
                raise ConfigParse(f"{where}: bad value {value!r} for {key}") from None
        else:
            raise ConfigParse(f"{where}: unknown key {key!r}")
    return cfg


def parse_config_text(text, source="<config>"):
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParse(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        pairs.append((lineno, k.strip(), v.strip()))
    return apply_settings(ExperimentConfig(), pairs, source)


def load_config(path, overrides=()):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc}") from None
    cfg = parse_config_text(text, str(path))
    pairs = []
    for item in overrides:
        if "=" not in item:
            raise ConfigParse(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        pairs.append((0, k.strip(), v.strip()))
    return apply_settings(cfg, pairs).validate()


# ---------------------------------------------------------------------------
# running

@dataclass
class RunResult:
    config: ExperimentConfig
    traces: dict          # (seed, metric) -> array of length n_iterations + 1
    finals: dict          # (seed, metric) -> float
    aggregate: dict       # metric -> (mean array, std array)


def _theta0(cfg, basis):
    if cfg.theta0 == "default":
        if cfg.environment == "baird":
            return envs.BAIRD_THETA0.copy()
        return np.zeros(basis.d)
    if cfg.theta0 == "zeros":
        return np.zeros(basis.d)
    vals = np.array([float(t) for t in cfg.theta0.split(",")])
    if vals.size != basis.d:
        raise ConfigParse(f"theta0 has {vals.size} entries, basis has {basis.d}")
    return vals


def _run_td_family(cfg, mrp, basis, seed, theta0):
    step = TD_ALGORITHMS[cfg.algorithm]
    geom = BregmanGeometry.p_norm(cfg.p) if cfg.geometry == "p_norm" else BregmanGeometry.euclidean()
    it = TdIterate.init(theta0, mrp.gamma, Schedule(cfg.schedule, cfg.alpha), cfg.lam,
                        cfg.beta, geom)
    ex = expectations(mrp, basis)
    samples = trajectory_sampler(mrp, basis, seed)
    traces = {m: [evaluate_metric(m, mrp, basis, it.w, ex)] for m in cfg.metrics}
    for _ in range(cfg.n_iterations):
        it = step(it, next(samples))
        for m in cfg.metrics:
            traces[m].append(evaluate_metric(m, mrp, basis, it.w, ex))
    return {m: np.array(v) for m, v in traces.items()}


def run_seed(cfg, seed):
    """Traces for one seed, ``{metric: array}``."""
    mrp, basis = ENVIRONMENTS[cfg.environment](**cfg.env_params)
    theta0 = _theta0(cfg, basis)
    if cfg.algorithm in TD_ALGORITHMS:
        return _run_td_family(cfg, mrp, basis, seed, theta0)
    reg = ProxFriendlyFunction.l1(cfg.rho1) if cfg.rho1 > 0 else None
    alpha = Schedule(cfg.schedule, cfg.alpha)
    kw = dict(theta0=theta0, alpha=alpha, eta=cfg.eta, reg=reg, rho1=cfg.rho1, rho2=cfg.rho2)
    if cfg.mode == "expected":
        _, tr = run_expected(cfg.algorithm, mrp, basis, cfg.n_iterations, metrics=cfg.metrics, **kw)
    else:
        _, _, tr = run_sampled(cfg.algorithm, mrp, basis, cfg.n_iterations, seed,
                               metrics=cfg.metrics, **kw)
    return {m: tr[m] for m in cfg.metrics}


def run(cfg, write=True, out_dir=None):
    """Run every seed of ``cfg``; optionally write the CSV pair."""
    cfg.validate()
    seeds = cfg.seeds
    if cfg.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_seed = list(pool.map(run_seed, [cfg] * len(seeds), seeds))
    else:
        per_seed = [run_seed(cfg, s) for s in seeds]
    traces, finals, agg = {}, {}, {}
    for s, tr in zip(seeds, per_seed):
        for m, v in tr.items():
            traces[(s, m)] = v
            finals[(s, m)] = float(v[-1])
    for m in cfg.metrics:
        stack = np.vstack([traces[(s, m)] for s in seeds])
        agg[m] = (stack.mean(axis=0), stack.std(axis=0))
    result = RunResult(cfg, traces, finals, agg)
    if write:
        write_result(result, out_dir)
    return result


def output_dir(out_dir=None):
    d = out_dir or os.environ.get(OUTPUT_ENV, "results")
    os.makedirs(d, exist_ok=True)
    return d


def write_result(result, out_dir=None):
    d = output_dir(out_dir)
    cfg = result.config
    main = os.path.join(d, f"{cfg.name}.csv")
    with open(main, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "seed", "metric", "value"])
        for s in cfg.seeds:
            for m in cfg.metrics:
                for k, v in enumerate(result.traces[(s, m)]):
                    w.writerow([k, s, m, NUM % v])
    agg = os.path.join(d, f"{cfg.name}_aggregate.csv")
    with open(agg, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "metric", "mean", "std", "n"])
        for m in cfg.metrics:
            mean, std = result.aggregate[m]
            for k in range(mean.size):
                w.writerow([k, m, NUM % mean[k], NUM % std[k], len(cfg.seeds)])
    return main, agg


def compare(configs, write=True, out_dir=None, checkpoints=None):
    """Run several configs and align their mean/std per metric and iteration.

    Returns ``{metric: {"iteration": array, name: (mean, std), ...}}``.
    """
    results = [run(c, write=write, out_dir=out_dir) for c in configs]
    metrics = results[0].config.metrics
    n = results[0].config.n_iterations
    for r in results[1:]:
        if r.config.metrics != metrics or r.config.n_iterations != n:
            raise MismatchedMetrics(
                f"{r.config.name} reports {r.config.metrics} over {r.config.n_iterations} "
                f"iterations, {results[0].config.name} reports {metrics} over {n}"
            )
    its = np.array(sorted(set(checkpoints or np.linspace(0, n, 11).astype(int).tolist())))
    table = {}
    for m in metrics:
        col = {"iteration": its}
        for r in results:
            mean, std = r.aggregate[m]
            col[r.config.name] = (mean[its], std[its])
        table[m] = col
    return table


def format_table(table):
    lines = []
    for m, col in table.items():
        names = [k for k in col if k != "iteration"]
        lines.append(f"[{m}]")
        lines.append("iteration," + ",".join(names))
        for i, k in enumerate(col["iteration"]):
            cells = [f"{col[nm][0][i]:.6e} +/- {col[nm][1][i]:.2e}" for nm in names]
            lines.append(f"{k}," + ",".join(cells))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    ap = argparse.ArgumentParser(prog="proxrl", description="Run proximal RL experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one config")
    r.add_argument("config")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    c = sub.add_parser("compare", help="run several configs and print an aligned table")
    c.add_argument("configs", nargs="+")
    c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sub.add_parser("list", help="list algorithms and environments")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            print("algorithms:   " + " ".join(ALGORITHMS))
            print("environments: " + " ".join(ENVIRONMENTS))
            print("metrics:      " + " ".join(METRICS))
            return 0
        if args.command == "run":
            res = run(load_config(args.config, args.set))
            for m in res.config.metrics:
                mean, std = res.aggregate[m]
                print(f"{res.config.name} {m} final {mean[-1]:.6e} +/- {std[-1]:.2e}")
            return 0
        cfgs = [load_config(p, args.set) for p in args.configs]
        print(format_table(compare(cfgs)))
        return 0
    except (ProxRLError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
