"""Command-line entry point.

Subcommands: gen-data, train, plot, prox. Run configuration for `train` is a
flat JSON document whose keys match the flag names below; flags override file
values. Exit codes: 0 success, 2 usage or config error, 3 numerical abort.

MYVT_THREADS caps worker parallelism for batch prox evaluation (default 1,
the deterministic single-threaded mode); the training loop itself is always a
single logical writer.
"""

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .data import SyntheticSpec, load_dataset, make_dataset, save_dataset
from .nn import NumericalError
from .plotting import MetricsParseError, parse_metrics, render_metrics_svg
from .prox import Regularizer, prox
from .train import TrainConfig, run_training

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """Bad run configuration (unknown key, missing field, bad value)."""


def thread_cap():
    """Worker-parallelism cap from MYVT_THREADS; defaults to 1."""
    raw = os.environ.get("MYVT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MYVT_THREADS must be an integer, got {raw!r}")
    return max(1, n)


# flat config keys for `train`; values are (type, default)
_TRAIN_KEYS = {
    "method": (str, "myvt"),
    "divergence": (str, "kl"),
    "reg": (str, "l1"),
    "reg_h": (int, 0),
    "reg_w": (int, 0),
    "admm_iters": (int, 20),
    "admm_rho": (float, 1.0),
    "cg_iters": (int, 30),
    "cg_tol": (float, 1e-8),
    "alpha": (float, 0.1),
    "lam": (float, 1e-4),
    "eta_particle": (float, 1e-4),
    "eta_generator": (float, 1e-4),
    "eta_critic": (float, 0.05),
    "iters": (int, 2000),
    "inner_steps": (int, 5),
    "critic_steps": (int, 2),
    "batch_size": (int, 100),
    "n_particles": (int, 500),
    "noise_dim": (int, 100),
    "seed": (int, 0),
    "optimizer": (str, "sgd"),
    "gen_hidden": (list, [100, 100, 100]),
    "critic_hidden": (list, [100, 100]),
    # data section
    "dataset": (str, ""),
    "case": (str, "sparse"),
    "d": (int, 100),
    "n_examples": (int, 500),
    "noise_std": (float, 0.2),
    "sparsity": (int, 5),
    "n_segments": (int, 5),
    "amp_low": (float, -2.0),
    "amp_high": (float, 2.0),
    "data_seed": (int, 0),
    # outputs
    "metrics_out": (str, "metrics.csv"),
    "checkpoint_out": (str, ""),
    "summary_out": (str, ""),
    "checkpoint_interval": (int, 0),
    "progress_every": (int, 0),
}


def _load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    for key in raw:
        if key not in _TRAIN_KEYS:
            raise ConfigError(f"{path}: unknown config key {key!r}")
    return raw


def _effective_config(args):
    """File values under flag overrides over defaults, all keys present."""
    cfg = {k: default for k, (_, default) in _TRAIN_KEYS.items()}
    if args.config:
        cfg.update(_load_config_file(args.config))
    for key in _TRAIN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key, (typ, _) in _TRAIN_KEYS.items():
        try:
            if typ is list:
                cfg[key] = [int(v) for v in cfg[key]]
            else:
                cfg[key] = typ(cfg[key])
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} has invalid value {cfg[key]!r}")
    return cfg


def _build_regularizer(cfg):
    shape = (cfg["reg_h"], cfg["reg_w"]) if cfg["reg"] == "tv2d" else None
    try:
        return Regularizer(cfg["reg"], shape=shape, admm_iters=cfg["admm_iters"],
                           admm_rho=cfg["admm_rho"], cg_iters=cfg["cg_iters"],
                           cg_tol=cfg["cg_tol"])
    except ValueError as err:
        raise ConfigError(str(err))


def _build_train_config(cfg):
    try:
        return TrainConfig(
            method=cfg["method"], divergence=cfg["divergence"],
            regularizer=_build_regularizer(cfg),
            alpha=cfg["alpha"], lam=cfg["lam"],
            eta_particle=cfg["eta_particle"], eta_generator=cfg["eta_generator"],
            eta_critic=cfg["eta_critic"], iters=cfg["iters"],
            inner_steps=cfg["inner_steps"], critic_steps=cfg["critic_steps"],
            batch_size=cfg["batch_size"], n_particles=cfg["n_particles"],
            noise_dim=cfg["noise_dim"], seed=cfg["seed"],
            optimizer=cfg["optimizer"],
            gen_hidden=tuple(cfg["gen_hidden"]),
            critic_hidden=tuple(cfg["critic_hidden"]),
        )
    except ValueError as err:
        raise ConfigError(str(err))


def _build_spec(cfg):
    try:
        return SyntheticSpec(
            case=cfg["case"], d=cfg["d"], n_examples=cfg["n_examples"],
            noise_std=cfg["noise_std"], k=cfg["sparsity"],
            n_segments=cfg["n_segments"], amp_low=cfg["amp_low"],
            amp_high=cfg["amp_high"], seed=cfg["data_seed"],
        )
    except ValueError as err:
        raise ConfigError(str(err))


def cmd_gen_data(args):
    spec = SyntheticSpec(
        case=args.case, d=args.d, n_examples=args.n_examples,
        noise_std=args.noise_std, k=args.sparsity, n_segments=args.n_segments,
        amp_low=args.amp_low, amp_high=args.amp_high, seed=args.seed,
    )
    save_dataset(make_dataset(spec), args.out)
    return 0


def cmd_train(args):
    cfg = _effective_config(args)
    config = _build_train_config(cfg)
    if cfg["dataset"]:
        dataset = load_dataset(cfg["dataset"])
    else:
        dataset = make_dataset(_build_spec(cfg))
    t0 = time.perf_counter()
    state, rows, _ = run_training(
        config, dataset,
        metrics_path=cfg["metrics_out"],
        checkpoint_path=cfg["checkpoint_out"] or None,
        checkpoint_interval=cfg["checkpoint_interval"],
        progress_every=cfg["progress_every"],
    )
    wall_s = time.perf_counter() - t0
    if cfg["summary_out"]:
        last = rows[-1]
        summary = {
            "final_mse": last.mse,
            "final_avg_l1": last.avg_l1,
            "final_avg_tv": last.avg_tv,
            "iterations": last.iteration,
            "wall_s": wall_s,
            "config_echo": cfg,
            "code_version": __version__,
        }
        with open(cfg["summary_out"], "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_plot(args):
    labels = args.labels or [os.path.basename(p) for p in args.metrics]
    if len(labels) != len(args.metrics):
        raise ConfigError("--labels must match the number of metrics files")
    runs = [(lbl, parse_metrics(path)) for lbl, path in zip(labels, args.metrics)]
    render_metrics_svg(runs, args.out)
    return 0


def _read_vectors(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, ln in enumerate(fh, start=1):
            ln = ln.strip()
            if not ln:
                continue
            try:
                rows.append(np.array([float(v) for v in ln.split(",")]))
            except ValueError:
                raise ConfigError(f"{path}:{i}: not a comma-separated vector")
    return rows


def cmd_prox(args):
    if args.action != "eval":
        raise ConfigError(f"unknown prox action {args.action!r}")
    shape = (args.height, args.width) if args.kind == "tv2d" else None
    try:
        g = Regularizer(args.kind, shape=shape, admm_iters=args.admm_iters,
                        admm_rho=args.rho, cg_iters=args.cg_iters,
                        cg_tol=args.cg_tol)
    except ValueError as err:
        raise ConfigError(str(err))
    vectors = _read_vectors(args.input)
    workers = thread_cap()

    def one(x):
        return prox(g, x, args.lam)

    if workers > 1 and len(vectors) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, vectors))
    else:
        results = [one(x) for x in vectors]
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        for row in results:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="myvt",
        description="Regularized distributional optimization: generator and "
                    "particle training, synthetic data, prox evaluation, plots.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    p.add_argument("--case", choices=("sparse", "pwc"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--n-examples", dest="n_examples", type=int, default=500)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=0.2)
    p.add_argument("--sparsity", type=int, default=5)
    p.add_argument("--n-segments", dest="n_segments", type=int, default=5)
    p.add_argument("--amp-low", dest="amp_low", type=float, default=-2.0)
    p.add_argument("--amp-high", dest="amp_high", type=float, default=2.0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run a training configuration")
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--method", choices=("myvt", "vt"))
    p.add_argument("--divergence", choices=("kl", "js"))
    p.add_argument("--reg", choices=("l1", "tv1d", "tv2d"))
    p.add_argument("--reg-h", dest="reg_h", type=int)
    p.add_argument("--reg-w", dest="reg_w", type=int)
    p.add_argument("--admm-iters", dest="admm_iters", type=int)
    p.add_argument("--admm-rho", dest="admm_rho", type=float)
    p.add_argument("--cg-iters", dest="cg_iters", type=int)
    p.add_argument("--cg-tol", dest="cg_tol", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eta-particle", dest="eta_particle", type=float)
    p.add_argument("--eta-generator", dest="eta_generator", type=float)
    p.add_argument("--eta-critic", dest="eta_critic", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--inner-steps", dest="inner_steps", type=int)
    p.add_argument("--critic-steps", dest="critic_steps", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--n-particles", dest="n_particles", type=int)
    p.add_argument("--noise-dim", dest="noise_dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--dataset", help="load a dataset CSV instead of generating")
    p.add_argument("--case", choices=("sparse", "pwc"))
    p.add_argument("--d", type=int)
    p.add_argument("--n-examples", dest="n_examples", type=int)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--sparsity", type=int)
    p.add_argument("--n-segments", dest="n_segments", type=int)
    p.add_argument("--amp-low", dest="amp_low", type=float)
    p.add_argument("--amp-high", dest="amp_high", type=float)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--metrics-out", dest="metrics_out")
    p.add_argument("--checkpoint-out", dest="checkpoint_out")
    p.add_argument("--summary-out", dest="summary_out")
    p.add_argument("--checkpoint-interval", dest="checkpoint_interval", type=int)
    p.add_argument("--progress-every", dest="progress_every", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plot", help="render metrics CSVs as an SVG chart")
    p.add_argument("metrics", nargs="+", help="metrics CSV file(s)")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", nargs="*", default=None)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("prox", help="evaluate proximal maps on a CSV of vectors")
    p.add_argument("action", choices=("eval",))
    p.add_argument("--kind", choices=("l1", "tv1d", "tv2d"), required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--height", type=int, default=0)
    p.add_argument("--width", type=int, default=0)
    p.add_argument("--admm-iters", dest="admm_iters", type=int, default=20)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--cg-iters", dest="cg_iters", type=int, default=30)
    p.add_argument("--cg-tol", dest="cg_tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_prox)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MetricsParseError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
