"""Experiment harness: seeded, reproducible subcommands over every module.

Subcommands: decompose, diffuse, train, constants, risk-sweep, report.
Options can come from flags or a plain-text config file of key=value lines
(flags win). Every run directory gets a manifest recording the config hash,
seed, backend, and library versions; no timestamps, so reruns are
byte-comparable. NOISEDECOMP_OUT_ROOT sets the default output root.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np
import scipy

from . import __version__, backend, decomposition, diffusion, reporting
from .dists import fit_empirical, wasserstein
from .distortion import parse_spec
from .errors import ConfigError
from .marl import MarlConfig, coop_spread_env
from .marl import train as marl_train
from .nets import RandomSource
from .noise import PRESET_NAMES, load_preset

SUBCOMMANDS = ("decompose", "diffuse", "train", "constants", "risk-sweep", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisedecomp",
        description="Noisy-reward decomposition experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("decompose", help="fit a mixture decomposition to a noise preset")
    common(p)
    p.add_argument("--preset", required=True, choices=sorted(PRESET_NAMES))
    p.add_argument("--agents", type=int, default=3)
    p.add_argument("--emin", type=float, default=1e-3)
    p.add_argument("--rounds", type=int, default=2000)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=3e-3)

    p = sub.add_parser("diffuse", help="train the diffusion model on a noise preset")
    common(p)
    p.add_argument("--preset", required=True, choices=sorted(PRESET_NAMES))
    p.add_argument("--k", type=int, default=25)
    p.add_argument("--train-iters", type=int, default=5000)
    p.add_argument("--generate", type=int, default=10_000)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--batch", type=int, default=64)

    p = sub.add_parser("train", help="run the multi-agent training loop")
    common(p)
    _add_train_options(p)
    p.add_argument("--distortion", default="expectation")

    p = sub.add_parser("constants", help="print the generation-error constants")
    common(p)
    p.add_argument("--k", type=int, default=25)

    p = sub.add_parser("risk-sweep", help="train once per distortion per seed")
    common(p)
    _add_train_options(p)
    p.add_argument(
        "--distortions",
        default="expectation",
        help="comma-separated list, e.g. cpw:0.71,cvar:0.25,expectation",
    )
    p.add_argument("--seeds", default=None, help="comma-separated seed list")

    p = sub.add_parser("report", help="aggregate metric CSVs into summary and plot")
    p.add_argument("run_dir")
    p.add_argument("--out", help="output directory (defaults to the run directory)")

    return parser


def _add_train_options(p) -> None:
    p.add_argument("--env", default="coop_spread", choices=["coop_spread"])
    p.add_argument("--agents", type=int, default=3)
    p.add_argument("--grid", type=int, default=5)
    p.add_argument("--horizon", type=int, default=25)
    p.add_argument("--mode", default="ndd", choices=["ndd", "naive", "control"])
    p.add_argument("--noise", default=None, choices=sorted(PRESET_NAMES))
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--buffer", type=int, default=1024)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--updates", type=int, default=8)
    p.add_argument("--fit-rounds", type=int, default=200)
    p.add_argument("--fit-subsample", type=int, default=128)
    p.add_argument("--emin", type=float, default=1e-3)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--quantiles", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--eval-episodes", type=int, default=20)
    p.add_argument("--dm", default="off", choices=["on", "off"])
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--dm-iters", type=int, default=1000)
    p.add_argument("--reward-mode", default="sample", choices=["sample", "mean"])


def _subcommand_options(parser):
    """Map each subcommand to the flag names it accepts (config-file keys)."""
    table = {}
    for action in parser._subparsers._group_actions:
        for name, sp in action.choices.items():
            opts = set()
            for act in sp._actions:
                for opt in act.option_strings:
                    if opt.startswith("--"):
                        opts.add(opt[2:])
            table[name] = opts
    return table


def _load_config_args(path, allowed):
    args = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line needs key=value: {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in allowed:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "config":
                raise ConfigError("config files cannot nest")
            args.extend([f"--{key}", value])
    return args


def _inject_config(argv, parser):
    """Expand --config FILE into flag pairs placed before the explicit flags."""
    if not argv or argv[0] not in SUBCOMMANDS:
        return argv
    path = None
    rest = argv[1:]
    for i, token in enumerate(rest):
        if token == "--config" and i + 1 < len(rest):
            path = rest[i + 1]
            break
        if token.startswith("--config="):
            path = token.split("=", 1)[1]
            break
    if path is None:
        return argv
    allowed = _subcommand_options(parser)[argv[0]]
    return [argv[0], *_load_config_args(path, allowed), *rest]


def _resolve_out(args) -> str:
    out = getattr(args, "out", None)
    if not out:
        root = os.environ.get("NOISEDECOMP_OUT_ROOT", "runs")
        out = os.path.join(root, args.command.replace("-", "_"))
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out_dir, args) -> None:
    skip = {"config", "out", "command"}
    items = sorted(
        (k, v) for k, v in vars(args).items() if k not in skip
    )
    canonical = "\n".join(f"{k}={v}" for k, v in items)
    digest = hashlib.sha256(canonical.encode()).hexdigest()
    lines = [
        f"config_hash {digest}",
        f"seed {getattr(args, 'seed', 0)}",
        f"package noisedecomp {__version__}",
        f"numpy {np.__version__}",
        f"scipy {scipy.__version__}",
        f"backend {backend.BACKEND_NAME}",
    ]
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_constants(args) -> int:
    schedule = diffusion.build_schedule(args.k)
    constants = diffusion.generation_error_constants(schedule)
    rows = [
        ("noise_gain_sum", constants.noise_gain_sum),
        ("total_gain", constants.total_gain),
        ("data_mean_coeff", constants.data_mean_coeff),
    ]
    for name, value in rows:
        print(f"{name} {value!r}")
    if args.out:
        out = _resolve_out(args)
        reporting.write_csv(
            os.path.join(out, "constants.csv"), ["name", "value"], rows
        )
        _write_manifest(out, args)
    return 0


def _cmd_decompose(args) -> int:
    out = _resolve_out(args)
    noise = load_preset(args.preset)
    rng = RandomSource(args.seed)
    rewards = noise.sample_n(rng, args.samples)
    enc_dim = 4
    encodings = [np.ones((1, enc_dim)) for _ in range(args.agents)]
    model = decomposition.make_decomposition_model(
        [enc_dim] * args.agents, rng.spawn(1)
    )
    batch = decomposition.make_batch(rewards, encodings)
    result = decomposition.fit(
        model,
        batch,
        e_min=args.emin,
        max_rounds=args.rounds,
        learning_rate=args.lr,
        lam=args.lam,
        alpha=args.alpha,
    )
    mixture = decomposition.decompose(model, [e[0] for e in encodings])
    dist_kde = wasserstein(mixture, batch.target, p=2)
    dist_law = wasserstein(mixture, noise, p=2)
    reporting.write_csv(
        os.path.join(out, "summary.csv"),
        [
            "preset",
            "n_agents",
            "seed",
            "rounds",
            "converged",
            "pdf_loss",
            "wasserstein_kde",
            "wasserstein_law",
        ],
        [
            (
                args.preset,
                args.agents,
                args.seed,
                result.rounds,
                result.converged,
                result.error,
                dist_kde,
                dist_law,
            )
        ],
    )
    weights = model.weights()
    reporting.write_csv(
        os.path.join(out, "components.csv"),
        ["agent", "weight", "mean", "variance"],
        [
            (i, weights[i], c.mean, c.variance)
            for i, c in enumerate(mixture.components)
        ],
    )
    reporting.write_csv(
        os.path.join(out, "loss_curve.csv"),
        ["round", "pdf_loss"],
        list(enumerate(result.loss_history)),
    )
    _write_manifest(out, args)
    print(
        f"decompose {args.preset}: wasserstein_kde={dist_kde:.4g} "
        f"wasserstein_law={dist_law:.4g} rounds={result.rounds}"
    )
    return 0


def _cmd_diffuse(args) -> int:
    out = _resolve_out(args)
    noise = load_preset(args.preset)
    rng = RandomSource(args.seed)
    data = noise.sample_n(rng, args.samples)
    center = float(data.mean())
    spread = max(float(data.std()), 1e-8)
    standardized = (data - center) / spread
    schedule = diffusion.build_schedule(args.k)
    stack = diffusion.make_denoiser_stack(schedule, rng.spawn(1))
    diffusion.train(
        stack,
        schedule,
        standardized,
        rng,
        n_iterations=args.train_iters,
        batch_size=args.batch,
    )
    generated = center + spread * diffusion.generate(
        stack, schedule, args.generate, rng
    )
    val_loss = diffusion.validation_loss(stack, schedule, standardized[:1000], rng)
    distance = wasserstein(data, generated, p=1)

    real_kde = fit_empirical(data)
    gen_kde = fit_empirical(generated)
    lo = min(real_kde.r_min, gen_kde.r_min)
    hi = max(real_kde.r_max, gen_kde.r_max)
    grid = np.linspace(lo, hi, 256)
    reporting.write_csv(
        os.path.join(out, "density.csv"),
        ["value", "real_density", "generated_density"],
        zip(grid, real_kde.pdf(grid), gen_kde.pdf(grid)),
    )
    reporting.write_csv(
        os.path.join(out, "generated.csv"), ["sample"], [(g,) for g in generated]
    )
    reporting.write_csv(
        os.path.join(out, "summary.csv"),
        ["preset", "k", "train_iters", "n_generated", "seed", "wasserstein1", "validation_loss"],
        [(args.preset, args.k, args.train_iters, args.generate, args.seed, distance, val_loss)],
    )
    _write_manifest(out, args)
    print(f"diffuse {args.preset}: wasserstein1={distance:.4g} val_loss={val_loss:.4g}")
    return 0


def _marl_config(args, seed, distortion) -> MarlConfig:
    noise = None
    if args.noise is not None:
        noise = load_preset(args.noise)
        if args.noise_scale != 1.0:
            noise = noise.scaled(args.noise_scale)
    return MarlConfig(
        n_agents=args.agents,
        mode=args.mode,
        noise=noise,
        iterations=args.iters,
        buffer_capacity=args.buffer,
        batch_size=args.batch,
        updates_per_iteration=args.updates,
        gamma=args.gamma,
        m_quantiles=args.quantiles,
        learning_rate=args.lr,
        distortion=distortion,
        e_min=args.emin,
        lam=args.lam,
        alpha=args.alpha,
        fit_rounds=args.fit_rounds,
        fit_subsample=args.fit_subsample,
        data_fraction=args.zeta,
        dm_enabled=args.dm == "on",
        dm_iterations=args.dm_iters,
        eval_episodes=args.eval_episodes,
        local_reward_mode=args.reward_mode,
        seed=seed,
    )


_METRIC_HEADER = [
    "iteration",
    "eval_return",
    "wasserstein",
    "pdf_loss",
    "epsilon",
    "mean_buffer_reward",
]


def _metric_rows(result):
    return [
        (m.iteration, m.eval_return, m.wasserstein, m.pdf_loss, m.epsilon, m.mean_buffer_reward)
        for m in result.metrics
    ]


def _cmd_train(args) -> int:
    out = _resolve_out(args)
    distortion = parse_spec(args.distortion)
    env = coop_spread_env(args.agents, args.grid, horizon=args.horizon)
    config = _marl_config(args, args.seed, distortion)
    result = marl_train(env, config)
    reporting.write_csv(os.path.join(out, "metrics.csv"), _METRIC_HEADER, _metric_rows(result))
    for i, learner in enumerate(result.learners):
        learner.net.save(os.path.join(out, f"learner_{i}.net"))
    if result.model is not None:
        for i, net in enumerate(result.model.agent_nets):
            net.save(os.path.join(out, f"decomp_{i}.net"))
        reporting.write_csv(
            os.path.join(out, "decomp_weights.csv"),
            ["agent", "weight"],
            list(enumerate(result.model.weights())),
        )
    _write_manifest(out, args)
    print(
        f"train {args.mode} seed={args.seed}: "
        f"final_eval_return={result.final_eval_return():.4g}"
    )
    return 0


def _cmd_risk_sweep(args) -> int:
    out = _resolve_out(args)
    specs = [s.strip() for s in args.distortions.split(",") if s.strip()]
    if not specs:
        raise ConfigError("no distortions given")
    seeds = (
        [int(s) for s in args.seeds.split(",")]
        if args.seeds
        else [args.seed]
    )
    rows = []
    for spec in specs:
        distortion = parse_spec(spec)
        for seed in seeds:
            env = coop_spread_env(args.agents, args.grid, horizon=args.horizon)
            config = _marl_config(args, seed, distortion)
            result = marl_train(env, config)
            rows.append((spec, seed, result.final_eval_return()))
            print(f"risk-sweep {spec} seed={seed}: {rows[-1][2]:.4g}")
    reporting.write_csv(
        os.path.join(out, "sweep.csv"), ["distortion", "seed", "final_return"], rows
    )
    _write_manifest(out, args)
    return 0


def _cmd_report(args) -> int:
    written = reporting.write_report(args.run_dir, args.out)
    for path in written:
        print(path)
    return 0


_HANDLERS = {
    "constants": _cmd_constants,
    "decompose": _cmd_decompose,
    "diffuse": _cmd_diffuse,
    "train": _cmd_train,
    "risk-sweep": _cmd_risk_sweep,
    "report": _cmd_report,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        expanded = _inject_config(list(argv), parser)
        args = parser.parse_args(expanded)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)
