"""
Command line entry point.

    qvpo train --config run.conf [--<option> VALUE ...]
    qvpo eval AGENT.npz --env bandit [--episodes N] [--k_eval K] [--seed S]
    qvpo plot METRICS.csv [-o OUT.svg]
    qvpo verify [--seed S] [--quick]
    qvpo overview METRICS.csv [METRICS.csv ...]

Exit codes: 0 success, 1 configuration error, 2 numerical failure (or a
failed verification), 3 I/O or metrics parse error.
"""
import sys
import argparse
import logging
from typing import List, Optional
from qvpo.envs import ENVIRONMENTS, make_env
from qvpo.errors import ConfigurationError, MetricsParseError, NumericalError
from qvpo.option_handling import CONFIG_KEYS, build_config, load_config_file, parse_value
from qvpo.trainer import evaluate, load_agent, train, uniform_baseline
from qvpo.utils import seed_stream
from qvpo_analyzer.analyze import analyze
from qvpo_analyzer.oracles import default_suite
from qvpo_analyzer.overview import load_runs, summarize
from qvpo_analyzer.visualize import plot_metrics

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def argparser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvpo", description="Train and check diffusion policies with Q-weighted updates.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    commands = parser.add_subparsers(dest="command")
    commands.required = True

    train_cmd = commands.add_parser("train", help="run the training loop and write a metrics CSV")
    train_cmd.add_argument("--config", help="'key = value' config file (or .yaml)")
    for key in CONFIG_KEYS:
        train_cmd.add_argument("--" + key, dest=key, metavar="VALUE", help="overrides the config file")

    eval_cmd = commands.add_parser("eval", help="evaluate a saved agent")
    eval_cmd.add_argument("agent", help="agent file written by 'train'")
    eval_cmd.add_argument("--env", choices=ENVIRONMENTS, default="bandit")
    eval_cmd.add_argument("--episodes", type=int, default=10)
    eval_cmd.add_argument("--k_eval", type=int, default=32)
    eval_cmd.add_argument("--seed", type=int, default=0)
    eval_cmd.add_argument("--strict_gaussian", action="store_true")
    eval_cmd.add_argument("--baseline", action="store_true", help="also report a uniform random policy")

    plot_cmd = commands.add_parser("plot", help="render a metrics CSV as an SVG learning curve")
    plot_cmd.add_argument("metrics")
    plot_cmd.add_argument("-o", "--output", help="defaults to the metrics path with an .svg extension")

    verify_cmd = commands.add_parser("verify", help="run the oracle suite and print pass/fail lines")
    verify_cmd.add_argument("--seed", type=int, default=0)
    verify_cmd.add_argument("--quick", action="store_true", help="reduced sample counts")

    overview_cmd = commands.add_parser("overview", help="summarize several runs of one configuration")
    overview_cmd.add_argument("files", nargs="+")
    overview_cmd.add_argument("--fraction", type=float, default=0.1, help="final share of rows averaged")
    overview_cmd.add_argument("--threshold", type=float, default=0.1, help="coverage that counts as a covered peak")
    return parser


def _train(args) -> int:
    values = load_config_file(args.config) if args.config else {}
    overrides = {key: parse_value(getattr(args, key)) for key in CONFIG_KEYS if getattr(args, key) is not None}
    path = train(build_config(values, **overrides))
    print(path)
    return EXIT_OK


def _eval(args) -> int:
    agent = load_agent(args.agent)
    env = make_env(args.env, strict_gaussian=args.strict_gaussian)
    if (env.spec.obs_dim, env.spec.act_dim) != (agent.predictor.state_dim, agent.predictor.action_dim):
        raise ConfigurationError("Agent was trained on a different environment than '{}'".format(args.env))
    if args.episodes < 1 or args.k_eval < 1:
        raise ConfigurationError("--episodes and --k_eval must be positive")
    mean, std = evaluate(agent.predictor, agent.schedule, agent.critic, env, args.episodes, args.k_eval,
                         seed_stream(args.seed, 3, 0))
    print("policy,{:.9g},{:.9g}".format(mean, std))
    if args.baseline:
        mean, std = uniform_baseline(env, args.episodes, seed_stream(args.seed, 6))
        print("uniform,{:.9g},{:.9g}".format(mean, std))
    return EXIT_OK


def _plot(args) -> int:
    print(plot_metrics(args.metrics, args.output))
    return EXIT_OK


def _verify(args) -> int:
    passed = analyze(default_suite(quick=args.quick), seed=args.seed)
    return EXIT_OK if passed else EXIT_NUMERICAL


def _overview(args) -> int:
    summary = summarize(load_runs(args.files), fraction=args.fraction, threshold=args.threshold)
    for key, value in summary.items():
        print("{},{}".format(key, "" if value is None else value))
    return EXIT_OK


COMMANDS = {"train": _train, "eval": _eval, "plot": _plot, "verify": _verify, "overview": _overview}


def main(argv: Optional[List[str]] = None) -> int:
    args = argparser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error("numerical failure: %s", e)
        return EXIT_NUMERICAL
    except (OSError, MetricsParseError) as e:
        logger.error("%s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
