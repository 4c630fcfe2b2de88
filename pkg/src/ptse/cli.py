"""``ptse`` command line: fit, predict, evaluate, simulate, plot-data.

Exit codes: 0 success, 1 hard error, 2 result produced with caveats
(EM not converged, or a member's quantile constraint fell back).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import FitConfig, deserialize, fit, serialize
from .exceptions import DataFileError, PtseError
from .io import fmt, read_config, read_dataset, read_forecast, write_forecast
from .predictor import ForecastInput, ensemble_quantile, q_risk
from .simulator import SimConfig, run_convergence_experiment

EXIT_OK, EXIT_ERROR, EXIT_CAVEAT = 0, 1, 2

TRAINING_NOTE = (
    "member predictions in the training file are taken as out-of-sample level-q forecasts for each row; "
    "this is assumed, not verified"
)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _level(text: str) -> float:
    q = float(text)
    if not 0.0 < q < 1.0:
        raise argparse.ArgumentTypeError(f"quantile level must lie strictly between 0 and 1, got {text}")
    return q


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def _default_seed() -> int:
    raw = os.environ.get("PTSE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"PTSE_SEED must be an integer, got {raw!r}") from None


def build_parser(seed_default: int = 0) -> argparse.ArgumentParser:
    parser = _Parser(prog="ptse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ptse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key=value file of flag defaults (flags win)")
        p.add_argument("--seed", type=int, default=seed_default, help="master seed (default: $PTSE_SEED or 0)")

    p = sub.add_parser("fit", help="fit an ensemble model to a training CSV")
    p.add_argument("train_csv")
    p.add_argument("--q", type=_level, required=True, help="quantile level of the member predictions")
    p.add_argument("--out", default="model.json", help="model document path")
    p.add_argument("--report", help="also write the fit report as JSON here")
    p.add_argument("--max-iters", type=_positive_int, default=FitConfig.max_iters)
    p.add_argument("--loglik-tol", type=float, default=FitConfig.loglik_tol)
    p.add_argument("--param-tol", type=float, default=FitConfig.param_tol)
    p.add_argument("--n-candidates", type=_positive_int, default=FitConfig.n_candidates)
    p.add_argument("--candidate-span", type=float, default=FitConfig.candidate_span)
    p.add_argument("--bootstrap-b", type=_positive_int, default=FitConfig.bootstrap_B)
    p.add_argument("--freeze-bandwidths-after", type=int, default=None)
    common(p)

    p = sub.add_parser("predict", help="ensemble quantile for each row of a future CSV")
    p.add_argument("model")
    p.add_argument("future_csv")
    p.add_argument("--out", help="forecast CSV path (default: stdout)")
    common(p)

    p = sub.add_parser("evaluate", help="q-risk of a forecast against actuals")
    p.add_argument("forecast_csv")
    p.add_argument("actuals_csv")
    p.add_argument("--q", type=_level, help="quantile level (default: the forecast's level column)")
    p.add_argument("--format", choices=["text", "json-lines"], default="text")
    p.add_argument("--members", action="store_true", help="also score each m:<label> column of the actuals file")
    common(p)

    p = sub.add_parser("simulate", help="empirical-CDF convergence experiment on a random HMM")
    p.add_argument("--k", type=int, required=True, help="number of hidden states")
    p.add_argument("--t", type=int, required=True, help="sequence length")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--spread", choices=["std", "var"], default="std", help="read sqrt(k)+1 as std or variance")
    p.add_argument("--out", default="convergence.csv")
    common(p)

    p = sub.add_parser("plot-data", help="per-t mean, band and limit from a convergence CSV")
    p.add_argument("convergence_csv")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    common(p)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with values from ``--config`` installed as subcommand defaults."""
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    values = read_config(known.config)
    subparser = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise CliError(f"{known.config}: unknown key {key!r} for '{command}'")
        if action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as err:
                raise CliError(f"{known.config}: bad value for {key!r}: {err}") from None
        elif action.const is True:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = raw
        action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _flush_warnings(caught, stream=None) -> list:
    stream = sys.stderr if stream is None else stream
    counts = Counter(str(w.message) for w in caught)
    out = []
    for msg, n in counts.items():
        line = msg if n == 1 else f"{msg} (x{n})"
        out.append(line)
        print(f"warning: {line}", file=stream)
    return out


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_fit(args) -> int:
    frame = read_dataset(args.train_csv).to_frame(args.q)
    config = FitConfig(
        max_iters=args.max_iters,
        loglik_tol=args.loglik_tol,
        param_tol=args.param_tol,
        n_candidates=args.n_candidates,
        candidate_span=args.candidate_span,
        bootstrap_B=args.bootstrap_b,
        seed=args.seed,
        freeze_bandwidths_after=args.freeze_bandwidths_after,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit(frame, config)
    Path(args.out).write_text(serialize(model))

    messages = _flush_warnings(caught)
    report = {
        "model": str(args.out),
        "q": model.q,
        "members": list(model.member_names),
        "pi_star": model.pi_star.tolist(),
        "bandwidths": model.bandwidths.tolist(),
        "iterations": model.n_iter,
        "converged": model.converged,
        "final_loglik": float(model.fit_trace[-1]),
        "floored_likelihoods": model.floored,
        "constraint_fallbacks": [n for n, e in zip(model.member_names, model.emissions) if not e.constrained],
        "warnings": messages,
        "note": TRAINING_NOTE,
    }
    print(f"model written to {args.out}")
    print(f"iterations: {model.n_iter} ({'converged' if model.converged else 'NOT converged'})")
    print(f"final log-likelihood: {fmt(model.fit_trace[-1])}")
    width = max(len(n) for n in model.member_names)
    print("member".ljust(width), " pi_star             bandwidth")
    for name, w, e in zip(model.member_names, model.pi_star, model.emissions):
        flag = "" if e.constrained else "  (unconstrained fallback)"
        print(f"{name.ljust(width)}  {fmt(w):<20} {fmt(e.bandwidth)}{flag}")
    print(f"note: {TRAINING_NOTE}")
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=1) + "\n")
    caveat = not model.converged or report["constraint_fallbacks"]
    return EXIT_CAVEAT if caveat else EXIT_OK


def cmd_predict(args) -> int:
    try:
        model = deserialize(Path(args.model).read_text())
    except OSError as err:
        raise CliError(f"cannot read model {args.model}: {err.strerror}") from None
    data = read_dataset(args.future_csv, require_target=False)
    have, want = set(data.member_names), set(model.member_names)
    if have != want:
        parts = []
        if want - have:
            parts.append("missing: " + ", ".join(sorted(want - have)))
        if have - want:
            parts.append("extra: " + ", ".join(sorted(have - want)))
        raise CliError("member labels do not match the model (" + "; ".join(parts) + ")")
    preds = data.member_matrix(list(model.member_names))
    forecasts = [ensemble_quantile(model, ForecastInput(row, ts)) for ts, row in zip(data.timestamps, preds)]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_forecast(fh, forecasts)
    else:
        write_forecast(sys.stdout, forecasts)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    stamps, values, levels = read_forecast(args.forecast_csv)
    actual = read_dataset(args.actuals_csv, require_members=False)
    if stamps != actual.timestamps:
        raise CliError("forecast and actuals timestamps are misaligned")
    q = args.q
    if q is None:
        if levels is None or not np.all(levels == levels[0]):
            raise CliError("pass --q: forecast has no single level column value")
        q = float(levels[0])
    scores = [("ensemble", q_risk(actual.target, values, q))]
    if args.members:
        scores += [(f"m:{n}", q_risk(actual.target, actual.members[n], q)) for n in actual.member_names]
    n = len(stamps)
    if args.format == "json-lines":
        for name, v in scores:
            print(json.dumps({"metric": "q_risk", "q": q, "series": name, "value": v, "rows": n}))
    else:
        for name, v in scores:
            print(f"{name}: q-risk({q:g}) = {fmt(v)}")
        print(f"rows: {n}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.k < 1 or args.t < 1 or args.reps < 1:
        raise CliError("--k, --t and --reps must be positive integers")
    if args.seed < 0:
        raise CliError("--seed must be nonnegative")
    config = SimConfig.figure_setup(args.k, args.t, args.reps, args.tau, args.seed, args.spread)
    report = run_convergence_experiment(config)
    csv_path, side = report.write(args.out)
    s = report.summary()
    print(f"wrote {csv_path} and {side}")
    print(f"K={s['K']} T={s['T']} replications={s['replications']} tau={s['tau']:g}")
    print(f"theoretical limit: {fmt(s['limit'])}")
    print(f"mean empirical CDF at T: {fmt(s['terminal_mean'])}")
    print(f"terminal gap |mean F_T - limit|: {fmt(s['terminal_gap'])}")
    print(f"terminal mean |F_T - limit|: {fmt(s['terminal_abs_gap'])}")
    print(f"max |mean F_t - limit| for t >= 50: {fmt(s['max_gap_after_50'])}")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    path = Path(args.convergence_csv)
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as err:
        raise CliError(f"cannot read {path}: {err}") from None
    side = path.with_suffix(".json")
    limit = json.loads(side.read_text())["limit"] if side.exists() else float("nan")
    reps = np.unique(raw[:, 0]).size
    traj = raw[:, 2].reshape(reps, -1)
    lo, hi = np.percentile(traj, [2.5, 97.5], axis=0)
    mean = traj.mean(axis=0)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean", "band_lo", "band_hi", "limit"])
        for t in range(traj.shape[1]):
            w.writerow([t + 1, fmt(mean[t]), fmt(lo[t]), fmt(hi[t]), fmt(limit)])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "plot-data": cmd_plot_data,
}


def main(argv=None) -> int:
    try:
        parser = build_parser(_default_seed())
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except SystemExit as stop:
        # argparse exits on --help, --version and usage errors
        return stop.code if isinstance(stop.code, int) else EXIT_ERROR
    except (CliError, DataFileError, PtseError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
