"""Regenerate the bundled CSV fixtures and golden CLI outputs.

Run from the repository root::

    python3 scripts/make_fixtures.py            # fixtures + golden files
    python3 scripts/make_fixtures.py --no-golden

Golden files are produced with the numba backend; rerunning with
``PTSE_DISABLE_NUMBA=1`` may differ in the last bits.
"""

from __future__ import annotations

import argparse
import contextlib
import io
from pathlib import Path

import numpy as np

from ptse import cli
from ptse.io import hourly_timestamps, write_dataset
from ptse.simulator import regime_switching_frame

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"
GOLDEN = ROOT / "tests" / "golden"

TOY = {
    "toy_k2": dict(A=[[0.9, 0.1], [0.2, 0.8]], offsets=[-1.5, 1.5], noise_std=0.6, T=160, seed=11),
    "toy_k3": dict(A=[[0.8, 0.15, 0.05], [0.1, 0.7, 0.2], [0.2, 0.2, 0.6]], offsets=[-3.0, 0.0, 3.0], noise_std=0.7, T=240, seed=12),
}
TOY_Q = 0.5
TOY_FUTURE = 12

# Two complementary members, each exact in one hidden regime.
REGIME = dict(A=[[0.55, 0.45], [0.45, 0.55]], offsets=[-2.0, 2.0], noise_std=1.0, seed=2024)
REGIME_TRAIN, REGIME_TEST = 600, 300


def seasonal_level(T: int) -> np.ndarray:
    t = np.arange(T)
    return 10.0 + 3.0 * np.sin(2 * np.pi * t / 24)


def _members(frame):
    return {n: frame.member_predictions[:, k] for k, n in enumerate(frame.member_names)}


def make_toys():
    for name, p in TOY.items():
        n = p["T"] + TOY_FUTURE
        frame, _ = regime_switching_frame(
            p["A"], p["offsets"], p["noise_std"], TOY_Q, n, p["seed"], level=seasonal_level(n)
        )
        stamps = hourly_timestamps(n)
        members = _members(frame)
        T = p["T"]
        write_dataset(FIXTURES / f"{name}.csv", stamps[:T], frame.targets[:T], {k: v[:T] for k, v in members.items()})
        write_dataset(FIXTURES / f"{name}_future.csv", stamps[T:], None, {k: v[T:] for k, v in members.items()})
        write_dataset(FIXTURES / f"{name}_actuals.csv", stamps[T:], frame.targets[T:], {k: v[T:] for k, v in members.items()})


def make_regime():
    n = REGIME_TRAIN + REGIME_TEST
    stamps = hourly_timestamps(n)
    for q in (0.5, 0.9):
        # Same seed for both levels: identical targets, members differ only by the quantile shift.
        frame, _ = regime_switching_frame(
            REGIME["A"], REGIME["offsets"], REGIME["noise_std"], q, n, REGIME["seed"], level=seasonal_level(n)
        )
        members = _members(frame)
        tag = f"q{int(round(q * 100))}"
        cut = REGIME_TRAIN
        write_dataset(FIXTURES / f"regime_{tag}_train.csv", stamps[:cut], frame.targets[:cut], {k: v[:cut] for k, v in members.items()})
        write_dataset(FIXTURES / f"regime_{tag}_test.csv", stamps[cut:], frame.targets[cut:], {k: v[cut:] for k, v in members.items()})


def make_bad():
    (FIXTURES / "bad_cell.csv").write_text(
        "timestamp,y,m:a,m:b\n"
        "2024-01-01T00:00:00,1.0,0.5,1.5\n"
        "2024-01-01T01:00:00,1.2,abc,1.4\n"
        "2024-01-01T02:00:00,0.9,0.6,1.3\n"
    )
    (FIXTURES / "unordered.csv").write_text(
        "timestamp,y,m:a,m:b\n"
        "2024-01-01T01:00:00,1.0,0.5,1.5\n"
        "2024-01-01T00:00:00,1.2,0.7,1.4\n"
    )
    (FIXTURES / "wrong_labels_future.csv").write_text(
        "timestamp,m:regime0,m:other\n"
        "2024-02-01T00:00:00,0.1,0.2\n"
    )


def run_cli(argv) -> tuple[int, str]:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli.main([str(a) for a in argv])
    return code, buf.getvalue()


def golden_fit_argv(name: str, out: Path):
    return ["fit", FIXTURES / f"{name}.csv", "--q", TOY_Q, "--out", out, "--seed", 0]


def make_golden():
    for name in TOY:
        model = GOLDEN / f"{name}_model.json"
        code, _ = run_cli(golden_fit_argv(name, model))
        assert code == 0, f"fit {name}: exit {code}"
        forecast = GOLDEN / f"{name}_forecast.csv"
        code, _ = run_cli(["predict", model, FIXTURES / f"{name}_future.csv", "--out", forecast])
        assert code == 0, code
        code, text = run_cli(["evaluate", forecast, FIXTURES / f"{name}_actuals.csv", "--format", "json-lines", "--members"])
        assert code == 0, code
        (GOLDEN / f"{name}_evaluate.jsonl").write_text(text)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--no-golden", action="store_true")
    args = ap.parse_args(argv)
    FIXTURES.mkdir(parents=True, exist_ok=True)
    GOLDEN.mkdir(parents=True, exist_ok=True)
    make_toys()
    make_regime()
    make_bad()
    if not args.no_golden:
        make_golden()


if __name__ == "__main__":
    main()
