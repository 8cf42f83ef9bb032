#!/usr/bin/env python3
"""End-to-end demo: synthesize a corpus, pre-train a model grid, render the
pairwise similarity heatmap (with the raw log-Mel surface row included).

Sized to finish in a few minutes on a laptop; pass --full for the nine-model
grid at the cost of a longer run.
"""

import argparse
import json
import sys
from pathlib import Path

from repsim.cli import dispatch

SMALL_GRID = "apc-fw-rnn,mpc-birnn,cpc-mixed_spk-rnn,cpc-within_spk-rnn"
FULL_GRID = (
    "apc-fw-rnn,apc-fw+bw-rnn,apc-fw-trf,apc-fw+bw-trf,"
    "mpc-birnn,mpc-trf,cpc-mixed_spk-rnn,cpc-within_spk-rnn,cpc-within_spk-cnn"
)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/similarity_grid")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--measure", choices=["lincka", "svcca"], default="lincka")
    parser.add_argument("--full", action="store_true", help="all nine models")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = out / "config.json"
    config.write_text(
        json.dumps(
            {
                "corpus.num_speakers": 20,
                "corpus.utterances_per_speaker": 30,
                "corpus.noise_sigma": 1.5,
                "corpus.prototype_scale": 1.0,
                "corpus.speaker_offset_scale": 0.5,
                "corpus.gain_jitter": 0.05,
                "corpus.self_loop": 0.75,
            },
            indent=2,
        )
    )
    models = FULL_GRID if args.full else SMALL_GRID
    seed = str(args.seed)

    steps = [
        ["synth-corpus", "--config", str(config), "--seed", seed,
         "--out", str(out / "corpus")],
        ["pretrain", "--config", str(config), "--seed", seed,
         "--manifest", str(out / "corpus/manifest.jsonl"),
         "--models", models, "--hidden", str(args.hidden),
         "--epochs", str(args.epochs), "--out", str(out / "models")],
    ]
    for step in steps:
        code = dispatch(step)
        if code:
            return code

    checkpoints = ",".join(
        str(sorted((out / "models" / name).glob("*.ckpt"))[-1])
        for name in models.split(",")
    )
    return dispatch(
        ["similarity", "--config", str(config), "--seed", seed,
         "--manifest", str(out / "corpus/manifest.jsonl"),
         "--checkpoints", checkpoints, "--include-surface",
         "--measure", args.measure, "--max-frames", "5000",
         "--out", str(out / "heatmap")]
    )


if __name__ == "__main__":
    sys.exit(main())
