#!/usr/bin/env python3
"""Loss-vs-probe-error correlation across a checkpoint sweep.

Trains the comparison models with checkpoints at the burn-in + evenly-spaced
cadence, probes every checkpoint (phone frame error, speaker utterance
error, each a 5-run mean), and reports Pearson r with significance.
"""

import argparse
import json
import sys
from pathlib import Path

from repsim.cli import dispatch


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/sweep")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--models", default="apc-fw-rnn")
    parser.add_argument("--hidden", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=10)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = out / "config.json"
    config.write_text(
        json.dumps(
            {
                "corpus.num_speakers": 10,
                "corpus.utterances_per_speaker": 20,
                "sweep.checkpoints": 15,
                "sweep.burn_in": 0.1,
                "probe.runs": 5,
            },
            indent=2,
        )
    )
    seed = str(args.seed)
    code = dispatch(["synth-corpus", "--config", str(config), "--seed", seed,
                     "--out", str(out / "corpus")])
    if code:
        return code
    return dispatch(
        ["sweep-correlate", "--config", str(config), "--seed", seed,
         "--manifest", str(out / "corpus/manifest.jsonl"),
         "--models", args.models, "--hidden", str(args.hidden),
         "--epochs", str(args.epochs), "--out", str(out / "correlation")]
    )


if __name__ == "__main__":
    sys.exit(main())
