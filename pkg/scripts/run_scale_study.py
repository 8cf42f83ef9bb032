#!/usr/bin/env python3
"""Data-scaling study: how much does a representation drift from its
reference-size counterpart as pre-training data grows (1x / 2x / 4x / 6x),
and what happens to probe errors.
"""

import argparse
import json
import sys
from pathlib import Path

from repsim.cli import dispatch

SIZES = (1, 2, 4, 6)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/scale_study")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--models", default="apc-fw-rnn,cpc-within_spk-rnn")
    parser.add_argument("--hidden", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--base-utts", type=int, default=8,
                        help="utterances per speaker in the 1x corpus")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = str(args.seed)

    manifests = []
    for factor in SIZES:
        config = out / f"config_{factor}x.json"
        config.write_text(
            json.dumps(
                {
                    "corpus.num_speakers": 8,
                    "corpus.utterances_per_speaker": args.base_utts * factor,
                },
                indent=2,
            )
        )
        corpus_dir = out / f"{factor}x"
        code = dispatch(["synth-corpus", "--config", str(config),
                         "--seed", seed, "--out", str(corpus_dir)])
        if code:
            return code
        manifests.append(str(corpus_dir / "manifest.jsonl"))

    return dispatch(
        ["scale-study", "--seed", seed,
         "--manifests", ",".join(manifests),
         "--reference", manifests[0],
         "--probe-manifest", manifests[0],
         "--models", args.models, "--hidden", str(args.hidden),
         "--epochs", str(args.epochs), "--out", str(out / "tables")]
    )


if __name__ == "__main__":
    sys.exit(main())
