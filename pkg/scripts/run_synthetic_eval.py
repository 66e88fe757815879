#!/usr/bin/env python3
"""Ten-fold clone-detection evaluation on the built-in synthetic corpus.

Generates clone classes from the bundled base methods, runs the chosen
detector through the cross-validation harness, and prints the metrics
report as JSON.  Progress notes go to stderr so stdout stays parseable.

Typical runs:

    python3 scripts/run_synthetic_eval.py                       # cosine, full
    python3 scripts/run_synthetic_eval.py --fast                # 1-epoch smoke
    python3 scripts/run_synthetic_eval.py --no-train-encoder    # frozen ablation
    python3 scripts/run_synthetic_eval.py --detector classifier --out report.json
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from clonecat.bench import (
    PipelineConfig,
    SynthSpec,
    builtin_base_methods,
    evaluate,
    make_folds,
    synth_clones,
)
from clonecat.embed import EmbedConfig
from clonecat.train import FineTuneConfig, PretrainConfig


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--detector", choices=("cosine", "classifier", "overlap"),
                        default="cosine")
    parser.add_argument("--threshold", type=float, default=0.7)
    parser.add_argument("--folds", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--t1", type=int, default=3, help="T1 variants per class")
    parser.add_argument("--t2", type=int, default=3, help="T2 variants per class")
    parser.add_argument("--t3", type=int, default=3, help="T3 variants per class")
    parser.add_argument("--no-train-encoder", action="store_true",
                        help="keep the randomly initialised encoder (ablation)")
    parser.add_argument("--fast", action="store_true",
                        help="1-epoch configs everywhere; smoke runs only")
    parser.add_argument("--out", type=Path, default=None,
                        help="also write the report JSON here")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    spec = SynthSpec(n_t1=args.t1, n_t2=args.t2, n_t3=args.t3, seed=args.seed)
    dataset = synth_clones(builtin_base_methods(), spec)
    positives = sum(1 for p in dataset.pairs if p.label == 1)
    print(f"corpus: {len(dataset.methods)} methods, {len(dataset.pairs)} pairs "
          f"({positives} positive)", file=sys.stderr)

    config = PipelineConfig(
        detector=args.detector,
        threshold=args.threshold,
        train_encoder=not args.no_train_encoder,
        seed=args.seed,
    )
    if args.fast:
        config.embed = EmbedConfig(epochs=1, seed=args.seed)
        config.pretrain = PretrainConfig(epochs=1, seed=args.seed)
        config.finetune = FineTuneConfig(epochs=1, seed=args.seed)

    folds = make_folds(dataset, seed=args.seed, n_folds=args.folds)
    started = time.perf_counter()
    report = evaluate(dataset, folds, config)
    elapsed = time.perf_counter() - started
    print(f"evaluated {args.folds} folds in {elapsed:.1f}s: "
          f"precision {report.precision:.3f}, recall {report.recall:.3f}, "
          f"f1 {report.f1:.3f}", file=sys.stderr)

    payload = report.to_json()
    print(payload)
    if args.out is not None:
        args.out.write_text(payload + "\n")
        print(f"report written to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
