#!/usr/bin/env python3
"""Wall-clock comparison of the clone detectors on one synthetic corpus.

Times each detector over the same pair list and prints a small table:
mean seconds per sweep, plus the one-off training cost where a detector
needs a trained model.  JSON output (--json) mirrors the table.

    python3 scripts/time_detectors.py --runs 3 --jobs 4
    python3 scripts/time_detectors.py --fast --json
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from clonecat.bench import SynthSpec, builtin_base_methods, synth_clones, time_detection
from clonecat.detect import (
    CategoryWeights,
    ClassifierDetector,
    CosineDetector,
    OverlapDetector,
    WeightedOverlapDetector,
)
from clonecat.embed import EmbedConfig, train_word2vec
from clonecat.lexcat import category_order
from clonecat.train import FineTuneConfig, PretrainConfig, finetune, init_head, pretrain


def uniform_weights() -> CategoryWeights:
    return CategoryWeights(np.full(len(category_order()), 1.0 / len(category_order())))


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--runs", type=int, default=3)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--threshold", type=float, default=0.7)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--t1", type=int, default=1, help="T1 variants per class")
    parser.add_argument("--t2", type=int, default=1, help="T2 variants per class")
    parser.add_argument("--t3", type=int, default=1, help="T3 variants per class")
    parser.add_argument("--fast", action="store_true",
                        help="1-epoch training; timings reflect inference only anyway")
    parser.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    spec = SynthSpec(n_t1=args.t1, n_t2=args.t2, n_t3=args.t3, seed=args.seed)
    dataset = synth_clones(builtin_base_methods(), spec)
    print(f"corpus: {len(dataset.methods)} methods, {len(dataset.pairs)} pairs; "
          f"{args.runs} runs, jobs={args.jobs}", file=sys.stderr)

    embed_cfg = EmbedConfig(seed=args.seed, epochs=1 if args.fast else EmbedConfig().epochs)
    pre_cfg = PretrainConfig(seed=args.seed, epochs=1 if args.fast else PretrainConfig().epochs)
    fine_cfg = FineTuneConfig(seed=args.seed, epochs=1 if args.fast else FineTuneConfig().epochs)

    trained = time.perf_counter()
    table = train_word2vec(list(dataset.streams.values()), embed_cfg)
    pretrained = pretrain(dataset, table, pre_cfg)
    encoder_s = time.perf_counter() - trained

    trained = time.perf_counter()
    tuned = finetune(pretrained.params, init_head(fine_cfg.layers, seed=args.seed),
                     dataset, table, fine_cfg)
    finetune_s = time.perf_counter() - trained

    detectors = [
        (OverlapDetector(threshold=args.threshold), None),
        (WeightedOverlapDetector(uniform_weights(), threshold=args.threshold), None),
        (CosineDetector(pretrained.params, table, threshold=args.threshold), encoder_s),
        (ClassifierDetector(tuned.params, tuned.head, table), encoder_s + finetune_s),
    ]

    rows = []
    for detector, training_s in detectors:
        report = time_detection(dataset, detector, runs=args.runs, jobs=args.jobs,
                                training_s=training_s)
        rows.append((detector.name, report))
        print(f"timed {detector.name}: mean {report.mean_s:.3f}s", file=sys.stderr)

    if args.json:
        print(json.dumps({name: report.to_json() for name, report in rows},
                         indent=2, sort_keys=True))
    else:
        print(f"{'detector':<18} {'mean_s':>8}  {'training_s':>10}")
        for name, report in rows:
            cost = f"{report.training_s:.2f}" if report.training_s is not None else "-"
            print(f"{name:<18} {report.mean_s:>8.3f}  {cost:>10}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
