"""Command line: `woi-surrogate train --config cfg.json` and
`woi-surrogate eval --model m.pt --points p.csv [--truth name]`."""

import argparse
import json
import sys

from .data import ColumnMismatchError
from .evaluate import evaluate
from .train import NanLossError, TrainConfig, train


def _parser():
    p = argparse.ArgumentParser(prog="woi-surrogate", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="fit the MLP on solver-emitted CSVs")
    pt.add_argument("--config", required=True, help="JSON training config")

    pe = sub.add_parser("eval", help="score a trained model on a points CSV")
    pe.add_argument("--model", required=True)
    pe.add_argument("--points", required=True)
    pe.add_argument("--truth", help="named reference solution")
    pe.add_argument("--truth-params", help="JSON dict of truth parameters")
    pe.add_argument("--out", help="write metrics JSON here (default: stdout)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "train":
            with open(args.config) as fh:
                cfg = TrainConfig.from_dict(json.load(fh))
            report = train(cfg)
            print(json.dumps({k: v for k, v in report.items() if k != "loss_curve"}, indent=2))
        else:
            params = json.loads(args.truth_params) if args.truth_params else None
            metrics = evaluate(args.model, args.points, args.truth, params)
            text = json.dumps(metrics, indent=2)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text)
            print(text)
    except (ColumnMismatchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NanLossError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
