"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import histogram, model_store, synthgen
from .decision import DecisionPolicy
from .errors import VolclassError
from .mlp import DEFAULT_HIDDEN, TrainingConfig
from .volume_io import open_volume, sidecar_path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threshold(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must be in [0, 1], got {text}")
    return value


def _thresholds(text: str):
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        out.append(None if part in ("", "none", "-") else _threshold(part))
    return out


def _add_volume_args(p):
    p.add_argument("volume", help="raw voxel file (sidecar <name>.meta unless overridden)")
    p.add_argument("--dims", help="nx,ny,nz")
    p.add_argument("--type", dest="vtype", help="u8, u16, i16 or f32")
    p.add_argument("--endian", choices=["little", "big"])
    p.add_argument("--spacing", help="sx,sy,sz")


def _add_policy_args(p):
    p.add_argument("--rest-class", action=argparse.BooleanOptionalAction, default=True,
                   help="let the model's rest-class output win (default: on)")
    p.add_argument("--threshold", type=_threshold, help="reject when the top output is below this")


def _add_training_args(p):
    p.add_argument("--learning-rate", type=float, default=TrainingConfig.learning_rate)
    p.add_argument("--momentum", type=float, default=TrainingConfig.momentum)
    p.add_argument("--max-epochs", type=int, default=TrainingConfig.max_epochs)
    p.add_argument("--mse-target", type=float, default=TrainingConfig.mse_target)
    p.add_argument("--seed", type=int, default=0)


def _load_volume(args):
    if not sidecar_path(args.volume).exists() and not (args.dims and args.vtype):
        raise UsageError(f"no sidecar {sidecar_path(args.volume)}; pass --dims and --type")
    overrides = {"dims": args.dims, "type": args.vtype, "endian": args.endian, "spacing": args.spacing}
    return open_volume(args.volume, **overrides)


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, indent=2) if getattr(args, "json", False) else text)


def cmd_histogram(args) -> int:
    vol = _load_volume(args)
    h = histogram.downscale(histogram.compute_histogram(vol, args.bins), args.reduce)
    if args.out is None and args.csv is None:
        raise UsageError("give --out (PGM) and/or --csv")
    if args.out:
        histogram.export_image(h, args.out)
    if args.csv:
        histogram.export_csv(h, args.csv)
    _emit(args, {"size": h.size, "intensity_range": list(h.intensity_range), "gmag_max": h.gmag_max},
          f"{h.size}x{h.size} histogram, intensity [{h.intensity_range[0]:g}, {h.intensity_range[1]:g}], "
          f"gradient max {h.gmag_max:g}")
    return EXIT_OK


def cmd_train(args) -> int:
    vol = _load_volume(args)
    path = Path(args.model)
    if path.exists():
        state = model_store.load(path)
        if args.label not in state.classes:
            model_store.add_class(state, args.label, seed=args.seed + len(state.classes), rest=args.rest)
        created = False
    else:
        state = model_store.create_state(
            [args.label], args.reduce, [args.hidden] + ([args.hidden2] if args.hidden2 else []),
            seed=args.seed, rest_class=args.label if args.rest else None,
        )
        created = True
    source_id = args.source_id or Path(args.volume).name
    sample = model_store.make_sample(state, state.features(vol), args.label, source_id)
    model_store.upsert_sample(state, sample)
    cfg = TrainingConfig(args.learning_rate, args.momentum, args.mse_target, args.max_epochs, args.seed)
    report = model_store.retrain(state, cfg)
    model_store.save(state, path)
    payload = {
        "model": str(path),
        "created": created,
        "classes": state.classes,
        "samples": len(state.samples),
        "epochs": report.epochs_run,
        "final_mse": report.final_mse,
        "converged": report.converged,
    }
    _emit(args, payload,
          f"epochs={report.epochs_run} final_mse={report.final_mse:.6f} converged={str(report.converged).lower()} "
          f"classes={len(state.classes)} samples={len(state.samples)}")
    return EXIT_OK


def cmd_classify(args) -> int:
    state = model_store.load(args.model)
    vol = _load_volume(args)
    res = state.classify_volume(vol, DecisionPolicy(args.rest_class, args.threshold))
    lines = [f"{name:>16}  {score:.6f}" for name, score in res.scores.items()]
    lines.append(f"chosen={res.chosen} confidence={res.confidence:.6f} rejected={str(res.rejected).lower()}")
    _emit(args, res.as_dict(), "\n".join(lines))
    return EXIT_OK


def cmd_classes(args) -> int:
    state = model_store.load(args.model)
    counts = {c: sum(s.label == c for s in state.samples) for c in state.classes}
    payload = {
        "classes": state.classes,
        "rest_class": state.registry.rest_name,
        "samples": counts,
        "reduction_factor": state.reduction_factor,
        "layer_sizes": state.network.layer_sizes,
    }
    lines = [
        f"{c}{' (rest)' if c == state.registry.rest_name else ''}: {counts[c]} sample(s)"
        for c in state.classes
    ]
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_eval(args) -> int:
    state = model_store.load(args.model)
    corpus = synthgen.read_corpus(args.corpus)
    if not corpus:
        raise UsageError(f"corpus {args.corpus} is empty")
    rows = []
    for th in args.thresholds:
        policy = DecisionPolicy(args.rest_class, th)
        rows.append((policy, synthgen.evaluate(state, corpus, policy)))
    csv_text = synthgen.grid_csv(rows)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    if args.json:
        payload = [
            {
                "rest_class": p.use_rest_class,
                "threshold": p.threshold,
                "labels": r.labels,
                "matrix": r.matrix.tolist(),
                "some_to_rest": r.some_to_rest,
                "rest_to_some": r.rest_to_some,
                "some_to_other_some": r.some_to_other_some,
                "mean_correct_output": r.mean_correct_output,
            }
            for p, r in rows
        ]
        print(json.dumps(payload, indent=2))
    else:
        print(synthgen.grid_table(rows))
        if args.matrix:
            for p, r in rows:
                print(f"\nthreshold={p.threshold}")
                print(r.table())
    return EXIT_OK


def _counts(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        name, _, n = part.partition("=")
        name = name.strip()
        if name not in synthgen.FAMILIES:
            raise argparse.ArgumentTypeError(f"unknown family {name!r}; choose from {synthgen.FAMILIES}")
        out[name] = int(n or 1)
    return out


def cmd_synth(args) -> int:
    corpus = synthgen.make_corpus(args.counts, (args.size,) * 3, args.jitter, args.seed, args.start)
    synthgen.write_corpus(corpus, args.out, args.type)
    _emit(args, {"out": str(args.out), "volumes": [c.name for c in corpus]},
          f"wrote {len(corpus)} volumes to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="volclass", description="Classify volume datasets by their 2D histograms.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("histogram", help="compute and export a volume's 2D histogram")
    _add_volume_args(p)
    p.add_argument("--bins", type=int, default=histogram.DEFAULT_BINS)
    p.add_argument("--reduce", type=int, default=0, help="power-of-two reduction factor")
    p.add_argument("--out", help="PGM image path")
    p.add_argument("--csv", help="raw counts CSV path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("train", help="add/update a labeled sample and retrain on all samples")
    p.add_argument("--model", "-m", required=True)
    _add_volume_args(p)
    p.add_argument("--label", required=True)
    p.add_argument("--rest", action="store_true", help="register the label as the rest class")
    p.add_argument("--source-id", help="sample identity (default: volume file name)")
    p.add_argument("--reduce", type=int, default=histogram.DEFAULT_REDUCTION,
                   help="reduction factor for a newly created model")
    p.add_argument("--hidden", type=int, default=DEFAULT_HIDDEN)
    p.add_argument("--hidden2", type=int, help="size of an optional second hidden layer")
    _add_training_args(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify a volume")
    p.add_argument("--model", "-m", required=True)
    _add_volume_args(p)
    _add_policy_args(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("classes", help="list the model's classes")
    p.add_argument("--model", "-m", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_classes)

    p = sub.add_parser("eval", help="confusion counts over a labeled corpus for a threshold grid")
    p.add_argument("--model", "-m", required=True)
    p.add_argument("corpus", help="directory written by 'synth' (labels.csv manifest)")
    p.add_argument("--rest-class", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--thresholds", type=_thresholds, default=[None, 0.5, 0.7, 0.9],
                   help="comma list, 'none' for no threshold (default: none,0.5,0.7,0.9)")
    p.add_argument("--csv", help="write the grid as CSV")
    p.add_argument("--matrix", action="store_true", help="print full confusion matrices")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic labeled corpus")
    p.add_argument("out")
    p.add_argument("--counts", type=_counts, default=_counts("blob=10,shell=10,ramp=10,noise=10,checker=10"),
                   help="family=count list, e.g. blob=10,noise=5")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--jitter", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=int, default=0, help="first instance index")
    p.add_argument("--type", default="u16", choices=["u8", "u16", "i16", "f32"])
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"volclass: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VolclassError as exc:
        print(f"volclass: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        print(f"volclass: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"volclass: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
