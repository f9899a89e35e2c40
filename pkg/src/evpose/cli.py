"""Command line interface.

Subcommands: ``convert`` (events -> PGM event images + index CSV),
``synth`` (scene config -> dataset), ``train``, ``eval``, ``robustness``
and ``fetch`` (download dataset text files from a URL manifest).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import urllib.request

from . import evaluation, pipeline, synth
from .errors import DataError, NumericError
from .event_image import image_from_window, write_pgm
from .events import parse_events, parse_poses, split_novel, split_random, window_events


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_windows(events_path, poses_path, sensor_w, sensor_h):
    with open(events_path, "r", encoding="utf-8") as f:
        events = parse_events(f, sensor_w, sensor_h)
    with open(poses_path, "r", encoding="utf-8") as f:
        poses = parse_poses(f)
    return window_events(events, poses)


def _split(windows, kind, fraction, seed):
    if kind == "novel":
        return split_novel(windows, fraction)
    return split_random(windows, fraction, seed)


def _cmd_convert(args) -> int:
    windows, skipped = _load_windows(args.events, args.poses, args.width, args.height)
    os.makedirs(args.out, exist_ok=True)
    index_path = os.path.join(args.out, "index.csv")
    with open(index_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["sequence_index", "pgm", "n_events", "t", "px", "py", "pz", "qx", "qy", "qz", "qw"]
        )
        for window in windows:
            image = image_from_window(window, args.height, args.width, fraction=args.fraction)
            name = f"window_{window.sequence_index:06d}.pgm"
            write_pgm(image, os.path.join(args.out, name))
            label = window.label
            writer.writerow(
                [window.sequence_index, name, len(window.events), repr(label.t)]
                + [repr(v) for v in label.p.tolist()]
                + [repr(v) for v in label.q.tolist()]
            )
    print(f"wrote {len(windows)} event images to {args.out} ({skipped} empty intervals skipped)")
    return 0


def _cmd_synth(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        config = synth.SceneConfig.from_json(f.read())
    events_path, poses_path = synth.write_dataset(config, args.out)
    with open(poses_path, "r", encoding="utf-8") as f:
        n_poses = sum(1 for _ in f)
    with open(events_path, "r", encoding="utf-8") as f:
        n_events = sum(1 for _ in f)
    print(f"wrote {n_events} events and {n_poses} poses to {args.out}")
    return 0


def _cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        config = pipeline.TrainConfig.from_json(f.read())
    windows, skipped = _load_windows(
        os.path.join(args.data, "events.txt"),
        os.path.join(args.data, "groundtruth.txt"),
        config.model.input_w,
        config.model.input_h,
    )
    train_windows, test_windows = _split(
        windows, config.split, config.split_fraction, config.seed
    )
    print(
        f"{len(windows)} windows ({skipped} empty intervals skipped); "
        f"training on {len(train_windows)}, holding out {len(test_windows)}"
    )
    ckpt = pipeline.train(config, train_windows)
    pipeline.save_checkpoint(ckpt, args.out)
    print(
        f"trained {config.epochs} epochs: loss {ckpt.loss_history[0]:.4f} -> "
        f"{ckpt.loss_history[-1]:.4f}; checkpoint saved to {args.out}"
    )
    return 0


def _test_windows_for_eval(args, ckpt):
    cfg = ckpt.params.config
    windows, _ = _load_windows(
        os.path.join(args.data, "events.txt"),
        os.path.join(args.data, "groundtruth.txt"),
        cfg.input_w,
        cfg.input_h,
    )
    _, test_windows = _split(windows, args.split, args.fraction, args.seed)
    return test_windows


def _cmd_eval(args) -> int:
    ckpt = pipeline.load_checkpoint(args.ckpt)
    test_windows = _test_windows_for_eval(args, ckpt)
    report = evaluation.evaluate(ckpt.params, test_windows)
    json_path = args.out if args.out.endswith(".json") else args.out + ".json"
    csv_path = os.path.splitext(json_path)[0] + ".csv"
    with open(json_path, "w", encoding="utf-8") as f:
        f.write(report.to_json() + "\n")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(report.to_csv())
    print(
        f"median position {report.position.median:.4f} m, "
        f"median orientation {report.orientation.median:.4f} deg over "
        f"{report.position.n} windows; wrote {json_path} and {csv_path}"
    )
    return 0


def _cmd_robustness(args) -> int:
    ckpt = pipeline.load_checkpoint(args.ckpt)
    test_windows = _test_windows_for_eval(args, ckpt)
    table = evaluation.robustness_experiment(ckpt.params, test_windows)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(table.to_csv())
    json_path = os.path.splitext(args.out)[0] + ".json"
    with open(json_path, "w", encoding="utf-8") as f:
        f.write(table.to_json() + "\n")
    print(f"wrote {len(table.rows)} fraction rows to {args.out} and {json_path}")
    return 0


def _cmd_fetch(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    files = manifest.get("files")
    if not isinstance(files, list) or not files:
        raise DataError("manifest must contain a non-empty 'files' list")
    os.makedirs(args.out, exist_ok=True)
    for entry in files:
        url = entry.get("url")
        if not url:
            raise DataError("manifest entry missing 'url'")
        name = entry.get("name") or os.path.basename(url.split("?", 1)[0])
        if not name:
            raise DataError(f"cannot derive a filename from {url!r}")
        with urllib.request.urlopen(url) as response:
            data = response.read()
        if "length" in entry and len(data) != int(entry["length"]):
            raise DataError(
                f"{name}: expected {entry['length']} bytes, got {len(data)}"
            )
        if "sha256" in entry:
            digest = hashlib.sha256(data).hexdigest()
            if digest != str(entry["sha256"]).lower():
                raise DataError(f"{name}: sha256 mismatch")
        dest = os.path.join(args.out, name)
        with open(dest, "wb") as f:
            f.write(data)
        print(f"fetched {name} ({len(data)} bytes)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evpose", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[], help="emit event images as PGM + index CSV")
    p.add_argument("--events", required=True, help="events text file")
    p.add_argument("--poses", required=True, help="groundtruth text file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fraction", type=float, default=1.0, help="newest fraction of events per window")
    p.add_argument("--width", type=int, default=240, help="sensor width in pixels")
    p.add_argument("--height", type=int, default=180, help="sensor height in pixels")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a scene config")
    p.add_argument("--config", required=True, help="scene config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True, help="directory with events.txt and groundtruth.txt")
    p.add_argument("--config", required=True, help="train config JSON")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=_cmd_train)

    for name, fn, out_help in (
        ("eval", _cmd_eval, "report path (.json; a .csv sibling is written too)"),
        ("robustness", _cmd_robustness, "table path (.csv; a .json sibling is written too)"),
    ):
        p = sub.add_parser(name, help=f"{name} a checkpoint on a dataset's test split")
        p.add_argument("--ckpt", required=True, help="checkpoint path")
        p.add_argument("--data", required=True, help="directory with events.txt and groundtruth.txt")
        p.add_argument("--split", choices=("random", "novel"), default="random")
        p.add_argument("--seed", type=int, default=0, help="random-split seed")
        p.add_argument("--fraction", type=float, default=0.7, help="train fraction of the split")
        p.add_argument("--out", required=True, help=out_help)
        p.set_defaults(func=fn)

    p = sub.add_parser("fetch", help="download dataset text files from a URL manifest")
    p.add_argument("--manifest", required=True, help="JSON manifest with a 'files' list")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fetch)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, OSError) as exc:
        print(f"evpose: data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"evpose: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
