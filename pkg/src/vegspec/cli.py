"""Command-line entry point: synth, split, train, evaluate, compare, interpret.

Exit status:
  0  success
  1  unexpected internal error
  2  usage error (bad or missing flags, out-of-range flag values)
  3  input file missing or unreadable
  4  invalid input data (malformed library or model file, unusable labels)
  5  dimension mismatch between a model and a library
  6  numerical failure (non-finite training loss, singular covariance)
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from vegspec import __version__
from vegspec import classifiers, interpret, net as nnet, spectra, synth

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_DATA = 4
EXIT_DIMENSION = 5
EXIT_NUMERIC = 6

EXIT_HELP = """exit status:
  0 success, 1 internal error, 2 usage error, 3 input file missing/unreadable,
  4 invalid input data, 5 model/library dimension mismatch, 6 numerical failure"""


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single-line diagnostic, exit 2
        raise CliError(EXIT_USAGE, f"usage error: {message}")


# --------------------------------------------------------------------------- helpers


class Outputs:
    """Stages output files in memory and publishes them all at once.

    Each file is written to a temporary sibling and renamed into place only
    after every temporary has been written, so a failed run leaves no partial
    outputs behind.
    """

    def __init__(self) -> None:
        self.files: Dict[Path, bytes] = {}

    def add(self, path, content) -> None:
        if isinstance(content, str):
            content = content.encode("utf-8")
        self.files[Path(path)] = content

    def commit(self) -> None:
        staged: List[tuple] = []
        try:
            for path, data in self.files.items():
                path.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                staged.append((tmp, path))
        except OSError as exc:
            for tmp, _ in staged:
                _unlink(tmp)
            raise CliError(EXIT_INTERNAL, f"cannot write outputs: {exc}") from None
        for tmp, path in staged:
            os.replace(tmp, path)


def _unlink(path) -> None:
    try:
        os.unlink(path)
    except OSError:
        pass


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise CliError(EXIT_DATA, f"{path} is not UTF-8 text") from None


def _load_library(path: str, label_key: str = "species") -> spectra.SpectralLibrary:
    text = _read_text(path)
    try:
        return spectra.parse_library(text, label_key)
    except ValueError as exc:
        raise CliError(EXIT_DATA, f"{path}: {exc}") from None


def _load_model(path: str) -> nnet.DenseNet:
    text = _read_text(path)
    try:
        return nnet.model_from_json(text)
    except (ValueError, TypeError) as exc:
        raise CliError(EXIT_DATA, f"{path}: invalid model file: {exc}") from None


def _check_dims(model: nnet.DenseNet, lib: spectra.SpectralLibrary, what: str) -> None:
    D = model.W1.shape[1]
    if lib.n_bands != D:
        raise CliError(
            EXIT_DIMENSION,
            f"dimension mismatch: model expects D={D} bands but {what} has D={lib.n_bands}",
        )
    if lib.grid != model.grid:
        raise CliError(EXIT_DIMENSION, f"dimension mismatch: {what} wavelength grid differs from the model's")


def _encode_against(model_index: spectra.ClassIndex, lib: spectra.SpectralLibrary, what: str) -> np.ndarray:
    labels = lib.labels()
    unknown = sorted(set(labels) - set(model_index.labels))
    if unknown:
        raise CliError(EXIT_DATA, f"{what} has labels unknown to the model: {', '.join(unknown)}")
    return np.array([model_index.index(label) for label in labels], dtype=np.int64)


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _manifest(command: str, params: dict, inputs: Sequence[str], outputs: Sequence[Path],
              seed: Optional[int], started: str, extra: Optional[dict] = None) -> str:
    doc = {
        "subcommand": command,
        "tool_version": __version__,
        "parameters": params,
        "inputs": list(inputs),
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "started": started,
        "finished": _timestamp(),
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1) + "\n"


def _txt_sibling(path: str) -> Path:
    p = Path(path)
    return p.with_suffix(".txt") if p.suffix and p.suffix != ".txt" else Path(str(p) + ".txt")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _int_at_least(lo: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v
    return parse


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v >= 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a non-negative finite number, got {text}")
    return v


def _fraction(text: str) -> float:
    v = _positive_float(text)
    if v >= 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return v


# --------------------------------------------------------------------------- subcommands


def cmd_synth(args) -> Outputs:
    started = _timestamp()
    spec = synth.SynthSpec(
        n_classes=args.classes,
        per_class=args.per_class,
        grid=spectra.WavelengthGrid.uniform(400.0, 2500.0, args.bands),
        noise_sigma=args.noise,
        features_per_class=args.features,
        seed=args.seed,
    )
    lib = synth.generate_library(spec)
    out = Outputs()
    out.add(args.out, spectra.serialize_library(lib))
    if args.templates:
        out.add(args.templates, synth.templates_to_json(lib))
    params = dict(classes=args.classes, per_class=args.per_class, bands=args.bands,
                  noise=args.noise, features=args.features)
    out.add(str(args.out) + ".manifest.json",
            _manifest("synth", params, [], list(out.files), args.seed, started))
    return out


def cmd_split(args) -> Outputs:
    started = _timestamp()
    lib = _load_library(args.inp, args.label_key)
    try:
        train, test = spectra.stratified_split(lib, args.train_frac, args.seed)
    except ValueError as exc:
        raise CliError(EXIT_DATA, f"{args.inp}: {exc}") from None
    out = Outputs()
    out.add(args.out_train, spectra.serialize_library(train))
    out.add(args.out_test, spectra.serialize_library(test))
    params = dict(train_frac=args.train_frac, label_key=args.label_key,
                  n_train=len(train), n_test=len(test))
    out.add(str(args.out_train) + ".manifest.json",
            _manifest("split", params, [args.inp], list(out.files), args.seed, started))
    return out


def cmd_train(args) -> Outputs:
    started = _timestamp()
    lib = _load_library(args.train, args.label_key)
    cfg = nnet.TrainConfig(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
        optimizer=args.optimizer, seed=args.seed, hidden_size=args.hidden,
    )
    t0 = time.perf_counter()
    try:
        model, history = nnet.train(lib, cfg)
    except nnet.TrainingError as exc:
        raise CliError(EXIT_NUMERIC, f"training failed: {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_DATA, f"{args.train}: {exc}") from None
    elapsed = time.perf_counter() - t0
    out = Outputs()
    out.add(args.out, nnet.model_to_json(model))
    out.add(args.history, history.to_csv())
    params = cfg.to_dict()
    params["label_key"] = args.label_key
    out.add(str(args.out) + ".manifest.json",
            _manifest("train", params, [args.train], list(out.files), args.seed, started,
                      {"wall_time_s": round(elapsed, 3),
                       "final_train_accuracy": history.records[-1].accuracy}))
    return out


def cmd_evaluate(args) -> Outputs:
    started = _timestamp()
    model = _load_model(args.model)
    lib = _load_library(args.test, model.label_key)
    _check_dims(model, lib, f"test library {args.test}")
    y = _encode_against(model.class_index, lib, f"test library {args.test}")
    t0 = time.perf_counter()
    pred = nnet.predict(model, lib.reflectance)
    elapsed = round(time.perf_counter() - t0, 3)
    labels = model.class_index.labels
    report = classifiers.evaluate(pred, y, len(labels), elapsed)

    # Wall time is kept out of the metrics file so that it stays reproducible;
    # it is recorded in the manifest instead.
    metrics = report.to_dict(labels)
    out = Outputs()
    out.add(args.metrics, json.dumps(metrics, indent=1) + "\n")
    width = len("balanced_accuracy")
    text = [f"{'n':<{width}}  {int(report.confusion.sum())}",
            f"{'accuracy':<{width}}  {report.accuracy:.4f}",
            f"{'balanced_accuracy':<{width}}  {report.balanced_accuracy:.4f}",
            f"{'f1_weighted':<{width}}  {report.weighted_f1:.4f}"]
    out.add(_txt_sibling(args.metrics), "\n".join(text) + "\n")
    conf = ["truth/predicted," + ",".join(labels)]
    conf += [f"{label}," + ",".join(str(int(v)) for v in row)
             for label, row in zip(labels, report.confusion)]
    out.add(args.confusion, "\n".join(conf) + "\n")
    out.add(str(args.metrics) + ".manifest.json",
            _manifest("evaluate", {}, [args.model, args.test], list(out.files), None, started,
                      {"wall_time_s": elapsed}))
    return out


def cmd_compare(args) -> Outputs:
    started = _timestamp()
    kinds = [k.strip() for k in args.models.split(",") if k.strip()]
    valid = {k.value for k in classifiers.BaselineKind}
    bad = [k for k in kinds if k not in valid]
    if bad or not kinds:
        raise CliError(EXIT_USAGE, f"usage error: unknown model(s) {', '.join(bad) or '(none)'}; "
                                   f"choose from {','.join(sorted(valid))}")
    train = _load_library(args.train, args.label_key)
    test = _load_library(args.test, args.label_key)
    if train.grid != test.grid:
        raise CliError(EXIT_DIMENSION, f"dimension mismatch: train D={train.n_bands}, test D={test.n_bands} "
                                       "(or differing wavelength grids)")
    try:
        table = classifiers.compare(train, test, kinds)
    except ValueError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    out = Outputs()
    out.add(args.out, table.to_csv())
    out.add(_txt_sibling(args.out), table.to_text())
    out.add(str(args.out) + ".manifest.json",
            _manifest("compare", {"models": kinds, "label_key": args.label_key},
                      [args.train, args.test], list(out.files), None, started))
    return out


def cmd_interpret(args) -> Outputs:
    started = _timestamp()
    model = _load_model(args.model)
    lib = _load_library(args.library, model.label_key)
    _check_dims(model, lib, f"library {args.library}")
    try:
        files = interpret.report_files(model, lib, args.std_threshold, args.mag_threshold)
    except ValueError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    out = Outputs()
    out_dir = Path(args.out_dir)
    for name, data in files.items():
        out.add(out_dir / name, data)
    out.add(out_dir / "manifest.json",
            _manifest("interpret", {"std_threshold": args.std_threshold,
                                    "mag_threshold": args.mag_threshold},
                      [args.model, args.library], list(out.files), None, started))
    return out


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vegspec", description=__doc__.splitlines()[0], epilog=EXIT_HELP,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, epilog=EXIT_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=func)
        return sp

    s = add("synth", cmd_synth, "generate a synthetic spectral library")
    s.add_argument("--classes", type=_int_at_least(2), default=18)
    s.add_argument("--per-class", type=_int_at_least(2), default=50)
    s.add_argument("--bands", type=_int_at_least(2), default=2152)
    s.add_argument("--noise", type=_nonneg_float, default=0.01)
    s.add_argument("--features", type=_positive_int, default=3, help="absorptions per class")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--templates", help="optional JSON sidecar with the class templates")

    s = add("split", cmd_split, "stratified train/test split")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--train-frac", type=_fraction, default=0.8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--label-key", choices=("species", "composite"), default="species")
    s.add_argument("--out-train", required=True)
    s.add_argument("--out-test", required=True)

    s = add("train", cmd_train, "train the dense network")
    s.add_argument("--train", required=True)
    s.add_argument("--hidden", type=_positive_int, default=128)
    s.add_argument("--epochs", type=_positive_int, default=2000)
    s.add_argument("--batch", type=_positive_int, default=32)
    s.add_argument("--lr", type=_positive_float, default=1e-3)
    s.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--label-key", choices=("species", "composite"), default="species")
    s.add_argument("--out", required=True)
    s.add_argument("--history", required=True)

    s = add("evaluate", cmd_evaluate, "score a trained model on a test library")
    s.add_argument("--model", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--metrics", required=True)
    s.add_argument("--confusion", required=True)

    s = add("compare", cmd_compare, "benchmark the baseline classifiers")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--models", default="lda,ridge,nearest_centroid,gaussian_nb,knn,logistic")
    s.add_argument("--label-key", choices=("species", "composite"), default="species")
    s.add_argument("--out", required=True)

    s = add("interpret", cmd_interpret, "write the weight-interpretation report")
    s.add_argument("--model", required=True)
    s.add_argument("--library", required=True)
    s.add_argument("--std-threshold", type=_nonneg_float, default=0.1)
    s.add_argument("--mag-threshold", type=_nonneg_float, default=1.0)
    s.add_argument("--out-dir", required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        outputs = args.func(args)
        outputs.commit()
    except CliError as exc:
        print(f"vegspec: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # pragma: no cover - last-resort diagnostic
        print(f"vegspec: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
