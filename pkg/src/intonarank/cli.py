"""Command-line front end.

Subcommands: gen-corpus, label, train, score, eval-metrics, grad-check.
Reports are JSON lines on stdout. Flags override values from ``--config``;
``INTONARANK_SEED`` is the last fallback for ``--seed``.
"""

import argparse
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import corpus, metrics, stylemath
from .audio import wav_read
from .exceptions import EmptyClassError, IntonaRankError, ModelFormatError
from .features import estimate_f0, extract_features, final_window
from .ranker import RankerConfig, RelativeAttributeRanker, load_model, pair_order_accuracy

log = logging.getLogger("intonarank")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_EMPTY_CLASS = 4
EXIT_NO_CONVERGENCE = 5
EXIT_INTENSITY_RANGE = 6
EXIT_GRAD_CHECK = 7

GRAD_CHECK_TOL = 1e-4
SEED_ENV = "INTONARANK_SEED"


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _emit(report, args):
    line = json.dumps(report, sort_keys=True)
    print(line)
    report_file = _setting(args, "report_file", ("paths", "report_file"))
    if report_file:
        with open(report_file, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CommandError(f"cannot read config {path}: {exc}", EXIT_IO) from exc


def _setting(args, attr, config_path, default=None):
    value = getattr(args, attr, None)
    if value is not None:
        return value
    node = getattr(args, "config_data", {})
    for key in config_path:
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key]
    return node


def _seed(args, required=True, default=None):
    seed = _setting(args, "seed", ("seed",))
    if seed is None and os.environ.get(SEED_ENV):
        seed = os.environ[SEED_ENV]
    if seed is None:
        if required:
            raise CommandError(
                f"--seed is required (or set it in --config or ${SEED_ENV})", EXIT_USAGE
            )
        return default
    try:
        return int(seed)
    except (TypeError, ValueError) as exc:
        raise CommandError(f"seed must be an integer, got {seed!r}", EXIT_USAGE) from exc


def _ranker_config(args, seed):
    def pick(attr, key, default):
        return _setting(args, attr, ("ranker", key), default)

    defaults = RankerConfig()
    try:
        return RankerConfig(
            C=float(pick("C", "C", defaults.C)),
            max_iters=int(pick("max_iters", "max_iters", defaults.max_iters)),
            grad_tol=float(pick("grad_tol", "grad_tol", defaults.grad_tol)),
            max_similar_pairs=int(
                pick("max_similar_pairs", "max_similar_pairs", defaults.max_similar_pairs)
            ),
            seed=seed,
        )
    except ValueError as exc:
        raise CommandError(str(exc), EXIT_USAGE) from exc


def _manifest_path(args):
    path = _setting(args, "manifest", ("paths", "manifest"))
    if not path:
        raise CommandError("--manifest is required", EXIT_USAGE)
    return path


def _read_clips(manifest_path, entries, jobs):
    base = os.path.dirname(os.path.abspath(manifest_path))

    def load(entry):
        return wav_read(os.path.join(base, entry.path))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(load, entries))


def _features(clips, jobs):
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return np.vstack(list(pool.map(extract_features, clips)))


def _dump_features(path, entries, clips, X):
    lines = []
    for entry, clip, row in zip(entries, clips, X):
        win = final_window(clip)
        lines.append(json.dumps(
            {"path": entry.path, "features": [float(v) for v in row],
             "window": [win.start, win.end]},
            sort_keys=True,
        ))
    corpus.atomic_write_text(path, "\n".join(lines) + "\n")


# -- commands -------------------------------------------------------------


def cmd_gen_corpus(args):
    seed = _seed(args)
    out = _setting(args, "out", ("paths", "corpus_dir"))
    if not out:
        raise CommandError("--out is required", EXIT_USAGE)
    if args.statements < 1 or args.questions < 1:
        raise CommandError("--statements and --questions must be >= 1", EXIT_USAGE)
    entries = corpus.generate_corpus(args.statements, args.questions, seed, out)
    _emit({
        "command": "gen-corpus",
        "manifest": os.path.join(out, "manifest.jsonl"),
        "n_entries": len(entries),
        "n_statement": sum(e.intonation == "statement" for e in entries),
        "n_question": sum(e.intonation == "question" for e in entries),
        "seed": seed,
    }, args)
    return EXIT_OK


def cmd_label(args):
    seed = _seed(args)
    path = _manifest_path(args)
    entries = corpus.read_manifest(path)
    if len(entries) < 2:
        raise CommandError("labeling needs at least two manifest entries", EXIT_USAGE)
    clips = _read_clips(path, entries, args.jobs)
    X = _features(clips, args.jobs)
    if args.features_out:
        _dump_features(args.features_out, entries, clips, X)
    labels = corpus.kmeans_label(X, seed)
    known = [(e.intonation, lab) for e, lab in zip(entries, labels)
             if e.intonation != "unlabeled"]
    for entry, lab in zip(entries, labels):
        entry.intonation = str(lab)
    corpus.write_manifest(entries, path)
    report = {
        "command": "label",
        "manifest": path,
        "n_question": int(sum(lab == "question" for lab in labels)),
        "n_statement": int(sum(lab == "statement" for lab in labels)),
        "agreement": float(np.mean([a == b for a, b in known])) if known else None,
    }
    _emit(report, args)
    return EXIT_OK


def cmd_train(args):
    seed = _seed(args)
    path = _manifest_path(args)
    model_file = _setting(args, "model_out", ("paths", "model_file"))
    if not model_file:
        raise CommandError("--model-out is required", EXIT_USAGE)
    config = _ranker_config(args, seed)

    entries = [e for e in corpus.read_manifest(path) if e.intonation != "unlabeled"]
    y = [e.intonation for e in entries]
    n_q, n_s = y.count("question"), y.count("statement")
    if n_q == 0 or n_s == 0:
        raise CommandError(
            f"manifest needs both classes (questions={n_q}, statements={n_s})",
            EXIT_EMPTY_CLASS,
        )
    clips = _read_clips(path, entries, args.jobs)
    X = _features(clips, args.jobs)
    if args.features_out:
        _dump_features(args.features_out, entries, clips, X)

    model = RelativeAttributeRanker(
        C=config.C, max_iters=config.max_iters, grad_tol=config.grad_tol,
        max_similar_pairs=config.max_similar_pairs, random_state=config.seed,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model.fit(X, y)
    if not model.converged_:
        raise CommandError(
            f"ranker did not converge within {config.max_iters} iterations",
            EXIT_NO_CONVERGENCE,
        )
    corpus.atomic_write_text(model_file, model.to_json())

    sigma = _setting(args, "sigma", ("sigma",), "auto")
    sigma = stylemath.balance_sigma(n_s, n_q) if sigma == "auto" else float(sigma)
    _emit({
        "command": "train",
        "model": model_file,
        "objective": model.objective_,
        "n_iter": model.n_iter_,
        "pair_order_accuracy": pair_order_accuracy(model.decision_function(X), y),
        "n_question": n_q,
        "n_statement": n_s,
        "sigma": sigma,
    }, args)
    return EXIT_OK


def cmd_score(args):
    if (args.input is None) == (args.intensity is None):
        raise CommandError("give exactly one of --input or --intensity", EXIT_USAGE)
    model_file = _setting(args, "model", ("paths", "model_file"))
    if not model_file:
        raise CommandError("--model is required", EXIT_USAGE)
    model = load_model(model_file)
    d_style = int(_setting(args, "d_style", ("d_style",), stylemath.D_STYLE))

    if args.input is not None:
        clip = wav_read(args.input)
        x = extract_features(clip)
        raw = float(model.decision_function(x[None, :])[0])
        report = {
            "command": "score",
            "path": args.input,
            "raw_score": raw,
            "intensity": float(model.normalize(raw)),
        }
    else:
        value = args.intensity
        if not 0.0 <= value <= 1.0:
            raise CommandError(f"intensity {value} outside [0, 1]", EXIT_INTENSITY_RANGE)
        weights, bias = stylemath.random_fc(d_style, _seed(args, required=False, default=0))
        h = stylemath.intensity_embed(value, weights, bias)
        report = {
            "command": "score",
            "intensity": value,
            "h_i": [float(v) for v in h.data],
        }
    if args.out:
        corpus.atomic_write_text(args.out, json.dumps(report, sort_keys=True) + "\n")
    _emit(report, args)
    return EXIT_OK


def _parse_durations(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise CommandError(f"bad duration list {text!r}", EXIT_USAGE) from exc


def cmd_eval_metrics(args):
    ref, syn = wav_read(args.ref), wav_read(args.syn)
    ref_cep, syn_cep = metrics.mel_cepstra(ref), metrics.mel_cepstra(syn)
    if args.ref_durations is not None or args.syn_durations is not None:
        if args.ref_durations is None or args.syn_durations is None:
            raise CommandError("give both --ref-durations and --syn-durations", EXIT_USAGE)
        ref_d = _parse_durations(args.ref_durations)
        syn_d = _parse_durations(args.syn_durations)
        if len(ref_d) != len(syn_d):
            raise CommandError("duration lists differ in length", EXIT_USAGE)
    else:
        ref_d, syn_d = [ref.duration], [syn.duration]
    report = {
        "mcd_db": metrics.mcd(ref_cep, syn_cep),
        "ffe": metrics.ffe(estimate_f0(ref), estimate_f0(syn)),
        "duration_mse": metrics.duration_mse(ref_d, syn_d),
        "frames_compared": int(min(ref_cep.shape[0], syn_cep.shape[0])),
    }
    _emit(report, args)
    return EXIT_OK


def cmd_grad_check(args):
    seed = _seed(args)
    d_style = int(_setting(args, "d_style", ("d_style",), stylemath.D_STYLE))
    worst = stylemath.gradient_suite(seed, n_points=args.points, dim=d_style)
    failed = False
    for name, err in worst.items():
        ok = err <= args.tol
        failed |= not ok
        _emit({"check": name, "max_rel_error": err, "passed": ok}, args)
    return EXIT_GRAD_CHECK if failed else EXIT_OK


# -- parser ---------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="intonarank",
        description="Questioning-intensity ranking, labeling and evaluation tools.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--report-file", dest="report_file",
                        help="also append JSON reports to this file")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", parents=[common], help="render a synthetic corpus")
    p.add_argument("--statements", type=int, required=True)
    p.add_argument("--questions", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_corpus)

    for name, func, help_ in (
        ("label", cmd_label, "k-means relabel a manifest in place"),
        ("train", cmd_train, "train the intensity ranker"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--manifest")
        p.add_argument("--features-out", dest="features_out",
                       help="write extracted features as JSONL")
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=func)
        if name == "train":
            p.add_argument("--model-out", dest="model_out")
            p.add_argument("--C", dest="C", type=float)
            p.add_argument("--max-iters", dest="max_iters", type=int)
            p.add_argument("--grad-tol", dest="grad_tol", type=float)
            p.add_argument("--max-similar-pairs", dest="max_similar_pairs", type=int)
            p.add_argument("--sigma", help='question-class CE weight or "auto"')

    p = sub.add_parser("score", parents=[common], help="score audio or a manual intensity")
    p.add_argument("--model")
    p.add_argument("--input", help="WAV file to score")
    p.add_argument("--intensity", type=float, help="manual intensity in [0, 1]")
    p.add_argument("--d-style", dest="d_style", type=int)
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval-metrics", parents=[common], help="MCD / FFE / duration MSE")
    p.add_argument("--ref", required=True)
    p.add_argument("--syn", required=True)
    p.add_argument("--ref-durations", dest="ref_durations",
                   help="comma-separated reference durations (s)")
    p.add_argument("--syn-durations", dest="syn_durations",
                   help="comma-separated synthesized durations (s)")
    p.set_defaults(func=cmd_eval_metrics)

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--tol", type=float, default=GRAD_CHECK_TOL)
    p.add_argument("--d-style", dest="d_style", type=int)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.config_data = _load_config(args.config)
        return args.func(args)
    except CommandError as exc:
        if exc.code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        print(f"intonarank: error: {exc}", file=sys.stderr)
        return exc.code
    except EmptyClassError as exc:
        print(f"intonarank: error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_CLASS
    except (OSError, ModelFormatError, IntonaRankError, json.JSONDecodeError, KeyError) as exc:
        print(f"intonarank: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
