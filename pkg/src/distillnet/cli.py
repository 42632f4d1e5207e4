"""Command-line front end: file-driven stages of the distillation pipeline.

Every verb reads a ``--config`` file (plus optional ``--override key=value``
edits and a ``--seed`` shorthand that rewrites every ``*.seed`` key) and
talks to the other verbs only through files under ``output_dir``:

  split          -> split_manifest.csv
  train-mentor   manifest -> mentor.ckpt, epochs_mentor.csv
  label          manifest + mentor.ckpt -> soft_labels.slbl
  train-student  manifest + soft_labels.slbl -> student_<x>.ckpt + epoch CSVs
  baseline       manifest -> baseline_<x>.ckpt + epoch CSVs (hard labels)
  eval           checkpoints -> summary.csv
  confusion      checkpoints -> confusion_<model>.csv
  bench          checkpoints -> bench.csv
  sweep          (self-contained) -> sweep.csv
  run-all        split, train-mentor, label, train-student, eval, confusion

Exit codes: 0 success; 1 configuration problem (message names the offending
key); 2 a required input artifact does not exist; 3 any other runtime
failure. Progress and errors go to stderr, stdout stays clean, and all
outputs are written atomically (no partial files on interruption).
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor

from . import pipeline, report
from .config import build_experiment_config, load_config
from .errors import ConfigError, DistillError, MissingArtifactError
from .evaluation import bench_inference, confusion_matrix, evaluate, relative_accuracy
from .pipeline import model_letter
from .report import ModelResult

VERBS = (
    "split",
    "train-mentor",
    "label",
    "train-student",
    "baseline",
    "eval",
    "confusion",
    "bench",
    "sweep",
    "run-all",
)


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _epoch_progress(model_id, total):
    def cb(log):
        _log(
            f"[{model_id}] epoch {log.epoch}/{total}"
            f" train_loss={log.train_loss:.4f}"
            f" test_loss={log.test_loss:.4f}"
            f" test_acc={log.test_accuracy:.4f}"
        )

    return cb


# ---------------------------------------------------------------------------
# stages


def stage_split(cfg):
    train_set, _, _ = pipeline.prepare_data(cfg)
    mentor_set, student_set = pipeline.resolve_split(cfg, train_set)
    _log(
        f"split: {mentor_set.n} mentor / {student_set.n} pool images"
        f" -> {pipeline.manifest_path(cfg.output_dir)}"
    )


def stage_train_mentor(cfg):
    train_set, test_set, _ = pipeline.prepare_data(cfg)
    mentor_set, _ = pipeline.resolve_split(cfg, train_set, require_manifest=True)
    stack, logs = pipeline.train_mentor(
        cfg, mentor_set, test_set,
        progress=_epoch_progress("mentor", cfg.mentor_train.epochs),
    )
    pipeline.save_checkpoint(stack, pipeline.mentor_ckpt_path(cfg.output_dir))
    report.write_epochs(
        logs, report.epochs_csv_path(cfg.output_dir, "mentor"), cfg.zero_wall_time
    )
    _log(f"train-mentor: final test accuracy {logs[-1].test_accuracy:.4f}")


def _student_pool(cfg):
    train_set, test_set, foreign = pipeline.prepare_data(cfg)
    _, student_set = pipeline.resolve_split(cfg, train_set, require_manifest=True)
    return pipeline.build_student_pool(cfg, student_set, foreign), test_set


def stage_label(cfg):
    pool, _ = _student_pool(cfg)
    mentor = pipeline.load_checkpoint(pipeline.mentor_ckpt_path(cfg.output_dir))
    soft = pipeline.generate_soft_labels(mentor, pool.images)
    pipeline.save_soft_labels(soft, pipeline.soft_labels_path(cfg.output_dir))
    _log(
        f"label: {soft.rows.shape[0]} soft rows from {soft.mentor_id}"
        f" -> {pipeline.soft_labels_path(cfg.output_dir)}"
    )


def _train_one_student(cfg, i):
    pool, test_set = _student_pool(cfg)
    soft = pipeline.load_soft_labels(pipeline.soft_labels_path(cfg.output_dir))
    model_id = f"student_{model_letter(i)}"
    stack, logs = pipeline.train_student(
        cfg.student_train, pool.images, soft, cfg.student_archs[i], test_set,
        progress=_epoch_progress(model_id, cfg.student_train.epochs),
    )
    pipeline.save_checkpoint(stack, pipeline.student_ckpt_path(cfg.output_dir, i))
    report.write_epochs(
        logs, report.epochs_csv_path(cfg.output_dir, model_id), cfg.zero_wall_time
    )
    _log(f"{model_id}: final test accuracy {logs[-1].test_accuracy:.4f}")


def _train_one_baseline(cfg, i):
    pool, test_set = _student_pool(cfg)
    model_id = f"baseline_{model_letter(i)}"
    stack, logs = pipeline.train_baseline(
        cfg.student_train, pool, cfg.student_archs[i], test_set,
        progress=_epoch_progress(model_id, cfg.student_train.epochs),
    )
    pipeline.save_checkpoint(stack, pipeline.baseline_ckpt_path(cfg.output_dir, i))
    report.write_epochs(
        logs, report.epochs_csv_path(cfg.output_dir, model_id), cfg.zero_wall_time
    )
    _log(f"{model_id}: final test accuracy {logs[-1].test_accuracy:.4f}")


def _student_worker(raw, i):
    _train_one_student(build_experiment_config(raw), i)


def _baseline_worker(raw, i):
    _train_one_baseline(build_experiment_config(raw), i)


def _run_indexed(worker, train_one, cfg, jobs):
    count = len(cfg.student_archs)
    if jobs <= 1 or count < 2:
        for i in range(count):
            train_one(cfg, i)
        return
    with ProcessPoolExecutor(max_workers=min(jobs, count)) as pool:
        futures = [pool.submit(worker, cfg.raw, i) for i in range(count)]
        for fut in futures:
            fut.result()


def stage_train_student(cfg, jobs=1):
    _run_indexed(_student_worker, _train_one_student, cfg, jobs)


def stage_baseline(cfg, jobs=1):
    _run_indexed(_baseline_worker, _train_one_baseline, cfg, jobs)


def _load_models(cfg, include_optional=True):
    """[(model_id, stack)] - mentor and students must exist, baselines may."""
    models = [
        ("mentor", pipeline.load_checkpoint(pipeline.mentor_ckpt_path(cfg.output_dir)))
    ]
    for i in range(len(cfg.student_archs)):
        models.append(
            (
                f"student_{model_letter(i)}",
                pipeline.load_checkpoint(pipeline.student_ckpt_path(cfg.output_dir, i)),
            )
        )
    if include_optional:
        for i in range(len(cfg.student_archs)):
            path = pipeline.baseline_ckpt_path(cfg.output_dir, i)
            if os.path.exists(path):
                models.append(
                    (f"baseline_{model_letter(i)}", pipeline.load_checkpoint(path))
                )
    return models


def stage_eval(cfg):
    _, test_set, _ = pipeline.prepare_data(cfg)
    models = _load_models(cfg)
    results = []
    mentor_acc = None
    for model_id, stack in models:
        acc, _ = evaluate(stack, test_set)
        if model_id == "mentor":
            mentor_acc = acc
            rel = None
        else:
            rel = relative_accuracy(acc * 100.0, mentor_acc * 100.0)
        results.append(ModelResult(model_id, stack.arch, acc, rel))
        rel_txt = "" if rel is None else f" relative={rel:.2f}%"
        _log(f"eval: {model_id} accuracy={acc * 100.0:.2f}%{rel_txt}")
    report.write_summary(results, report.summary_csv_path(cfg.output_dir))
    _log(f"eval -> {report.summary_csv_path(cfg.output_dir)}")


def stage_confusion(cfg):
    _, test_set, _ = pipeline.prepare_data(cfg)
    for model_id, stack in _load_models(cfg):
        matrix = confusion_matrix(stack, test_set)
        path = report.confusion_csv_path(cfg.output_dir, model_id)
        report.write_confusion(matrix, path)
        errors = int(matrix.off_diagonal().sum())
        _log(f"confusion: {model_id} ({errors} misclassified) -> {path}")


def stage_bench(cfg, reps=100, warmup=3):
    _, test_set, _ = pipeline.prepare_data(cfg)
    benches = []
    for model_id, stack in _load_models(cfg):
        result = bench_inference(stack, test_set, reps=reps, warmup=warmup,
                                 model_id=model_id)
        benches.append(result)
        _log(
            f"bench: {model_id} mean={result.mean_s:.4f}s std={result.std_s:.4f}s"
            f" over {reps} reps"
        )
    report.write_bench(benches, report.bench_csv_path(cfg.output_dir))
    _log(f"bench -> {report.bench_csv_path(cfg.output_dir)}")


def stage_sweep(cfg):
    def progress(ratio, seed, mentor_acc, student_acc):
        _log(
            f"sweep: ratio={ratio:g} seed={seed}"
            f" mentor={mentor_acc:.4f} student={student_acc:.4f}"
        )

    rows = report.sweep_split_ratios(cfg, progress=progress)
    for ratio, m, s in rows:
        _log(f"sweep: ratio={ratio:g} mentor={m:.4f} student={s:.4f} (mean)")
    _log(f"sweep -> {report.sweep_csv_path(cfg.output_dir)}")


def stage_run_all(cfg, jobs=1):
    stage_split(cfg)
    stage_train_mentor(cfg)
    stage_label(cfg)
    stage_train_student(cfg, jobs=jobs)
    stage_eval(cfg)
    stage_confusion(cfg)


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser():
    parser = argparse.ArgumentParser(
        prog="distillnet",
        description="Mentor-student soft-label distillation pipeline.",
    )
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="path to a key=value config file")
        p.add_argument(
            "--override", action="append", default=[], metavar="KEY=VALUE",
            help="override a config entry (repeatable)",
        )
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes for per-arch training")
        p.add_argument("--seed", type=int, default=None,
                       help="overwrite every *.seed config key")
        if verb == "bench":
            p.add_argument("--reps", type=int, default=100)
            p.add_argument("--warmup", type=int, default=3)
    return parser


def _dispatch(args, cfg):
    verb = args.verb
    if verb == "split":
        stage_split(cfg)
    elif verb == "train-mentor":
        stage_train_mentor(cfg)
    elif verb == "label":
        stage_label(cfg)
    elif verb == "train-student":
        stage_train_student(cfg, jobs=args.jobs)
    elif verb == "baseline":
        stage_baseline(cfg, jobs=args.jobs)
    elif verb == "eval":
        stage_eval(cfg)
    elif verb == "confusion":
        stage_confusion(cfg)
    elif verb == "bench":
        stage_bench(cfg, reps=args.reps, warmup=args.warmup)
    elif verb == "sweep":
        stage_sweep(cfg)
    else:
        stage_run_all(cfg, jobs=args.jobs)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors; keep 2 reserved for
        # missing artifacts and report bad invocations as config problems.
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = load_config(args.config, args.override, args.seed)
        _dispatch(args, cfg)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 1
    except (MissingArtifactError, FileNotFoundError) as exc:
        _log(f"missing input: {exc}")
        return 2
    except DistillError as exc:
        _log(f"error: {exc}")
        return 3
    except Exception:
        traceback.print_exc()
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
