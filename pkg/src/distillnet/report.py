"""CSV reports: summary, per-epoch logs, confusion matrices, benchmarks, sweeps.

All CSVs are UTF-8 with LF line endings and a header row. Plain floats are
rendered with 6 significant digits; percentages with 2 decimals (truncating -
see evaluation.format_percent). Reports are byte-deterministic for equal
inputs; epoch CSVs zero the wall_time_s column unless the caller opts out,
because wall-clock readings would break otherwise-identical reruns.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace

import numpy as np

from .evaluation import format_percent
from .fileio import atomic_write_text

SUMMARY_HEADER = ["model", "arch", "accuracy", "relative_accuracy"]
EPOCH_HEADER = ["epoch", "train_loss", "test_loss", "test_accuracy", "wall_time_s"]
BENCH_HEADER = ["model", "reps", "mean_s", "std_s"]
SWEEP_HEADER = ["ratio", "mentor_accuracy", "student_accuracy"]


def fmt6(x):
    """6-significant-digit rendering used for all non-percentage floats."""
    return f"{float(x):.6g}"


@dataclass
class ModelResult:
    """Everything a report can say about one trained model."""

    model_id: str
    arch: str
    accuracy: float  # fraction in [0, 1]
    relative_accuracy: float = None  # percent, None for the mentor
    confusion: object = None  # ConfusionMatrix
    epochs: list = None  # [EpochLog]
    bench: object = None  # BenchResult


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def summary_csv_path(out_dir):
    return os.path.join(out_dir, "summary.csv")


def epochs_csv_path(out_dir, model_id):
    return os.path.join(out_dir, f"epochs_{model_id}.csv")


def confusion_csv_path(out_dir, model_id):
    return os.path.join(out_dir, f"confusion_{model_id}.csv")


def bench_csv_path(out_dir):
    return os.path.join(out_dir, "bench.csv")


def sweep_csv_path(out_dir):
    return os.path.join(out_dir, "sweep.csv")


def write_summary(results, path):
    rows = []
    for r in results:
        rel = "" if r.relative_accuracy is None else format_percent(r.relative_accuracy)
        rows.append([r.model_id, r.arch, format_percent(r.accuracy * 100.0), rel])
    atomic_write_text(path, _csv_text(SUMMARY_HEADER, rows))


def write_epochs(logs, path, zero_wall_time=True):
    rows = [
        [
            log.epoch,
            fmt6(log.train_loss),
            fmt6(log.test_loss),
            fmt6(log.test_accuracy),
            fmt6(0.0 if zero_wall_time else log.wall_time_s),
        ]
        for log in logs
    ]
    atomic_write_text(path, _csv_text(EPOCH_HEADER, rows))


def write_confusion(matrix, path):
    k = matrix.num_classes
    header = ["true/pred"] + [str(j) for j in range(k)]
    rows = [[str(i)] + [int(v) for v in matrix.counts[i]] for i in range(k)]
    atomic_write_text(path, _csv_text(header, rows))


def write_bench(bench_results, path):
    rows = [
        [b.model_id, b.reps, fmt6(b.mean_s), fmt6(b.std_s)] for b in bench_results
    ]
    atomic_write_text(path, _csv_text(BENCH_HEADER, rows))


def emit_report(results, output_dir, zero_wall_time=True):
    """Write summary.csv and bench.csv (always, header-only when empty) plus
    confusion_<model>.csv / epochs_<model>.csv for models that carry them."""
    os.makedirs(output_dir, exist_ok=True)
    write_summary(results, summary_csv_path(output_dir))
    write_bench(
        [r.bench for r in results if r.bench is not None],
        bench_csv_path(output_dir),
    )
    for r in results:
        if r.confusion is not None:
            write_confusion(r.confusion, confusion_csv_path(output_dir, r.model_id))
        if r.epochs is not None:
            write_epochs(
                r.epochs,
                epochs_csv_path(output_dir, r.model_id),
                zero_wall_time=zero_wall_time,
            )


def sweep_split_ratios(cfg, ratios=None, seeds=None, progress=None):
    """Rerun the full pipeline per mentor-fraction ratio, averaging over seeds.

    The student uses the mentor's architecture (the same-arch student is what
    the ratio sweep tracks). Returns [(ratio, mentor_acc, student_acc)] as
    fractions and writes one sweep.csv row per ratio.
    """
    from . import pipeline  # local import: pipeline imports config, not report
    from .splitting import SplitConfig, balanced_split

    ratios = list(cfg.sweep_ratios if ratios is None else ratios)
    if seeds is None:
        seeds = list(cfg.sweep_seeds) if cfg.sweep_seeds else [cfg.split.seed]
    train_set, test_set, foreign = pipeline.prepare_data(cfg)

    rows = []
    for ratio in ratios:
        mentor_accs, student_accs = [], []
        for seed in seeds:
            run_cfg = replace(
                cfg,
                split=SplitConfig(mentor_fraction=ratio, seed=seed),
                mentor_train=replace(cfg.mentor_train, seed=seed),
                student_train=replace(cfg.student_train, seed=seed),
            )
            mentor_set, student_set = balanced_split(train_set, run_cfg.split)
            mentor, mentor_logs = pipeline.train_mentor(run_cfg, mentor_set, test_set)
            pool = pipeline.build_student_pool(run_cfg, student_set, foreign)
            soft = pipeline.generate_soft_labels(mentor, pool.images)
            _, student_logs = pipeline.train_student(
                run_cfg.student_train, pool.images, soft, run_cfg.mentor_arch, test_set
            )
            mentor_accs.append(mentor_logs[-1].test_accuracy)
            student_accs.append(student_logs[-1].test_accuracy)
            if progress is not None:
                progress(ratio, seed, mentor_accs[-1], student_accs[-1])
        rows.append((ratio, float(np.mean(mentor_accs)), float(np.mean(student_accs))))

    os.makedirs(cfg.output_dir, exist_ok=True)
    csv_rows = [
        [fmt6(ratio), format_percent(m * 100.0), format_percent(s * 100.0)]
        for ratio, m, s in rows
    ]
    atomic_write_text(
        sweep_csv_path(cfg.output_dir), _csv_text(SWEEP_HEADER, csv_rows)
    )
    return rows
