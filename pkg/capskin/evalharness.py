"""Dataset-size sweeps: train at several calibration sizes, validate, report.

Errors are Euclidean (chord) distances in mm between the predicted surface
point and the true touch location. Reported stds are population stds of the
per-sample errors; across replicate seeds rows carry the mean of the per-seed
means and the mean of the per-seed stds.
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats

from capskin.calibration import Strategy, collect_dataset, compute_snr
from capskin.errors import StorageError, ValidationError
from capskin.geometry import DEFAULT_DENSE_SPACING, DEFAULT_SURFACE_SPACING, discretize_surface
from capskin.locnet import TrainConfig, predict_batch, train
from capskin.records import DEFAULT_FRAME_COUNT
from capskin.seeding import derive_rng, derive_seed
from capskin.skinsim import NoiseSpec, SimulatorConfig, build_semicone_skin

_LOGGER = logging.getLogger(__name__)

REPORT_SCHEMA = "sweep-report-v1"
CSV_COLUMNS = ["train_size", "mean_error_mm", "std_error_mm", "mean_snr_db"]
SWEEP_MODES = ("nested", "independent")


@dataclass(frozen=True)
class ExperimentConfig:
    train_sizes: tuple = (20, 50, 80, 100)
    validation_size: int = 20
    train_strategy: str = "even_spacing"
    seeds: tuple = (0, 1, 2, 3, 4)
    mode: str = "nested"
    layout_seed: int = 0
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    sigma_read: float = NoiseSpec().sigma_read
    train: TrainConfig = field(default_factory=TrainConfig)
    frame_count: int = DEFAULT_FRAME_COUNT
    surface_spacing: float = DEFAULT_SURFACE_SPACING
    dense_spacing: float = DEFAULT_DENSE_SPACING
    workers: int = 1

    def validate(self):
        sizes = list(self.train_sizes)
        if not sizes:
            raise ValidationError("train_sizes must not be empty")
        if any(n < 1 for n in sizes) or sizes != sorted(set(sizes)):
            raise ValidationError("train_sizes must be positive and strictly ascending, got %r" % (sizes,))
        if self.validation_size < 1:
            raise ValidationError("validation_size must be >= 1, got %d" % self.validation_size)
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("replicate seeds must be non-empty and distinct, got %r" % (self.seeds,))
        if self.mode not in SWEEP_MODES:
            raise ValidationError("mode must be one of %s, got %r" % (SWEEP_MODES, self.mode))
        if self.workers < 1:
            raise ValidationError("workers must be >= 1, got %d" % self.workers)
        Strategy.parse(self.train_strategy)
        self.simulator.validate()
        self.train.validate()
        NoiseSpec(self.sigma_read).validate()
        return self


@dataclass(frozen=True, eq=False)
class ErrorEntry:
    train_size: int
    seed: int
    mean_error_mm: float
    std_error_mm: float
    per_sample_errors: tuple


@dataclass(frozen=True)
class ErrorReport:
    per_model: tuple

    def sizes(self):
        return sorted({e.train_size for e in self.per_model})

    def by_size(self):
        """(train_size, mean of means, mean of stds) per size, ascending."""
        rows = []
        for n in self.sizes():
            entries = [e for e in self.per_model if e.train_size == n]
            rows.append((
                n,
                float(np.mean([e.mean_error_mm for e in entries])),
                float(np.mean([e.std_error_mm for e in entries])),
            ))
        return rows


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    pearson_r: float
    pearson_r_defined: bool = True


@dataclass(frozen=True)
class SnrSweepReport:
    per_size: tuple  # (train_size, mean_snr_db) ascending
    per_seed: tuple  # (train_size, seed, mean_snr_db)
    fit: LinearFit


def localization_error(localizer, validation, predict_fn=None, train_size=0, seed=0):
    """Per-sample errors of `localizer` on a validation dataset.

    `predict_fn` maps an (n, 64) image matrix to (n, 3) predicted points; it
    defaults to the localizer's surface-constrained prediction.
    """
    if validation is None or len(validation) == 0:
        raise ValidationError("validation set is empty")
    images = validation.images()
    if predict_fn is None:
        points = predict_batch(localizer, images)[1]
    else:
        points = np.asarray(predict_fn(images), dtype=float)
    errors = np.linalg.norm(points - validation.locations(), axis=1)
    return ErrorEntry(
        int(train_size), int(seed), float(np.mean(errors)), float(np.std(errors)),
        tuple(float(e) for e in errors),
    )


def linear_fit(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValidationError("linear fit needs two equal-length sequences of >= 2 values")
    if np.all(xs == xs[0]):
        raise ValidationError("linear fit needs at least two distinct x values")
    result = stats.linregress(xs, ys)
    if np.all(ys == ys[0]):
        # zero y-variance: r is undefined, report 0 and flag it
        return LinearFit(float(result.slope), float(result.intercept), 0.0, False)
    return LinearFit(
        float(result.slope), float(result.intercept), float(np.clip(result.rvalue, -1.0, 1.0)), True
    )


def check_isolation(training, validation):
    train_locs = {tuple(loc) for loc in training.locations().tolist()}
    shared = [i for i, loc in enumerate(validation.locations().tolist()) if tuple(loc) in train_locs]
    if shared:
        raise ValidationError("validation log %d shares its location with a training log" % shared[0])


def _run_cell(args):
    train_size, seed, dataset, validation, surface, train_config = args
    localizer = train(dataset, surface, train_config)
    entry = localization_error(localizer, validation, train_size=train_size, seed=seed)
    snr = compute_snr(dataset).mean_db
    _LOGGER.debug(
        "cell n=%d seed=%d: error %.3f +- %.3f mm, SNR %.2f dB",
        train_size, seed, entry.mean_error_mm, entry.std_error_mm, snr,
    )
    return entry, snr


def _replicate_cells(config, mesh, grid, surface, seed):
    noise = NoiseSpec(config.sigma_read, seed)
    collect = dict(frame_count=config.frame_count, finger_sigma=config.simulator.finger_sigma,
                   dense_spacing=config.dense_spacing)
    validation = collect_dataset(
        mesh, grid, Strategy.RANDOM_EDGE, config.validation_size, noise,
        derive_rng(seed, "validation"), seed=seed, **collect,
    )
    sizes = list(config.train_sizes)
    if config.mode == "nested":
        full = collect_dataset(
            mesh, grid, config.train_strategy, sizes[-1], noise,
            derive_rng(seed, "training"), seed=seed, **collect,
        )
        datasets = {n: full.prefix(n) for n in sizes}
    else:
        datasets = {
            n: collect_dataset(
                mesh, grid, config.train_strategy, n, noise,
                derive_rng(seed, "training-%d" % n), seed=seed, **collect,
            )
            for n in sizes
        }
    train_config = replace(config.train, seed=derive_seed(seed, "init"))
    cells = []
    for n in sizes:
        check_isolation(datasets[n], validation)
        cells.append((n, seed, datasets[n], validation, surface, train_config))
    return cells


def run_size_sweep(config, mesh, surface=None):
    """Train and validate one localizer per (size, replicate seed) cell."""
    config = config.validate()
    grid = build_semicone_skin(mesh, config.layout_seed, config.simulator)
    if surface is None:
        surface = discretize_surface(mesh, config.surface_spacing)

    cells = []
    for seed in config.seeds:
        cells.extend(_replicate_cells(config, mesh, grid, surface, seed))
    # fold in (size, seed) order whatever order the cells finish in
    cells.sort(key=lambda c: (c[0], list(config.seeds).index(c[1])))

    _LOGGER.info("Running %d sweep cells with %d worker(s)", len(cells), config.workers)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            results = list(executor.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]

    entries = tuple(entry for entry, _ in results)
    per_seed = tuple((c[0], c[1], snr) for c, (_, snr) in zip(cells, results))
    per_size = tuple(
        (n, float(np.mean([snr for size, _, snr in per_seed if size == n])))
        for n in config.train_sizes
    )
    if len(per_size) >= 2:
        fit = linear_fit([n for n, _ in per_size], [s for _, s in per_size])
    else:
        fit = LinearFit(float("nan"), float("nan"), 0.0, False)
    return ErrorReport(entries), SnrSweepReport(per_size, per_seed, fit)


def leveling_summary(error_report):
    """Error drop over the first and over the last size step; descriptive only."""
    rows = error_report.by_size()
    if len(rows) < 3:
        return None
    return {
        "first_step": [rows[0][0], rows[1][0]],
        "first_step_drop_mm": rows[0][1] - rows[1][1],
        "last_step": [rows[-2][0], rows[-1][0]],
        "last_step_drop_mm": rows[-2][1] - rows[-1][1],
    }


def report_rows(error_report, snr_report):
    snr = dict(snr_report.per_size)
    return [
        {"train_size": n, "mean_error_mm": mean, "std_error_mm": std, "mean_snr_db": snr.get(n, float("nan"))}
        for n, mean, std in error_report.by_size()
    ]


def _json_number(value):
    value = float(value)
    return value if np.isfinite(value) else None


def report_document(error_report, snr_report):
    return {
        "schema": REPORT_SCHEMA,
        "error_metric": "euclidean_mm",
        "std_kind": "population std of per-sample errors",
        "rows": [
            {k: (int(v) if k == "train_size" else _json_number(v)) for k, v in row.items()}
            for row in report_rows(error_report, snr_report)
        ],
        "per_model": [
            {
                "train_size": e.train_size,
                "seed": e.seed,
                "mean_error_mm": e.mean_error_mm,
                "std_error_mm": e.std_error_mm,
                "per_sample_errors": list(e.per_sample_errors),
            }
            for e in error_report.per_model
        ],
        "snr_per_seed": [
            {"train_size": n, "seed": s, "mean_snr_db": _json_number(v)}
            for n, s, v in snr_report.per_seed
        ],
        "fit": {
            "slope": _json_number(snr_report.fit.slope),
            "intercept": _json_number(snr_report.fit.intercept),
            "pearson_r": snr_report.fit.pearson_r,
            "pearson_r_defined": snr_report.fit.pearson_r_defined,
        },
        "leveling": leveling_summary(error_report),
    }


def emit_report(error_report, snr_report, path, fmt="csv"):
    try:
        if fmt == "csv":
            frame = pd.DataFrame(report_rows(error_report, snr_report), columns=CSV_COLUMNS)
            frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
        elif fmt == "json":
            with open(path, "w", encoding="utf-8") as f:
                json.dump(report_document(error_report, snr_report), f, indent=2, sort_keys=True)
                f.write("\n")
        else:
            raise ValidationError("unknown report format %r (expected csv or json)" % fmt)
    except OSError as e:
        raise StorageError("cannot write report %s: %s" % (path, e)) from e
    _LOGGER.info("Wrote %s report %s", fmt, path)


def read_csv_report(path):
    try:
        return pd.read_csv(path)
    except OSError as e:
        raise StorageError("cannot read report %s: %s" % (path, e)) from e
