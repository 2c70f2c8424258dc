#!/usr/bin/env python3

import json
import os

from test_framework import REPO_ROOT
from test_framework.test_framework import TestFramework
from utility.utils import assert_close, assert_equal, assert_raises

import numpy as np

from capskin.calibration import BaselineStats, CalibrationDataset, Strategy
from capskin.errors import StorageError, ValidationError
from capskin.evalharness import (
    CSV_COLUMNS,
    REPORT_SCHEMA,
    ErrorEntry,
    ErrorReport,
    ExperimentConfig,
    LinearFit,
    SnrSweepReport,
    check_isolation,
    emit_report,
    leveling_summary,
    linear_fit,
    localization_error,
    read_csv_report,
    report_document,
)
from capskin.records import PointLog

BASELINE = BaselineStats(np.full(64, 1000.0), np.ones(64), 50)


def dataset_at(locations):
    logs = [PointLog(loc, np.full((3, 64), 990.0)) for loc in locations]
    return CalibrationDataset(logs, BASELINE, Strategy.RANDOM_EDGE, 0)


def textbook_ols(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    slope = sxy / sxx
    return slope, my - slope * mx, sxy / (sxx * syy) ** 0.5


def entry(n, seed, errors):
    errors = np.asarray(errors, dtype=float)
    return ErrorEntry(n, seed, float(errors.mean()), float(errors.std()), tuple(errors.tolist()))


class EvalHarnessTest(TestFramework):
    def run_test(self):
        self.__test_localization_error()
        self.__test_linear_fit()
        self.__test_reports()
        self.__test_config()

    def __test_localization_error(self):
        self.log.info("Localization error against fixed predictors")
        validation = dataset_at([[3.0, 0.0, 0.0], [0.0, 5.0, 0.0]])

        oracle = localization_error(None, validation, predict_fn=lambda images: validation.locations())
        assert_equal(oracle.mean_error_mm, 0.0)
        assert_equal(oracle.std_error_mm, 0.0)

        origin = localization_error(
            None, validation, predict_fn=lambda images: np.zeros((len(images), 3)), train_size=20, seed=4
        )
        assert_equal(origin.per_sample_errors, (3.0, 5.0))
        assert_equal(origin.mean_error_mm, 4.0)
        assert_equal(origin.std_error_mm, 1.0)
        assert_equal((origin.train_size, origin.seed), (20, 4))

        assert_raises(ValidationError, localization_error, None, None)

        self.log.info("Training and validation locations must not overlap")
        check_isolation(dataset_at([[1.0, 1.0, 1.0]]), validation)
        e = assert_raises(ValidationError, check_isolation, dataset_at([[9.0, 9.0, 9.0], [0.0, 5.0, 0.0]]), validation)
        assert "validation log 1" in str(e), str(e)

    def __test_linear_fit(self):
        self.log.info("Least-squares fit of SNR against size")
        fit = linear_fit([0, 1, 2], [0, 2, 4])
        assert_close(fit.slope, 2.0, rel=1e-12)
        assert_close(fit.intercept, 0.0, abs_tol=1e-12)
        assert_close(fit.pearson_r, 1.0, rel=1e-12)
        assert fit.pearson_r_defined

        flat = linear_fit([0, 1], [1, 1])
        assert_equal(flat.slope, 0.0)
        assert_equal(flat.pearson_r, 0.0)
        assert not flat.pearson_r_defined

        rng = np.random.default_rng(self.random_seed)
        xs = rng.uniform(0, 100, 100).tolist()
        ys = [0.3 * x + 7 + rng.normal(0, 5) for x in xs]
        fit = linear_fit(xs, ys)
        slope, intercept, r = textbook_ols(xs, ys)
        assert_close(fit.slope, slope, rel=1e-10)
        assert_close(fit.intercept, intercept, rel=1e-10)
        assert_close(fit.pearson_r, r, rel=1e-10)
        assert -1.0 <= fit.pearson_r <= 1.0

        assert_raises(ValidationError, linear_fit, [3, 3, 3], [1, 2, 3])
        assert_raises(ValidationError, linear_fit, [1], [1])
        assert_raises(ValidationError, linear_fit, [1, 2], [1, 2, 3])

    def __test_reports(self):
        errors = ErrorReport((
            entry(20, 0, [10.0, 12.0]),
            entry(20, 1, [8.0, 8.0]),
            entry(50, 0, [6.0, 7.0]),
            entry(50, 1, [5.0, 6.0]),
            entry(80, 0, [4.5, 5.5]),
            entry(80, 1, [4.0, 5.0]),
            entry(100, 0, [4.0, 5.0 / 3.0]),
            entry(100, 1, [4.25, 4.75]),
        ))
        rows = errors.by_size()
        assert_equal([r[0] for r in rows], [20, 50, 80, 100])
        assert_close(rows[0][1], 9.5)
        assert_close(rows[0][2], 0.5)

        summary = leveling_summary(errors)
        assert_equal(summary["first_step"], [20, 50])
        assert_close(summary["first_step_drop_mm"], 9.5 - 6.0)
        assert_equal(summary["last_step"], [80, 100])
        assert leveling_summary(ErrorReport(errors.per_model[:4])) is None

        per_size = ((20, 21.5), (50, 23.0), (80, 24.25), (100, 24.5))
        per_seed = tuple((n, s, v + s * 0.1) for n, v in per_size for s in (0, 1))
        snr = SnrSweepReport(per_size, per_seed, linear_fit([n for n, _ in per_size], [v for _, v in per_size]))

        self.log.info("CSV report: one row per size, values to 12 significant digits")
        csv_path = os.path.join(self.root_dir, "report.csv")
        emit_report(errors, snr, csv_path, "csv")
        with open(csv_path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert_equal(lines[0], ",".join(CSV_COLUMNS))
        assert_equal(len(lines), 5)
        frame = read_csv_report(csv_path)
        assert_equal(frame["train_size"].tolist(), [20, 50, 80, 100])
        for k, (n, mean, std) in enumerate(rows):
            assert_close(frame["mean_error_mm"][k], mean, rel=1e-9)
            assert_close(frame["std_error_mm"][k], std, rel=1e-9)
            assert_close(frame["mean_snr_db"][k], per_size[k][1], rel=1e-9)

        self.log.info("JSON report carries every required field")
        json_path = os.path.join(self.root_dir, "report.json")
        emit_report(errors, snr, json_path, "json")
        with open(json_path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        with open(os.path.join(REPO_ROOT, "schemas", "sweep-report-v1.schema.json"), "r", encoding="utf-8") as f:
            schema = json.load(f)
        assert_equal(doc["schema"], REPORT_SCHEMA)
        for key in schema["required"]:
            assert key in doc, key
        for section in ("rows", "per_model"):
            for item in doc[section]:
                for key in schema["properties"][section]["items"]["required"]:
                    assert key in item, (section, key)
        assert_equal(len(doc["per_model"]), 8)
        assert_equal(len(doc["snr_per_seed"]), 8)
        assert doc["fit"]["pearson_r_defined"]
        assert_equal(doc, report_document(errors, snr))

        self.log.info("Undefined SNR is written as null")
        undefined = SnrSweepReport(((20, float("nan")),), ((20, 0, float("nan")),), LinearFit(0.0, 0.0, 0.0, False))
        single = ErrorReport(errors.per_model[:1])
        doc = report_document(single, undefined)
        assert doc["rows"][0]["mean_snr_db"] is None
        assert doc["snr_per_seed"][0]["mean_snr_db"] is None
        assert doc["leveling"] is None

        assert_raises(ValidationError, emit_report, errors, snr, csv_path, "xml")
        assert_raises(StorageError, emit_report, errors, snr, os.path.join(self.root_dir, "no", "r.csv"), "csv")
        assert_raises(StorageError, read_csv_report, os.path.join(self.root_dir, "missing.csv"))

    def __test_config(self):
        ExperimentConfig().validate()
        for bad in (
            dict(train_sizes=()),
            dict(train_sizes=(50, 20)),
            dict(train_sizes=(20, 20)),
            dict(train_sizes=(0, 20)),
            dict(validation_size=0),
            dict(seeds=()),
            dict(seeds=(1, 1)),
            dict(mode="shuffled"),
            dict(workers=0),
            dict(train_strategy="grid"),
            dict(sigma_read=-1.0),
        ):
            assert_raises(ValidationError, ExperimentConfig(**bad).validate)


if __name__ == "__main__":
    EvalHarnessTest().main()
