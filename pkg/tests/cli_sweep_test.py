#!/usr/bin/env python3

import json
import os

from test_framework.test_framework import TestFramework
from utility.utils import assert_equal

import pandas as pd

REPORTS = ("sweep_report.csv", "sweep_report.json")


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


class CliSweepTest(TestFramework):
    def run_test(self):
        self._run_cli(["genmesh"])
        quick = ["sweep", "--sizes", "20", "100", "--replicates", "2", "--epochs", "200"]

        self.log.info("Two identical sweeps write identical reports")
        lines = self._run_cli(quick + ["--out", "sweep_a"])
        assert_equal(len(lines), 2)
        assert lines[0].startswith("n=20 error "), lines
        self._run_cli(quick + ["--out", "sweep_b"])
        self._run_cli(quick + ["--out", "sweep_c", "--workers", "2"])
        for name in REPORTS:
            a = read_bytes(os.path.join(self.root_dir, "sweep_a", name))
            assert a == read_bytes(os.path.join(self.root_dir, "sweep_b", name)), name
            assert a == read_bytes(os.path.join(self.root_dir, "sweep_c", name)), name

        frame = pd.read_csv(os.path.join(self.root_dir, "sweep_a", "sweep_report.csv"))
        assert_equal(list(frame.columns), ["train_size", "mean_error_mm", "std_error_mm", "mean_snr_db"])
        assert_equal(frame["train_size"].tolist(), [20, 100])
        with open(os.path.join(self.root_dir, "sweep_a", "sweep_report.json"), "r", encoding="utf-8") as f:
            doc = json.load(f)
        assert_equal(len(doc["per_model"]), 4)
        assert all(len(m["per_sample_errors"]) == 20 for m in doc["per_model"])

        self._run_cli(["sweep", "--sizes", "50", "20", "--out", "bad"], expected_code=2)
        self._run_cli(["sweep", "--replicates", "0", "--out", "bad"], expected_code=2)
        self._run_cli(["sweep", "--mode", "shuffled", "--out", "bad"], expected_code=2)

        self.log.info("Default sweep: four sizes, five replicates")
        lines = self._run_cli(["sweep", "--out", "sweep_default"], timeout=3600)
        assert_equal(len(lines), 4)
        frame = pd.read_csv(os.path.join(self.root_dir, "sweep_default", "sweep_report.csv"))
        assert_equal(frame["train_size"].tolist(), [20, 50, 80, 100])
        for n, mean, std, snr in frame.itertuples(index=False):
            self.log.info("n=%d: %.3f +- %.3f mm, %.2f dB", n, mean, std, snr)


if __name__ == "__main__":
    CliSweepTest().main()
