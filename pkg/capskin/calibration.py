"""Calibration datasets: point-log collection, sensor images, baseline and SNR.

Sign convention: raw capacitance falls on touch, so every contact signal here
is a drop, baseline minus raw. In that convention the no-contact level S0 of
the SNR formula is 0 and its numerator is the peak mean drop:

    SNR_i = 20 log10( max over logs of image_i / sigma0_i )
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum, unique

import numpy as np

from capskin.errors import DatasetSchemaError, StorageError, ValidationError
from capskin.geometry import (
    DEFAULT_DENSE_SPACING,
    closest_points_on_mesh,
    sample_even_spacing,
    sample_random_edge_point,
)
from capskin.records import (
    DEFAULT_FRAME_COUNT,
    N_SENSORS,
    PointLog,
    SensorImage,
    frozen_array,
)
from capskin.skinsim import TouchStimulus, simulate_no_contact, simulate_point_log

_LOGGER = logging.getLogger(__name__)

SCHEMA_TAG = "pointlog-v1"
SURFACE_TOLERANCE = 1e-3
DEFAULT_CONTACT_K_SIGMA = 5.0


@unique
class Strategy(Enum):
    RANDOM_EDGE = "random_edge"
    EVEN_SPACING = "even_spacing"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        aliases = {"random": cls.RANDOM_EDGE, "even": cls.EVEN_SPACING}
        if name in aliases:
            return aliases[name]
        try:
            return cls(name)
        except ValueError:
            raise ValidationError(
                "unknown strategy %r (expected one of: random_edge, even_spacing, random, even)" % name
            )


@dataclass(frozen=True, eq=False)
class BaselineStats:
    s0: np.ndarray
    sigma0: np.ndarray
    frame_count: int

    def __post_init__(self):
        object.__setattr__(self, "s0", frozen_array(self.s0, shape=(N_SENSORS,), what="baseline s0"))
        object.__setattr__(
            self, "sigma0", frozen_array(self.sigma0, shape=(N_SENSORS,), what="baseline sigma0")
        )
        if np.any(self.sigma0 < 0):
            raise ValidationError("baseline sigma0 must be >= 0")
        if self.frame_count < 2:
            raise ValidationError("baseline needs >= 2 frames, got %d" % self.frame_count)

    def __eq__(self, other):
        return (
            isinstance(other, BaselineStats)
            and np.array_equal(self.s0, other.s0)
            and np.array_equal(self.sigma0, other.sigma0)
            and self.frame_count == other.frame_count
        )


@dataclass(frozen=True, eq=False)
class CalibrationDataset:
    point_logs: tuple
    baseline: BaselineStats
    strategy: Strategy
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "point_logs", tuple(self.point_logs))
        if not self.point_logs:
            raise ValidationError("calibration dataset needs at least one point log")
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))

    def __len__(self):
        return len(self.point_logs)

    def __eq__(self, other):
        return (
            isinstance(other, CalibrationDataset)
            and self.point_logs == other.point_logs
            and self.baseline == other.baseline
            and self.strategy == other.strategy
            and self.seed == other.seed
        )

    def prefix(self, n):
        """The first `n` logs under the same baseline."""
        if not 1 <= n <= len(self):
            raise ValidationError("prefix size %d outside [1, %d]" % (n, len(self)))
        return CalibrationDataset(self.point_logs[:n], self.baseline, self.strategy, self.seed)

    def locations(self):
        return np.stack([log.location for log in self.point_logs])

    def images(self):
        """Sensor images of every log, shape (n_logs, 64)."""
        return np.stack([sensor_image(log, self.baseline).values for log in self.point_logs])


@dataclass(frozen=True, eq=False)
class SnrReport:
    per_sensor_db: np.ndarray  # NaN marks an undefined sensor
    mean_db: float

    @property
    def defined(self):
        return ~np.isnan(self.per_sensor_db)


def baseline_from_frames(frames):
    """Per-sensor mean and population std of no-contact frames."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2 or frames.shape[1] != N_SENSORS:
        raise ValidationError("baseline frames have shape %s, expected (n, %d)" % (frames.shape, N_SENSORS))
    if frames.shape[0] < 2:
        raise ValidationError("baseline needs >= 2 frames, got %d" % frames.shape[0])
    return BaselineStats(frames.mean(axis=0), frames.std(axis=0), frames.shape[0])


def collect_baseline(grid, noise, rng, frame_count=DEFAULT_FRAME_COUNT):
    if frame_count < 2:
        raise ValidationError("baseline needs >= 2 frames, got %d" % frame_count)
    return baseline_from_frames(simulate_no_contact(grid, frame_count, noise, rng))


def sensor_image(log, baseline):
    return SensorImage(np.mean(baseline.s0 - log.frames, axis=0))


def snr_from_images(images, baseline):
    images = np.atleast_2d(images)
    peak = images.max(axis=0)
    sigma0 = baseline.sigma0
    defined = (peak > 0) & (sigma0 > 0)
    db = np.full(N_SENSORS, np.nan)
    db[defined] = 20.0 * np.log10(peak[defined] / sigma0[defined])
    mean_db = float(np.mean(db[defined])) if np.any(defined) else float("nan")
    return SnrReport(db, mean_db)


def compute_snr(dataset):
    report = snr_from_images(dataset.images(), dataset.baseline)
    undefined = int(np.count_nonzero(~report.defined))
    if undefined:
        _LOGGER.debug("%d sensors have undefined SNR", undefined)
    return report


def contact_sensors(image, baseline, k_sigma=DEFAULT_CONTACT_K_SIGMA, sigma_floor=1e-9):
    """Mask of sensors whose mean drop exceeds k_sigma noise deviations."""
    values = image.values if isinstance(image, SensorImage) else np.asarray(image, dtype=float)
    return values > k_sigma * np.maximum(baseline.sigma0, sigma_floor)


def detect_contact(image, baseline, k_sigma=DEFAULT_CONTACT_K_SIGMA):
    return bool(np.any(contact_sensors(image, baseline, k_sigma)))


def collect_dataset(
    mesh,
    grid,
    strategy,
    n,
    noise,
    rng,
    frame_count=DEFAULT_FRAME_COUNT,
    finger_sigma=5.0,
    dense_spacing=DEFAULT_DENSE_SPACING,
    seed=None,
):
    """Collect a baseline, then `n` point logs at strategy-chosen locations."""
    strategy = Strategy.parse(strategy)
    if n < 1:
        raise ValidationError("a dataset needs n >= 1 point logs, got %d" % n)

    baseline = collect_baseline(grid, noise, rng, frame_count)
    if strategy == Strategy.RANDOM_EDGE:
        locations = [sample_random_edge_point(mesh, rng) for _ in range(n)]
    else:
        locations = sample_even_spacing(mesh, n, dense_spacing)

    logs = [
        simulate_point_log(grid, TouchStimulus(loc, finger_sigma), frame_count, noise, rng)
        for loc in locations
    ]
    dataset = CalibrationDataset(logs, baseline, strategy, noise.seed if seed is None else int(seed))
    _LOGGER.info("Collected %d %s point logs of %d frames", n, strategy.value, frame_count)
    return dataset


def check_on_surface(dataset, mesh, tolerance=SURFACE_TOLERANCE):
    locations = dataset.locations()
    gap = np.linalg.norm(closest_points_on_mesh(mesh, locations) - locations, axis=1)
    off = np.nonzero(gap > tolerance)[0]
    if len(off) > 0:
        raise ValidationError(
            "point log %d lies %.3g mm off the mesh surface" % (off[0], gap[off[0]])
        )


def export_jsonl(dataset, path):
    header = {
        "schema": SCHEMA_TAG,
        "strategy": dataset.strategy.value,
        "seed": int(dataset.seed),
        "baseline_s0": dataset.baseline.s0.tolist(),
        "baseline_sigma0": dataset.baseline.sigma0.tolist(),
        "baseline_frame_count": int(dataset.baseline.frame_count),
    }
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(header) + "\n")
            for log in dataset.point_logs:
                f.write(json.dumps({"loc": log.location.tolist(), "frames": log.frames.tolist()}) + "\n")
    except OSError as e:
        raise StorageError("cannot write dataset %s: %s" % (path, e)) from e


def _vector(path, lineno, doc, key, length):
    if key not in doc:
        raise DatasetSchemaError(path, lineno, "missing field %r" % key)
    value = doc[key]
    if not isinstance(value, list) or len(value) != length:
        raise DatasetSchemaError(
            path, lineno, "field %r must be a list of %d numbers" % (key, length)
        )
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise DatasetSchemaError(path, lineno, "field %r holds non-numeric values" % key)
    if not np.all(np.isfinite(arr)):
        raise DatasetSchemaError(path, lineno, "field %r holds non-finite values" % key)
    return arr


def _parse_log(path, lineno, doc):
    location = _vector(path, lineno, doc, "loc", 3)
    frames = doc.get("frames")
    if not isinstance(frames, list) or not frames:
        raise DatasetSchemaError(path, lineno, "field 'frames' must be a non-empty list")
    rows = []
    for k, frame in enumerate(frames):
        if not isinstance(frame, list) or len(frame) != N_SENSORS:
            size = len(frame) if isinstance(frame, list) else "non-list"
            raise DatasetSchemaError(
                path, lineno, "frame %d has %s values, expected %d" % (k, size, N_SENSORS)
            )
        rows.append(frame)
    try:
        return PointLog(location, rows)
    except (TypeError, ValueError, ValidationError) as e:
        raise DatasetSchemaError(path, lineno, "invalid frames: %s" % e)


def import_jsonl(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise StorageError("cannot read dataset %s: %s" % (path, e)) from e

    docs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetSchemaError(path, lineno, "not valid JSON: %s" % e.msg)
        if not isinstance(doc, dict):
            raise DatasetSchemaError(path, lineno, "expected a JSON object")
        docs.append((lineno, doc))

    if not docs:
        raise DatasetSchemaError(path, 1, "empty dataset file")
    lineno, header = docs[0]
    if header.get("schema") != SCHEMA_TAG:
        raise DatasetSchemaError(
            path, lineno, "schema %r is not %r" % (header.get("schema"), SCHEMA_TAG)
        )
    try:
        strategy = Strategy(header.get("strategy"))
    except ValueError:
        raise DatasetSchemaError(path, lineno, "unknown strategy %r" % header.get("strategy"))
    seed = header.get("seed")
    if not isinstance(seed, int):
        raise DatasetSchemaError(path, lineno, "field 'seed' must be an integer")
    frame_count = header.get("baseline_frame_count", DEFAULT_FRAME_COUNT)
    try:
        baseline = BaselineStats(
            _vector(path, lineno, header, "baseline_s0", N_SENSORS),
            _vector(path, lineno, header, "baseline_sigma0", N_SENSORS),
            int(frame_count),
        )
    except ValidationError as e:
        raise DatasetSchemaError(path, lineno, str(e))

    logs = [_parse_log(path, n, doc) for n, doc in docs[1:]]
    if not logs:
        raise DatasetSchemaError(path, lineno, "dataset has no point logs")
    return CalibrationDataset(logs, baseline, strategy, seed)
