"""Synthetic forward model of the 8x8 mutual-capacitance wire grid.

Eight transmit wires run along iso-angle curves of the surface chart and eight
receive wires along iso-height curves; each crossing is a taxel. A grounded
finger lowers the raw reading of nearby taxels with an isotropic Gaussian
falloff (a stand-in: real intersections have no characterized falloff).

Sensor positions live only in SensorGrid. Nothing downstream of calibration
reads them.
"""
import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from capskin.errors import SchemaError, StorageError, ValidationError
from capskin.geometry import closest_points_on_mesh
from capskin.records import (
    DEFAULT_FRAME_COUNT,
    GRID_SIDE,
    N_SENSORS,
    CapacitanceFrame,
    PointLog,
    as_vec3,
    frozen_array,
)

_LOGGER = logging.getLogger(__name__)

MIN_SENSOR_SEPARATION = 1.0
_FLAT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SimulatorConfig:
    baseline_range: tuple = (900.0, 1100.0)
    sensitivity_range: tuple = (80.0, 120.0)
    kernel_sigma: float = 8.0
    finger_sigma: float = 5.0

    def validate(self):
        for name in ("baseline_range", "sensitivity_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValidationError("%s must satisfy 0 < low <= high, got %r" % (name, (lo, hi)))
        if not self.kernel_sigma > 0:
            raise ValidationError("kernel_sigma must be > 0, got %r" % self.kernel_sigma)
        if not self.finger_sigma > 0:
            raise ValidationError("finger_sigma must be > 0, got %r" % self.finger_sigma)
        return self


@dataclass(frozen=True)
class NoiseSpec:
    # read noise in counts; at 4.0 a default dataset averages under 30 dB SNR
    sigma_read: float = 4.0
    seed: int = 0

    def validate(self):
        if not self.sigma_read >= 0:
            raise ValidationError("sigma_read must be >= 0, got %r" % self.sigma_read)
        return self

    def rng(self):
        return np.random.default_rng(self.seed)


@dataclass(frozen=True, eq=False)
class TouchStimulus:
    location: np.ndarray
    finger_sigma: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "location", as_vec3(self.location, "touch location"))
        if not self.finger_sigma > 0:
            raise ValidationError("finger_sigma must be > 0, got %r" % self.finger_sigma)


@dataclass(frozen=True, eq=False)
class SensorGrid:
    sensor_positions: np.ndarray
    baseline: np.ndarray
    sensitivity: np.ndarray
    kernel_sigma: float
    layout_seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "sensor_positions",
            frozen_array(self.sensor_positions, shape=(N_SENSORS, 3), what="sensor positions"),
        )
        for name in ("baseline", "sensitivity"):
            values = frozen_array(getattr(self, name), shape=(N_SENSORS,), what=name)
            if not np.all(values > 0):
                raise ValidationError("%s must be > 0 for every sensor" % name)
            object.__setattr__(self, name, values)
        if not self.kernel_sigma > 0:
            raise ValidationError("kernel_sigma must be > 0, got %r" % self.kernel_sigma)

    def __eq__(self, other):
        return (
            isinstance(other, SensorGrid)
            and np.array_equal(self.sensor_positions, other.sensor_positions)
            and np.array_equal(self.baseline, other.baseline)
            and np.array_equal(self.sensitivity, other.sensitivity)
            and self.kernel_sigma == other.kernel_sigma
            and self.layout_seed == other.layout_seed
        )


def _chart_points(mesh):
    """Wire crossings on the surface chart, before projection; row 8*tx + rx."""
    lo, hi = mesh.bounding_box()
    extent = hi - lo
    frac = (np.arange(GRID_SIDE) + 0.5) / GRID_SIDE
    tx, rx = np.meshgrid(frac, frac, indexing="ij")
    tx = tx.reshape(-1)
    rx = rx.reshape(-1)

    if extent[2] <= _FLAT_TOLERANCE * np.linalg.norm(extent):
        # flat skin: the chart is the bounding rectangle itself
        return np.stack([lo[0] + tx * extent[0], lo[1] + rx * extent[1], np.full(N_SENSORS, lo[2])], axis=1)

    # cone chart fitted to the bounding box: apex axis along z through the middle of the flat side
    cx = 0.5 * (lo[0] + hi[0])
    half_width = 0.5 * extent[0]
    top = mesh.vertices[mesh.vertices[:, 2] >= hi[2] - 1e-6 * extent[2]]
    top_ratio = float(np.max(np.abs(top[:, 0] - cx)) / half_width)

    theta = math.pi * tx
    r = 1.0 - (1.0 - top_ratio) * rx
    return np.stack(
        [
            cx + half_width * r * np.cos(theta),
            lo[1] + extent[1] * r * np.sin(theta),
            lo[2] + extent[2] * rx,
        ],
        axis=1,
    )


def wire_intersections(mesh):
    return closest_points_on_mesh(mesh, _chart_points(mesh))


def nearest_neighbor_cv(positions):
    """Coefficient of variation of each sensor's nearest-neighbour distance."""
    d, _ = cKDTree(positions).query(positions, k=2)
    nn = d[:, 1]
    return float(np.std(nn) / np.mean(nn))


def build_semicone_skin(mesh, layout_seed, config=None):
    config = (config or SimulatorConfig()).validate()
    positions = wire_intersections(mesh)
    closest = float(np.min(pdist(positions)))
    if closest < MIN_SENSOR_SEPARATION:
        raise ValidationError(
            "mesh too small for an %dx%d grid: two crossings are %.3g mm apart"
            % (GRID_SIDE, GRID_SIDE, closest)
        )

    rng = np.random.default_rng(layout_seed)
    baseline = rng.uniform(*config.baseline_range, size=N_SENSORS)
    sensitivity = rng.uniform(*config.sensitivity_range, size=N_SENSORS)
    grid = SensorGrid(positions, baseline, sensitivity, float(config.kernel_sigma), int(layout_seed))
    _LOGGER.info(
        "Built sensor grid (layout seed %d): nearest-neighbour CV %.4f, min separation %.2f mm",
        layout_seed, nearest_neighbor_cv(positions), closest,
    )
    return grid


def _frames(grid, touch, noise, rng, count):
    eps = rng.standard_normal((count, N_SENSORS)) * noise.sigma_read
    if touch is None:
        return grid.baseline + eps
    d2 = np.sum((grid.sensor_positions - touch.location) ** 2, axis=1)
    width2 = grid.kernel_sigma ** 2 + touch.finger_sigma ** 2
    drop = grid.sensitivity * np.exp(-d2 / (2.0 * width2))
    return grid.baseline - drop + eps


def simulate_frame(grid, touch, noise, rng):
    """One raw frame; `touch` may be None for a no-contact reading."""
    return CapacitanceFrame(_frames(grid, touch, noise, rng, 1)[0])


def simulate_point_log(grid, touch, frame_count=DEFAULT_FRAME_COUNT, noise=None, rng=None):
    if frame_count < 1:
        raise ValidationError("frame_count must be >= 1, got %d" % frame_count)
    noise = noise or NoiseSpec()
    rng = rng if rng is not None else noise.rng()
    return PointLog(touch.location, _frames(grid, touch, noise, rng, frame_count))


def simulate_no_contact(grid, frame_count, noise, rng):
    return _frames(grid, None, noise, rng, frame_count)


def grid_to_json(grid):
    return {
        "positions": grid.sensor_positions.tolist(),
        "baseline": grid.baseline.tolist(),
        "sensitivity": grid.sensitivity.tolist(),
        "kernel_sigma": grid.kernel_sigma,
        "layout_seed": grid.layout_seed,
    }


def save_grid(grid, path):
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(grid_to_json(grid), f, indent=1)
            f.write("\n")
    except OSError as e:
        raise StorageError("cannot write sensor grid %s: %s" % (path, e)) from e


def load_grid(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise StorageError("cannot read sensor grid %s: %s" % (path, e)) from e
    except json.JSONDecodeError as e:
        raise SchemaError("%s: not a sensor grid document: %s" % (path, e)) from e
    try:
        return SensorGrid(
            doc["positions"], doc["baseline"], doc["sensitivity"],
            float(doc["kernel_sigma"]), int(doc["layout_seed"]),
        )
    except (KeyError, TypeError, ValidationError) as e:
        raise SchemaError("%s: invalid sensor grid: %s" % (path, e)) from e
