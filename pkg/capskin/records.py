"""Data records shared by the simulator, calibration and the localizer.

None of these records carries sensor positions: downstream code only ever sees
touch locations and capacitance values.
"""
from dataclasses import dataclass

import numpy as np

from capskin.errors import ValidationError

N_SENSORS = 64
GRID_SIDE = 8
DEFAULT_FRAME_COUNT = 50


def frozen_array(values, dtype=float, shape=None, what="array"):
    arr = np.array(values, dtype=dtype, copy=True)
    if shape is not None and arr.shape != shape:
        raise ValidationError("%s has shape %s, expected %s" % (what, arr.shape, shape))
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise ValidationError("%s contains non-finite values" % what)
    arr.flags.writeable = False
    return arr


def as_vec3(values, what="point"):
    return frozen_array(values, shape=(3,), what=what)


@dataclass(frozen=True, eq=False)
class CapacitanceFrame:
    """One raw reading of all 64 taxels, ordered by sensor index 8*tx + rx."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", frozen_array(self.values, shape=(N_SENSORS,), what="frame")
        )

    def __eq__(self, other):
        return isinstance(other, CapacitanceFrame) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class PointLog:
    """A ground-truth touch location with its raw frames (frame_count x 64)."""

    location: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "location", as_vec3(self.location, "point log location"))
        frames = np.array(self.frames, dtype=float)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] != N_SENSORS:
            raise ValidationError(
                "point log frames have shape %s, expected (>=1, %d)" % (frames.shape, N_SENSORS)
            )
        object.__setattr__(self, "frames", frozen_array(frames, what="point log frames"))

    @property
    def frame_count(self):
        return self.frames.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, PointLog)
            and np.array_equal(self.location, other.location)
            and np.array_equal(self.frames, other.frames)
        )


@dataclass(frozen=True, eq=False)
class SensorImage:
    """Per-sensor mean contact signal (baseline minus raw) of one point log."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", frozen_array(self.values, shape=(N_SENSORS,), what="sensor image")
        )

    def __eq__(self, other):
        return isinstance(other, SensorImage) and np.array_equal(self.values, other.values)
