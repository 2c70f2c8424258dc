"""Contact-localization network: sensor image (64) -> hidden (32) -> 3D point.

Trained by plain full-batch gradient descent on the mean over samples of the
summed squared coordinate error (mm^2). Predictions are snapped to the nearest
point of a discretized skin surface, so the localizer only ever answers with
surface points. Nothing here knows where the sensors are.
"""
import json
import logging
from dataclasses import dataclass, replace
from enum import Enum, unique

import numpy as np

from capskin.errors import CorruptModelError, ModelVersionError, StorageError, ValidationError
from capskin.geometry import SurfacePointSet, nearest_surface_point, nearest_surface_points
from capskin.records import N_SENSORS, SensorImage, as_vec3, frozen_array

_LOGGER = logging.getLogger(__name__)

N_HIDDEN = 32
N_OUTPUT = 3
MODEL_VERSION = "v1"
SCALE_FLOOR = 1e-9


@unique
class Activation(Enum):
    RELU = "relu"
    TANH = "tanh"

    def apply(self, z):
        if self == Activation.RELU:
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def derivative(self, z):
        if self == Activation.RELU:
            return np.where(z > 0, 1.0, 0.0)
        return 1.0 - np.tanh(z) ** 2


@dataclass(frozen=True, eq=False)
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: Activation = Activation.RELU

    def __post_init__(self):
        shapes = {
            "w1": (N_HIDDEN, N_SENSORS),
            "b1": (N_HIDDEN,),
            "w2": (N_OUTPUT, N_HIDDEN),
            "b2": (N_OUTPUT,),
        }
        for name, shape in shapes.items():
            object.__setattr__(self, name, frozen_array(getattr(self, name), shape=shape, what=name))
        object.__setattr__(self, "activation", Activation(self.activation))

    @classmethod
    def zeros(cls, activation=Activation.RELU):
        return cls(
            np.zeros((N_HIDDEN, N_SENSORS)), np.zeros(N_HIDDEN),
            np.zeros((N_OUTPUT, N_HIDDEN)), np.zeros(N_OUTPUT), activation,
        )

    @classmethod
    def initialize(cls, seed, init_scale=1.0, activation=Activation.RELU):
        """Uniform in +-init_scale/sqrt(fan_in), drawn w1, b1, w2, b2 in that order."""
        rng = np.random.default_rng(seed)
        s1 = init_scale / np.sqrt(N_SENSORS)
        s2 = init_scale / np.sqrt(N_HIDDEN)
        return cls(
            rng.uniform(-s1, s1, (N_HIDDEN, N_SENSORS)),
            rng.uniform(-s1, s1, N_HIDDEN),
            rng.uniform(-s2, s2, (N_OUTPUT, N_HIDDEN)),
            rng.uniform(-s2, s2, N_OUTPUT),
            activation,
        )

    def __eq__(self, other):
        return (
            isinstance(other, MlpParams)
            and self.activation == other.activation
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("w1", "b1", "w2", "b2"))
        )


@dataclass(frozen=True)
class ParamGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", frozen_array(self.mean, shape=(N_SENSORS,), what="norm mean"))
        object.__setattr__(self, "scale", frozen_array(self.scale, shape=(N_SENSORS,), what="norm scale"))
        if not np.all(self.scale > 0):
            raise ValidationError("norm scale must be > 0 for every sensor")

    @classmethod
    def identity(cls):
        return cls(np.zeros(N_SENSORS), np.ones(N_SENSORS))

    @classmethod
    def fit(cls, images, floor=SCALE_FLOOR):
        """Per-sensor z-scoring; returns the stats and the sensors whose scale was floored."""
        images = np.asarray(images, dtype=float)
        scale = images.std(axis=0)
        floored = np.nonzero(scale < floor)[0]
        scale[floored] = floor
        return cls(images.mean(axis=0), scale), floored

    def standardize(self, images):
        return (images - self.mean) / self.scale

    def __eq__(self, other):
        return (
            isinstance(other, NormStats)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.scale, other.scale)
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-2
    epochs: int = 2000
    batch: str = "full_batch"
    seed: int = 0
    init_scale: float = 1.0
    activation: str = "relu"

    def validate(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0, got %r" % self.learning_rate)
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1, got %d" % self.epochs)
        if self.batch != "full_batch":
            raise ValidationError("only full_batch training is supported, got %r" % self.batch)
        if not self.init_scale > 0:
            raise ValidationError("init_scale must be > 0, got %r" % self.init_scale)
        try:
            Activation(self.activation)
        except ValueError:
            raise ValidationError("unknown activation %r" % self.activation)
        return self


@dataclass(frozen=True, eq=False)
class TrainedLocalizer:
    params: MlpParams
    norm: NormStats
    surface: SurfacePointSet
    train_loss_history: tuple
    warnings: tuple = ()


def _image_matrix(images):
    rows = [im.values if isinstance(im, SensorImage) else im for im in images]
    x = np.atleast_2d(np.asarray(rows, dtype=float))
    if x.ndim != 2 or x.shape[1] != N_SENSORS:
        raise ValidationError("sensor images have shape %s, expected (n, %d)" % (x.shape, N_SENSORS))
    if not np.all(np.isfinite(x)):
        raise ValidationError("sensor image contains non-finite values")
    return x


def _batch(images, targets):
    x = _image_matrix(images)
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(x) == 0:
        raise ValidationError("empty batch")
    if t.shape != (len(x), N_OUTPUT):
        raise ValidationError("got %d images but targets of shape %s" % (len(x), t.shape))
    return x, t


def _forward(params, x):
    z1 = x @ params.w1.T + params.b1
    h = params.activation.apply(z1)
    return z1, h, h @ params.w2.T + params.b2


def _loss_and_grad(params, x, t):
    n = len(x)
    z1, h, y = _forward(params, x)
    r = y - t
    loss = float(np.mean(np.sum(r * r, axis=1)))
    dy = (2.0 / n) * r
    dz1 = (dy @ params.w2) * params.activation.derivative(z1)
    return loss, ParamGrads(dz1.T @ x, dz1.sum(axis=0), dy.T @ h, dy.sum(axis=0))


def forward_batch(params, norm, images):
    return _forward(params, norm.standardize(_image_matrix(images)))[2]


def forward(params, norm, image):
    return as_vec3(forward_batch(params, norm, [image])[0], "network output")


def mse_loss(params, norm, images, targets):
    x, t = _batch(images, targets)
    r = _forward(params, norm.standardize(x))[2] - t
    return float(np.mean(np.sum(r * r, axis=1)))


def grad(params, norm, images, targets):
    x, t = _batch(images, targets)
    return _loss_and_grad(params, norm.standardize(x), t)[1]


def _target_stats(t):
    """Centroid and RMS radius of the training targets; the radius is floored like NormStats."""
    mean = t.mean(axis=0)
    scale = float(np.sqrt(np.mean(np.sum((t - mean) ** 2, axis=1))))
    return mean, max(scale, SCALE_FLOOR)


def train_on_images(images, targets, surface, config=None):
    """Full-batch gradient descent on standardized images and standardized targets.

    Targets are centered on their centroid and divided by their RMS radius while
    training. The returned output layer has the target stats folded back in and
    maps straight to mm; the loss history is in mm^2.
    """
    config = (config or TrainConfig()).validate()
    x_raw, t = _batch(images, targets)
    norm, floored = NormStats.fit(x_raw)
    warnings = []
    if len(floored) > 0:
        msg = "sensors %s are constant across all training images; scale floored at %g" % (
            floored.tolist(), SCALE_FLOOR,
        )
        _LOGGER.warning(msg)
        warnings.append(msg)
    x = norm.standardize(x_raw)
    t_mean, t_scale = _target_stats(t)
    t_std = (t - t_mean) / t_scale

    params = MlpParams.initialize(config.seed, config.init_scale, Activation(config.activation))
    w1, b1, w2, b2 = (np.array(a) for a in (params.w1, params.b1, params.w2, params.b2))
    lr = config.learning_rate
    history = []
    for epoch in range(config.epochs):
        loss, g = _loss_and_grad(params, x, t_std)
        loss *= t_scale * t_scale
        if not np.isfinite(loss):
            raise ValidationError(
                "training diverged at epoch %d (loss %r); lower learning_rate" % (epoch, loss)
            )
        history.append(loss)
        w1 -= lr * g.w1
        b1 -= lr * g.b1
        w2 -= lr * g.w2
        b2 -= lr * g.b2
        if not all(np.all(np.isfinite(a)) for a in (w1, b1, w2, b2)):
            raise ValidationError(
                "training diverged at epoch %d (non-finite weights); lower learning_rate" % epoch
            )
        params = replace(params, w1=w1, b1=b1, w2=w2, b2=b2)
        if epoch % 500 == 0:
            _LOGGER.debug("epoch %d loss %.6g mm^2", epoch, loss)

    params = replace(params, w2=t_scale * params.w2, b2=t_scale * params.b2 + t_mean)
    _LOGGER.info(
        "Trained on %d images for %d epochs: loss %.6g -> %.6g mm^2",
        len(x), config.epochs, history[0], history[-1],
    )
    return TrainedLocalizer(params, norm, surface, tuple(history), tuple(warnings))


def train(dataset, surface, config=None):
    """Fit the network to one sensor image per point log of `dataset`."""
    return train_on_images(dataset.images(), dataset.locations(), surface, config)


def predict(localizer, image):
    raw = forward(localizer.params, localizer.norm, image)
    return nearest_surface_point(raw, localizer.surface)


def predict_batch(localizer, images):
    """Surface indices, points and raw distances for many images at once."""
    raw = forward_batch(localizer.params, localizer.norm, images)
    indices, distances = nearest_surface_points(raw, localizer.surface)
    return indices, localizer.surface.points[indices], distances


def to_json(localizer):
    p = localizer.params
    return {
        "version": MODEL_VERSION,
        "params": {
            "w1": p.w1.tolist(),
            "b1": p.b1.tolist(),
            "w2": p.w2.tolist(),
            "b2": p.b2.tolist(),
            "activation": p.activation.value,
        },
        "norm": {"mean": localizer.norm.mean.tolist(), "scale": localizer.norm.scale.tolist()},
        "surface_spacing": localizer.surface.spacing,
        "surface_points": localizer.surface.points.tolist(),
        "loss_history": list(localizer.train_loss_history),
        "warnings": list(localizer.warnings),
    }


def from_json(doc):
    if not isinstance(doc, dict) or "version" not in doc:
        raise CorruptModelError("model document has no version")
    if doc["version"] != MODEL_VERSION:
        raise ModelVersionError(doc["version"], MODEL_VERSION)
    try:
        p = doc["params"]
        params = MlpParams(p["w1"], p["b1"], p["w2"], p["b2"], Activation(p["activation"]))
        norm = NormStats(doc["norm"]["mean"], doc["norm"]["scale"])
        surface = SurfacePointSet(doc["surface_points"], float(doc["surface_spacing"]))
        history = tuple(float(v) for v in doc["loss_history"])
        warnings = tuple(doc.get("warnings", ()))
    except (KeyError, TypeError, ValueError, ValidationError) as e:
        raise CorruptModelError("invalid model document: %s" % e) from e
    if len(surface) == 0:
        raise CorruptModelError("model has an empty surface point set")
    return TrainedLocalizer(params, norm, surface, history, warnings)


def save(localizer, path):
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(to_json(localizer), f)
            f.write("\n")
    except OSError as e:
        raise StorageError("cannot write model %s: %s" % (path, e)) from e


def load(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise StorageError("cannot read model %s: %s" % (path, e)) from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorruptModelError("%s: corrupt model file: %s" % (path, e)) from e
    return from_json(doc)
