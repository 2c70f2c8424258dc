"""Flat TOML run configuration; command-line flags override file values.

Every random stream of a run is derived from the single `seed` key, so one
config file plus one seed reproduces all artifacts.
"""
import dataclasses
import logging
import os

import rtoml

from capskin.errors import SchemaError, StorageError, ValidationError
from capskin.evalharness import SWEEP_MODES, ExperimentConfig
from capskin.locnet import TrainConfig
from capskin.seeding import derive_seed
from capskin.skinsim import NoiseSpec, SimulatorConfig

_LOGGER = logging.getLogger(__name__)

RUN_CONFIG_FILE = "run_config.toml"
_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    mesh: str = "semicone.obj"
    out: str = "out"
    seed: int = 0
    loglevel: str = "INFO"
    # simulator
    baseline_low: float = 900.0
    baseline_high: float = 1100.0
    sensitivity_low: float = 80.0
    sensitivity_high: float = 120.0
    kernel_sigma: float = 8.0
    finger_sigma: float = 5.0
    sigma_read: float = NoiseSpec().sigma_read
    frame_count: int = 50
    # calibration
    strategy: str = "even_spacing"
    n: int = 20
    dense_spacing: float = 2.0
    # training
    learning_rate: float = 5e-2
    epochs: int = 2000
    init_scale: float = 1.0
    activation: str = "relu"
    surface_spacing: float = 1.0
    # sweep
    train_sizes: tuple = (20, 50, 80, 100)
    validation_size: int = 20
    replicates: int = 5
    sweep_mode: str = "nested"
    train_strategy: str = "even_spacing"
    workers: int = 1

    def validate(self):
        if self.seed < 0:
            raise ValidationError("seed must be >= 0, got %d" % self.seed)
        if not self.loglevel.isdigit() and self.loglevel.upper() not in _LOG_LEVELS:
            raise ValidationError("loglevel must be a number or one of %s, got %r" % (_LOG_LEVELS, self.loglevel))
        if self.n < 1:
            raise ValidationError("n must be >= 1, got %d" % self.n)
        if self.frame_count < 2:
            raise ValidationError("frame_count must be >= 2, got %d" % self.frame_count)
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1, got %d" % self.replicates)
        if self.sweep_mode not in SWEEP_MODES:
            raise ValidationError("sweep_mode must be one of %s, got %r" % (SWEEP_MODES, self.sweep_mode))
        if not self.surface_spacing > 0 or not self.dense_spacing > 0:
            raise ValidationError("surface_spacing and dense_spacing must be > 0")
        self.simulator_config().validate()
        self.noise_spec("check").validate()
        self.train_config().validate()
        return self

    @property
    def layout_seed(self):
        return derive_seed(self.seed, "layout")

    def simulator_config(self):
        return SimulatorConfig(
            (self.baseline_low, self.baseline_high),
            (self.sensitivity_low, self.sensitivity_high),
            self.kernel_sigma,
            self.finger_sigma,
        )

    def noise_spec(self, component):
        return NoiseSpec(self.sigma_read, derive_seed(self.seed, component))

    def train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=derive_seed(self.seed, "train"),
            init_scale=self.init_scale,
            activation=self.activation,
        )

    def experiment_config(self):
        return ExperimentConfig(
            train_sizes=tuple(self.train_sizes),
            validation_size=self.validation_size,
            train_strategy=self.train_strategy,
            seeds=tuple(derive_seed(self.seed, "replicate-%d" % i) for i in range(self.replicates)),
            mode=self.sweep_mode,
            layout_seed=self.layout_seed,
            simulator=self.simulator_config(),
            sigma_read=self.sigma_read,
            train=self.train_config(),
            frame_count=self.frame_count,
            surface_spacing=self.surface_spacing,
            dense_spacing=self.dense_spacing,
            workers=self.workers,
        )

    def to_dict(self):
        doc = dataclasses.asdict(self)
        doc["train_sizes"] = list(self.train_sizes)
        return doc


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key, value):
    default = _FIELDS[key].default
    if isinstance(default, bool) or default is None:
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) for v in value):
            raise ValidationError("config key %r must be a list of integers" % key)
        return tuple(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError("config key %r must be a number, got %r" % (key, value))
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError("config key %r must be an integer, got %r" % (key, value))
        return value
    if not isinstance(value, str):
        raise ValidationError("config key %r must be a string, got %r" % (key, value))
    return value


def read_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = rtoml.load(f)
    except OSError as e:
        raise StorageError("cannot read config %s: %s" % (path, e)) from e
    except rtoml.TomlParsingError as e:
        raise SchemaError("%s: invalid TOML: %s" % (path, e)) from e
    unknown = sorted(set(doc) - set(_FIELDS))
    if unknown:
        raise ValidationError("%s: unknown config keys %s" % (path, unknown))
    return doc


def load_run_config(path=None, overrides=None):
    """Defaults, then the TOML file at `path`, then non-None `overrides`."""
    values = {}
    if path is not None:
        for key, value in read_config_file(path).items():
            values[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    return RunConfig(**values).validate()


def write_run_config(config, out_dir):
    path = os.path.join(out_dir, RUN_CONFIG_FILE)
    try:
        with open(path, "w", encoding="utf-8") as f:
            rtoml.dump(config.to_dict(), f)
    except OSError as e:
        raise StorageError("cannot write %s: %s" % (path, e)) from e
    _LOGGER.debug("Wrote effective configuration %s", path)
    return path
