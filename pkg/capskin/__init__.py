"""Contact localization toolchain for a 3D capacitive skin."""

__version__ = "0.1.0"
