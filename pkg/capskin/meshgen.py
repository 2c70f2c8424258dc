"""Procedural fixture meshes.

The semicone is the lateral surface of a truncated half elliptic cone: its base
half-ellipse spans `width` along x and `depth` along y (flat side on y = 0),
rising `height` along z to a top ring scaled by `top_ratio`.
"""
import math

import numpy as np

from capskin.errors import ValidationError
from capskin.geometry import SurfaceMesh

SEMICONE_DIMS = (142.0, 164.0, 81.0)
SEMICONE_THETA_STEPS = 48
SEMICONE_SLANT_STEPS = 16
SEMICONE_TOP_RATIO = 0.35


def semicone_point(dims, top_ratio, theta, t):
    """Point of the analytic semicone at angle theta in [0, pi] and height fraction t in [0, 1]."""
    width, depth, height = dims
    r = 1.0 - (1.0 - top_ratio) * t
    return np.stack(
        np.broadcast_arrays(
            0.5 * width * r * np.cos(theta),
            depth * r * np.sin(theta),
            height * t,
        ),
        axis=-1,
    )


def _grid_triangles(rows, cols):
    # (rows + 1) x (cols + 1) vertex grid, row-major, two triangles per quad
    triangles = []
    for j in range(rows):
        for k in range(cols):
            v00 = j * (cols + 1) + k
            v01 = v00 + 1
            v10 = v00 + cols + 1
            v11 = v10 + 1
            triangles.append((v00, v01, v11))
            triangles.append((v00, v11, v10))
    return triangles


def semicone(
    dims=SEMICONE_DIMS,
    theta_steps=SEMICONE_THETA_STEPS,
    slant_steps=SEMICONE_SLANT_STEPS,
    top_ratio=SEMICONE_TOP_RATIO,
):
    if len(dims) != 3 or not all(d > 0 for d in dims):
        raise ValidationError("semicone dims must be three positive lengths, got %r" % (dims,))
    if theta_steps < 2 or theta_steps % 2 != 0:
        # the angular grid must contain pi/2 so the mesh reaches the full depth
        raise ValidationError("theta_steps must be even and >= 2, got %d" % theta_steps)
    if slant_steps < 1:
        raise ValidationError("slant_steps must be >= 1, got %d" % slant_steps)
    if not 0 < top_ratio <= 1:
        raise ValidationError("top_ratio must be in (0, 1], got %r" % top_ratio)

    theta = np.array([math.pi * k / theta_steps for k in range(theta_steps + 1)])
    t = np.array([j / slant_steps for j in range(slant_steps + 1)])
    tt, th = np.meshgrid(t, theta, indexing="ij")
    vertices = semicone_point(dims, top_ratio, th, tt).reshape(-1, 3)
    # cos(pi) is exact but sin(pi) is not; pin the flat side to y = 0
    vertices[np.isclose(th.reshape(-1), 0.0) | np.isclose(th.reshape(-1), math.pi), 1] = 0.0
    return SurfaceMesh.from_arrays(vertices, _grid_triangles(slant_steps, theta_steps))


def semicone_counts(theta_steps=SEMICONE_THETA_STEPS, slant_steps=SEMICONE_SLANT_STEPS):
    return (slant_steps + 1) * (theta_steps + 1), 2 * slant_steps * theta_steps


def flat_rectangle(width, depth, nx, ny):
    """Rectangle in the z = 0 plane with its corner at the origin."""
    if width <= 0 or depth <= 0 or nx < 1 or ny < 1:
        raise ValidationError("flat rectangle needs positive size and resolution")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, depth, ny + 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    vertices = np.stack([xx.reshape(-1), yy.reshape(-1), np.zeros(xx.size)], axis=1)
    return SurfaceMesh.from_arrays(vertices, _grid_triangles(ny, nx))
