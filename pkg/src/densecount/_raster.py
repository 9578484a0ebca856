"""Compiled inner loop for superposing many unit-mass Gaussian kernels.

Mirrors ``density.gaussian_footprint`` cell for cell; kept separate so the
numpy reference path stays readable.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def render_points(out, xs, ys, sigmas, truncation_radius):
    rows, cols = out.shape
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        s = sigmas[p]
        radius = truncation_radius * s
        r2max = radius * radius
        c0 = max(int(math.ceil(x - 0.5 - radius)), 0)
        c1 = min(int(math.floor(x - 0.5 + radius)), cols - 1)
        r0 = max(int(math.ceil(y - 0.5 - radius)), 0)
        r1 = min(int(math.floor(y - 0.5 + radius)), rows - 1)
        if c1 < c0 or r1 < r0:
            out[int(y), int(x)] += 1.0
            continue
        inv = -0.5 / (s * s)
        nx = c1 - c0 + 1
        ny = r1 - r0 + 1
        dx2 = np.empty(nx)
        wx = np.empty(nx)
        for j in range(nx):
            d = c0 + j + 0.5 - x
            dx2[j] = d * d
            wx[j] = math.exp(d * d * inv)
        dy2 = np.empty(ny)
        wy = np.empty(ny)
        for i in range(ny):
            d = r0 + i + 0.5 - y
            dy2[i] = d * d
            wy[i] = math.exp(d * d * inv)
        z = 0.0
        for i in range(ny):
            for j in range(nx):
                if dy2[i] + dx2[j] <= r2max:
                    z += wy[i] * wx[j]
        if z == 0.0:
            out[int(y), int(x)] += 1.0
            continue
        for i in range(ny):
            for j in range(nx):
                if dy2[i] + dx2[j] <= r2max:
                    out[r0 + i, c0 + j] += wy[i] * wx[j] / z
    return out
