"""Independent reference computations the implementation is checked against.

Deliberately naive: pure-Python loops, no shared helpers with the package.
"""

import math


def knn_mean_bruteforce(points, i, k):
    xi, yi = points[i]
    dists = []
    for j, (x, y) in enumerate(points):
        if j == i:
            continue
        dx, dy = x - xi, y - yi
        dists.append(math.sqrt(dx * dx + dy * dy))
    dists.sort()
    if len(dists) < k:
        return None
    return math.fsum(dists[:k]) / k


def gaussian_direct(center, sigma, rows, cols, truncation):
    """Evaluate every cell centre; unit-normalize over the in-support cells."""
    x, y = center
    r2 = (truncation * sigma) ** 2
    grid = [[0.0] * cols for _ in range(rows)]
    z = 0.0
    for r in range(rows):
        for c in range(cols):
            d2 = (c + 0.5 - x) ** 2 + (r + 0.5 - y) ** 2
            if d2 <= r2:
                w = math.exp(-d2 / (2 * sigma * sigma))
                grid[r][c] = w
                z += w
    return [[v / z for v in row] for row in grid]


def block_sums(values, factor):
    rows, cols = len(values), len(values[0])
    out_r, out_c = -(-rows // factor), -(-cols // factor)
    out = [[0.0] * out_c for _ in range(out_r)]
    for r in range(rows):
        for c in range(cols):
            out[r // factor][c // factor] += values[r][c]
    return out


def two_pass_mean_std(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def sorted_neighbour_distances(points, i):
    xi, yi = points[i]
    out = []
    for j, (x, y) in enumerate(points):
        if j != i:
            dx, dy = x - xi, y - yi
            out.append(math.sqrt(dx * dx + dy * dy))
    out.sort()
    return out
