"""Slow, obviously-correct reference implementations used by the tests.

Nothing here imports the package's numerical code paths: loops, sets and
``math`` only, so agreement with the package is evidence of correctness.
"""

import math
from collections import deque

import numpy as np


def taps(sigma, spacing=1.0):
    r = math.ceil(3.0 * sigma / spacing)
    w = [math.exp(-((k * spacing) ** 2) / (2.0 * sigma * sigma)) for k in range(-r, r + 1)]
    s = math.fsum(w)
    return [v / s for v in w]


def convolve_nearest(values, sigma, spacing=1.0):
    """Full 3-D correlation with the outer-product kernel, clamped borders."""
    t = taps(sigma, spacing)
    r = len(t) // 2
    nx, ny, nz = values.shape
    out = np.empty_like(values)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                acc = []
                for a in range(-r, r + 1):
                    ii = min(max(i + a, 0), nx - 1)
                    for b in range(-r, r + 1):
                        jj = min(max(j + b, 0), ny - 1)
                        wab = t[a + r] * t[b + r]
                        for c in range(-r, r + 1):
                            kk = min(max(k + c, 0), nz - 1)
                            acc.append(wab * t[c + r] * values[ii, jj, kk])
                out[i, j, k] = math.fsum(acc)
    return out


def neighbours(idx, dims, connectivity):
    i, j, k = idx
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                steps = abs(di) + abs(dj) + abs(dk)
                if steps == 0 or (connectivity == 6 and steps != 1):
                    continue
                n = (i + di, j + dj, k + dk)
                if all(0 <= n[a] < dims[a] for a in range(3)):
                    yield n


def flood_components(active, connectivity=6):
    """Connected components of a boolean array by breadth-first flood fill."""
    dims = active.shape
    seen = set()
    comps = []
    for idx in zip(*np.nonzero(active)):
        idx = tuple(int(v) for v in idx)
        if idx in seen:
            continue
        comp = {idx}
        seen.add(idx)
        queue = deque([idx])
        while queue:
            cur = queue.popleft()
            for n in neighbours(cur, dims, connectivity):
                if active[n] and n not in seen:
                    seen.add(n)
                    comp.add(n)
                    queue.append(n)
        comps.append(frozenset(comp))
    return comps


def overlap(a_set, b_set):
    return len(a_set & b_set) / len(a_set)


def mean_over(values, voxels):
    return math.fsum(float(values[v]) for v in voxels) / len(voxels)


def quarter_turn_index(idx, axis, n):
    """Where a single voxel goes under one positive quarter turn."""
    i, j, k = idx
    if axis == "x":
        return (i, n - 1 - k, j)
    if axis == "y":
        return (k, j, n - 1 - i)
    return (n - 1 - j, i, k)


def quantiles(values, probs):
    """Linear-interpolation order statistics (Hyndman-Fan type 7)."""
    xs = sorted(values)
    n = len(xs)
    out = []
    for p in probs:
        h = (n - 1) * p
        lo = math.floor(h)
        hi = min(lo + 1, n - 1)
        out.append(xs[lo] + (h - lo) * (xs[hi] - xs[lo]))
    return out


def channel_value(coords, charges, flag_bits, point, channel, r0=1.7, clip=10.0):
    """One potential channel at one point, summed atom by atom."""
    d2 = [math.fsum((c[a] - point[a]) ** 2 for a in range(3)) for c in coords]
    g = [math.exp(-v / (2 * r0 * r0)) for v in d2]
    if channel == 0:
        return max(g)
    if channel == 1:
        return math.fsum(1.0 / (1.0 + v) for v in d2)
    if channel == 2:
        s = math.fsum(q / (1.0 + math.sqrt(v)) for q, v in zip(charges, d2))
        return min(max(s, -clip), clip)
    bit = 1 << (channel - 3)
    return math.fsum(gv for gv, f in zip(g, flag_bits) if f & bit)


def convolve_nearest_np(values, sigma, spacing=1.0):
    """Same as :func:`convolve_nearest`, vectorized over voxels.

    Sums every shifted copy of the edge-padded array weighted by the full
    3-D kernel entry; no separability and no library filtering is used.
    """
    t = taps(sigma, spacing)
    r = len(t) // 2
    padded = np.pad(values, r, mode="edge")
    nx, ny, nz = values.shape
    terms = []
    for a in range(2 * r + 1):
        for b in range(2 * r + 1):
            for c in range(2 * r + 1):
                w = t[a] * t[b] * t[c]
                terms.append(w * padded[a : a + nx, b : b + ny, c : c + nz])
    return math_fsum_stack(terms)


def math_fsum_stack(arrays):
    """Exactly rounded elementwise sum of a list of equal-shape arrays."""
    stack = np.stack(arrays).reshape(len(arrays), -1)
    out = np.array([math.fsum(col) for col in stack.T.tolist()])
    return out.reshape(arrays[0].shape)
