"""Finite-difference stencils, cell quadrature and masked-run helpers.

All routines assume a uniform grid. Stencils near the ends of a contiguous
run of valid points are shifted (one-sided) rather than truncated, so the
formal order is kept everywhere inside the run.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


def fd_weights(z: float, nodes, m: int) -> np.ndarray:
    """Fornberg weights for derivatives ``0..m`` at ``z`` from ``nodes``.

    Returns an array of shape ``(m + 1, len(nodes))``.
    """
    x = np.asarray(nodes, dtype=float)
    n = x.size
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


@lru_cache(maxsize=None)
def _offset_weights(offsets: tuple, order: int) -> np.ndarray:
    return fd_weights(0.0, offsets, order)[order]


@lru_cache(maxsize=None)
def _cell_weights(offsets: tuple) -> np.ndarray:
    # integral over [0, 1] of the Lagrange interpolant through integer offsets
    o = np.asarray(offsets, dtype=float)
    p = o.size
    vander = np.vander(o, p, increasing=True).T
    moments = 1.0 / np.arange(1, p + 1)
    return np.linalg.solve(vander, moments)


def runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges ``(lo, hi)`` of the True runs in ``mask``."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    d = np.diff(m.astype(np.int8))
    starts = np.flatnonzero(d == 1)
    stops = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), stops.tolist()))


def _start(want: int, width: int, lo: int, hi: int) -> int:
    # clamp a stencil start so [start, start + width) stays inside [lo, hi]
    return int(min(max(want, lo), hi - width + 1))


def masked_derivative(values, dx: float, order: int = 1, mask=None, points: int = 9) -> np.ndarray:
    """Derivative of ``values`` at every valid point using only valid neighbours.

    Points outside ``mask`` (or in runs shorter than ``order + 2``) get NaN.
    """
    f = np.asarray(values, dtype=float)
    n = f.size
    if mask is None:
        mask = np.ones(n, dtype=bool)
    out = np.full(n, np.nan)
    for lo, hi in runs(mask):
        length = hi - lo + 1
        p = min(points, length)
        if p < order + 2:
            continue
        half = p // 2
        # interior: one centred stencil, applied by correlation
        offsets = tuple(range(-half, p - half))
        w = _offset_weights(offsets, order)
        first, last = lo + half, hi - (p - half - 1)
        if last >= first:
            seg = f[lo:hi + 1]
            out[first:last + 1] = np.correlate(seg, w, mode="valid") / dx**order
        for j in list(range(lo, min(first, hi + 1))) + list(range(max(last + 1, lo), hi + 1)):
            s = _start(j - half, p, lo, hi)
            offs = tuple(range(s - j, s - j + p))
            out[j] = _offset_weights(offs, order) @ f[s:s + p] / dx**order
    return out


def cell_integrals(values, dx: float, mask=None, points: int = 8) -> np.ndarray:
    """Integrals over each cell ``[x_i, x_{i+1}]`` from nodal samples.

    Cells with an invalid endpoint integrate to zero. Returns ``n - 1`` values.
    """
    f = np.asarray(values, dtype=float)
    n = f.size
    if mask is None:
        mask = np.ones(n, dtype=bool)
    out = np.zeros(n - 1)
    for lo, hi in runs(mask):
        ncell = hi - lo
        if ncell < 1:
            continue
        p = min(points, ncell + 1)
        left = p // 2 - 1
        offsets = tuple(range(-left, p - left))
        w = _cell_weights(offsets)
        first, last = lo + left, hi - (p - left - 1)
        if last >= first:
            out[first:last + 1] = np.correlate(f[lo:hi + 1], w, mode="valid") * dx
        for i in list(range(lo, min(first, hi))) + list(range(max(last + 1, lo), hi)):
            s = _start(i - left, p, lo, hi)
            offs = tuple(range(s - i, s - i + p))
            out[i] = _cell_weights(offs) @ f[s:s + p] * dx
    return out


def gauss_cell_integrals(func, x: np.ndarray, nodes: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre integrals of ``func`` and ``|func|`` over each grid cell."""
    gx, gw = leggauss(nodes)
    h = np.diff(x)
    mid = 0.5 * (x[:-1] + x[1:])
    pts = mid[:, None] + 0.5 * h[:, None] * gx[None, :]
    vals = np.asarray(func(pts.ravel()), dtype=float).reshape(pts.shape)
    scale = 0.5 * h
    return (vals * gw).sum(axis=1) * scale, (np.abs(vals) * gw).sum(axis=1) * scale


def two_sided_cumulative(cells: np.ndarray, abs_cells: np.ndarray) -> np.ndarray:
    """Running integral from the left edge, evaluated from whichever end is lighter.

    The integrand is assumed to integrate to ~0 over the whole window. At every
    node the sum is taken from the end that has accumulated less ``|f|``, which
    keeps relative accuracy in both tails where the result is tiny.
    """
    left = np.concatenate([[0.0], np.cumsum(cells)])
    right = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
    a = np.concatenate([[0.0], np.cumsum(abs_cells)])
    b = np.concatenate([np.cumsum(abs_cells[::-1])[::-1], [0.0]])
    return np.where(a <= b, left, -right)


def time_derivative(values, dt: float) -> np.ndarray:
    """Fourth-order derivative along axis 0 (centred inside, one-sided at the ends)."""
    f = np.asarray(values, dtype=float)
    n = f.shape[0]
    if n < 5:
        raise ValueError("need at least 5 time samples for a 4th-order derivative")
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * dt)
    for j in (0, 1, n - 2, n - 1):
        s = _start(j - 2, 5, 0, n - 1)
        w = _offset_weights(tuple(range(s - j, s - j + 5)), 1)
        out[j] = np.tensordot(w, f[s:s + 5], axes=(0, 0)) / dt
    return out


def lagrange_at(x0: float, x: np.ndarray, f: np.ndarray, mask=None, points: int = 8) -> float:
    """Interpolate nodal data to ``x0`` using the nearest valid nodes."""
    valid = np.flatnonzero(np.ones(x.size, bool) if mask is None else mask)
    near = valid[np.argsort(np.abs(x[valid] - x0), kind="stable")[:points]]
    near.sort()
    w = fd_weights(x0, x[near], 0)[0]
    return float(w @ f[near])


def spectral_derivative(values, dx: float, order: int = 1) -> np.ndarray:
    f = np.asarray(values)
    k = 2.0 * np.pi * np.fft.fftfreq(f.size, d=dx)
    out = np.fft.ifft((1j * k) ** order * np.fft.fft(f))
    return out if np.iscomplexobj(f) else out.real


def composite_gauss(func, t: np.ndarray, nodes: int = 16, max_width: float | None = None) -> np.ndarray:
    """Cumulative integral of ``func`` from ``t[0]`` to every entry of ``t``.

    Intervals wider than ``max_width`` are split into equal panels.
    """
    t = np.asarray(t, dtype=float)
    if t.size == 1:
        return np.zeros(1)
    if max_width is not None:
        splits = np.maximum(1, np.ceil(np.abs(np.diff(t)) / max_width).astype(int))
        if np.any(splits > 1):
            fine = np.concatenate([np.linspace(a, b, k + 1)[:-1] for a, b, k in zip(t[:-1], t[1:], splits)]
                                  + [t[-1:]])
            idx = np.concatenate([[0], np.cumsum(splits)])
            return composite_gauss(func, fine, nodes)[idx]
    gx, gw = leggauss(nodes)
    h = np.diff(t)
    mid = 0.5 * (t[:-1] + t[1:])
    pts = mid[:, None] + 0.5 * h[:, None] * gx[None, :]
    vals = np.asarray(func(pts.ravel()), dtype=float).reshape(pts.shape)
    pieces = (vals * gw).sum(axis=1) * 0.5 * h
    return np.concatenate([[0.0], np.cumsum(pieces)])
