"""Shared scene builders, byte builders, and independent oracles.

The oracles here are deliberately naive re-statements of each operation's
definition (scans, flood fills, all-pairs searches); tests compare the
shipped implementations against them rather than against themselves.
"""

from __future__ import annotations

import math
import struct
from collections import deque

import numpy as np
import pytest

from lidarmaps import _kernels
from lidarmaps.grid import GridSpec, Raster

GSD = 0.5


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Touch every dispatched kernel once so timed tests pay no compile."""
    z = np.zeros((4, 4))
    m = np.zeros((4, 4), bool)
    m[1, 1] = True
    _kernels.rasterize_min(
        np.array([0.1]), np.array([0.1]), np.array([1.0]),
        0.0, 0.0, 0.5, 0, 0, 4, 4,
    )
    _kernels.nearest_fill(z, m)
    _kernels.erode_square(m, 1)
    _kernels.dilate_square(m, 1)
    _kernels.erode_diamond(m, 1)
    _kernels.dilate_diamond(m, 1)
    _kernels.label_components(m, True)
    _kernels.label_components(m, False)
    _kernels.distinct_count(np.zeros((4, 4), np.int64), 3)
    _kernels.masked_median(z, m, 3)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def raster_of(values, gsd: float = GSD, origin=(0.0, 0.0), nodata=-9999.0) -> Raster:
    arr = np.asarray(values)
    spec = GridSpec(origin[0], origin[1], gsd, arr.shape[1], arr.shape[0])
    return Raster(spec, arr, nodata)


def points_from_field(zfield: np.ndarray, gsd: float = GSD, origin=(0.0, 0.0)) -> np.ndarray:
    """One return per cell at the cell center; NaN cells emit no point."""
    zfield = np.asarray(zfield, np.float64)
    h, w = zfield.shape
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    xs = origin[0] + (cols + 0.5) * gsd
    ys = origin[1] + (rows + 0.5) * gsd
    pts = np.column_stack([xs.ravel(), ys.ravel(), zfield.ravel()])
    return pts[np.isfinite(pts[:, 2])]


def build_las(
    points,
    *,
    version=(1, 2),
    point_format: int = 0,
    record_length: int | None = None,
    scale=(0.001, 0.001, 0.001),
    offset=(0.0, 0.0, 0.0),
    point_count: int | None = None,
    use_extended_count: bool = False,
    header_size: int | None = None,
    data_offset: int | None = None,
) -> bytes:
    """Assemble LAS bytes field by field, independent of the reader."""
    points = np.asarray(points, np.float64).reshape(-1, 3)
    core = {0: 20, 1: 28, 2: 26, 3: 34}
    rl = record_length if record_length is not None else core.get(point_format & 0x7F, 20)
    major, minor = version
    sizes = {1: 227, 2: 227, 3: 235, 4: 375}
    hs = header_size if header_size is not None else sizes.get(minor, 227)
    do = data_offset if data_offset is not None else hs
    n = len(points) if point_count is None else point_count
    legacy = 0 if use_extended_count else n
    if points.size:
        mins = points.min(axis=0)
        maxs = points.max(axis=0)
    else:
        mins = maxs = (0.0, 0.0, 0.0)
    head = struct.pack(
        "<4sHH16sBB32s32sHHHIIBHI5I12d",
        b"LASF", 0, 0, b"\0" * 16,
        major, minor,
        b"synthetic".ljust(32, b"\0"), b"tests".ljust(32, b"\0"),
        1, 2024,
        hs, do, 0,
        point_format, rl, legacy,
        0, 0, 0, 0, 0,
        scale[0], scale[1], scale[2],
        offset[0], offset[1], offset[2],
        maxs[0], mins[0], maxs[1], mins[1], maxs[2], mins[2],
    )
    head = head.ljust(hs, b"\0")
    if use_extended_count and len(head) >= 255:
        head = head[:247] + struct.pack("<Q", n) + head[255:]
    body = bytearray()
    for x, y, z in points:
        xi = round((x - offset[0]) / scale[0])
        yi = round((y - offset[1]) / scale[1])
        zi = round((z - offset[2]) / scale[2])
        body += struct.pack("<iii", xi, yi, zi).ljust(rl, b"\0")
    return bytes(head[:do].ljust(do, b"\0")) + bytes(body)


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def rasterize_scan(points: np.ndarray, spec: GridSpec):
    """Per-point reference rasterization."""
    zmin = np.full(spec.shape, np.inf)
    counts = np.zeros(spec.shape, np.int64)
    oob = 0
    for x, y, z in points:
        c = math.floor((x - spec.origin_x) / spec.gsd)
        r = math.floor((y - spec.origin_y) / spec.gsd)
        if 0 <= r < spec.height and 0 <= c < spec.width:
            counts[r, c] += 1
            zmin[r, c] = min(zmin[r, c], z)
        else:
            oob += 1
    return zmin, counts, oob


def nearest_fill_scan(values: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """All-pairs nearest-source fill; ties to the row-major earliest."""
    src = np.argwhere(sources)
    out = values.copy()
    for i, j in np.argwhere(~sources):
        d2 = (src[:, 0] - i) ** 2 + (src[:, 1] - j) ** 2
        best = np.lexsort((src[:, 1], src[:, 0], d2))[0]
        out[i, j] = values[src[best, 0], src[best, 1]]
    return out


def _footprint(k: int, shape: str) -> np.ndarray:
    r = k // 2
    di, dj = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    if shape == "square":
        return np.ones((k, k), bool)
    return np.abs(di) + np.abs(dj) <= r


def erode_scan(mask: np.ndarray, k: int, shape: str = "square") -> np.ndarray:
    """Window-scan erosion; cells beyond the border count as empty."""
    r = k // 2
    foot = _footprint(k, shape)
    padded = np.pad(mask, r, constant_values=False)
    wins = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    return wins[:, :, foot].all(axis=-1)


def dilate_scan(mask: np.ndarray, k: int, shape: str = "square") -> np.ndarray:
    r = k // 2
    foot = _footprint(k, shape)
    padded = np.pad(mask, r, constant_values=False)
    wins = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    return wins[:, :, foot].any(axis=-1)


def flood_labels(mask: np.ndarray, eight: bool):
    """BFS labeling, ids by row-major first encounter."""
    if eight:
        offs = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    else:
        offs = [(-1, 0), (0, -1), (0, 1), (1, 0)]
    h, w = mask.shape
    lab = np.zeros(mask.shape, np.int32)
    nxt = 0
    for i in range(h):
        for j in range(w):
            if not mask[i, j] or lab[i, j]:
                continue
            nxt += 1
            lab[i, j] = nxt
            queue = deque([(i, j)])
            while queue:
                a, b = queue.popleft()
                for di, dj in offs:
                    na, nb = a + di, b + dj
                    if 0 <= na < h and 0 <= nb < w and mask[na, nb] and not lab[na, nb]:
                        lab[na, nb] = nxt
                        queue.append((na, nb))
    return lab, nxt


def distinct_scan(vals: np.ndarray, k: int) -> np.ndarray:
    """Set-based distinct count over the border-clipped window."""
    r = k // 2
    h, w = vals.shape
    out = np.zeros((h, w), np.int64)
    for i in range(h):
        for j in range(w):
            window = vals[max(0, i - r):i + r + 1, max(0, j - r):j + r + 1]
            out[i, j] = len(set(window.ravel().tolist()))
    return out


def masked_median_scan(vals: np.ndarray, mask: np.ndarray, k: int) -> np.ndarray:
    r = k // 2
    h, w = vals.shape
    out = np.full((h, w), np.nan)
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            vwin = vals[max(0, i - r):i + r + 1, max(0, j - r):j + r + 1]
            mwin = mask[max(0, i - r):i + r + 1, max(0, j - r):j + r + 1]
            out[i, j] = np.median(np.sort(vwin[mwin]))
    return out


def point_in_rings(x: float, y: float, rings) -> bool:
    """Even-odd crossing count, evaluated edge by edge."""
    inside = False
    for ring in rings:
        for i in range(len(ring) - 1):
            x1, y1 = ring[i]
            x2, y2 = ring[i + 1]
            if (y1 > y) != (y2 > y):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                if x < xint:
                    inside = not inside
    return inside


def instance_census(pred: np.ndarray, truth_labels: np.ndarray):
    """Brute-force detection/commission census.

    Returns (detected_truth_ids, commission_flags_by_pred_component) with
    pred components labeled by 8-connected flood fill.
    """
    detected = set()
    for lb in np.unique(truth_labels):
        if lb == 0:
            continue
        cells = truth_labels == lb
        if 2 * np.count_nonzero(pred & cells) > np.count_nonzero(cells):
            detected.add(int(lb))
    plab, n = flood_labels(pred, eight=True)
    commissions = set()
    for lb in range(1, n + 1):
        cells = plab == lb
        if 2 * np.count_nonzero(cells & (truth_labels > 0)) <= np.count_nonzero(cells):
            commissions.add(lb)
    return detected, commissions
