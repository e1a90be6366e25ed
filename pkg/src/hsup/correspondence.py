"""Cross-view patch correspondence supervision and the alignment loss.

Pipeline: directional pixel-fraction overlap matrices between two calibrated
RGB-D views, their symmetrized correspondence matrix, softmax target /
predicted patch distributions, and the cross-entropy alignment loss.

Normative reprojection rule: a source pixel (u, v) with valid depth is lifted
to 3D, transferred through the world frame into the target camera, and
projected to a real-valued pixel.  The target pixel is the nearest integer
pixel ``floor(coord + 0.5)``; the transfer counts iff that pixel is in bounds,
its depth is valid, and the projected depth matches it within the threshold.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .geometry import CameraView

HSUP_MAGIC = b"HSUP"


@dataclass(frozen=True)
class CorrespondenceConfig:
    """Knobs for supervision generation and the alignment loss.

    ``mask_threshold`` drops loss rows whose best overlap is below the
    threshold; ``literal_mode=True`` keeps every row (uniform targets for
    non-overlapping patches).  ``stride`` subsamples source pixels of large
    rasters by an integer factor; 1 means exact.
    """

    n: int = 4
    depth_threshold: float = 0.05
    tau_target: float = 0.1
    tau_predicted: float = 0.07
    mask_threshold: float = 0.01
    literal_mode: bool = False
    stride: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid side must be >= 1")
        if self.depth_threshold <= 0:
            raise ValueError("depth threshold must be positive")
        if self.tau_target <= 0 or self.tau_predicted <= 0:
            raise ValueError("temperatures must be positive")
        if self.mask_threshold < 0:
            raise ValueError("mask threshold must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


class PatchGrid:
    """Row-major n x n tiling of a raster; remainder pixels go to the last
    row/column of patches."""

    def __init__(self, n: int, width: int, height: int):
        if n < 1 or n > min(width, height):
            raise ValueError(f"grid side {n} invalid for {width}x{height} raster")
        self.n = n
        self.width = width
        self.height = height
        self.base_w = width // n
        self.base_h = height // n

    def patch_index(self, u, v):
        """Patch index for pixel columns u, rows v (array-friendly)."""
        col = np.minimum(np.asarray(u) // self.base_w, self.n - 1)
        row = np.minimum(np.asarray(v) // self.base_h, self.n - 1)
        return row * self.n + col


@dataclass(frozen=True)
class OverlapMatrix:
    """Directional pixel-fraction overlap M[i, j] for an ordered view pair."""

    entries: np.ndarray
    direction: tuple

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)


@dataclass(frozen=True)
class CorrespondenceMatrix:
    """Symmetric patch correspondence S = (M_xy + M_yx^T) / 2."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return int(round(self.entries.shape[0] ** 0.5))


def directional_overlap(x: CameraView, y: CameraView, cfg: CorrespondenceConfig) -> OverlapMatrix:
    """Fraction of valid-depth pixels of each patch of X that reproject
    consistently into each patch of Y."""
    n = cfg.n
    grid_x = PatchGrid(n, x.intrinsics.width, x.intrinsics.height)
    grid_y = PatchGrid(n, y.intrinsics.width, y.intrinsics.height)

    us = np.arange(0, x.intrinsics.width, cfg.stride)
    vs = np.arange(0, x.intrinsics.height, cfg.stride)
    uu, vv = np.meshgrid(us, vs)
    uu, vv = uu.ravel(), vv.ravel()

    valid = x.depth.validity[vv, uu]
    src_patch = np.asarray(grid_x.patch_index(uu, vv))
    denom = np.bincount(src_patch[valid], minlength=n * n).astype(np.float64)

    uu, vv = uu[valid], vv[valid]
    src_patch = src_patch[valid]
    z = x.depth.values[vv, uu]

    intr = x.intrinsics
    pts = np.stack(
        [(uu - intr.cx) * z / intr.fx, (vv - intr.cy) * z / intr.fy, z], axis=0
    )
    world = x.pose.rotation @ pts + x.pose.translation[:, None]
    cam_y = y.pose.rotation.T @ (world - y.pose.translation[:, None])

    front = cam_y[2] > 0
    counts = np.zeros((n * n, n * n), dtype=np.float64)
    if np.any(front):
        cam_y = cam_y[:, front]
        src_patch_f = src_patch[front]
        iy = y.intrinsics
        pu = iy.fx * cam_y[0] / cam_y[2] + iy.cx
        pv = iy.fy * cam_y[1] / cam_y[2] + iy.cy
        tu = np.floor(pu + 0.5).astype(np.int64)
        tv = np.floor(pv + 0.5).astype(np.int64)
        inb = (tu >= 0) & (tu < iy.width) & (tv >= 0) & (tv < iy.height)
        tu, tv = tu[inb], tv[inb]
        cam_z = cam_y[2][inb]
        src_patch_f = src_patch_f[inb]
        obs_ok = y.depth.validity[tv, tu]
        consistent = obs_ok & (
            np.abs(cam_z - y.depth.values[tv, tu]) <= cfg.depth_threshold
        )
        tgt_patch = np.asarray(grid_y.patch_index(tu, tv))[consistent]
        src_ok = src_patch_f[consistent]
        np.add.at(counts, (src_ok, tgt_patch), 1.0)

    nz = denom > 0
    counts[nz] /= denom[nz, None]
    return OverlapMatrix(counts, direction=("X", "Y"))


def symmetric_overlap(m_xy: OverlapMatrix, m_yx: OverlapMatrix) -> CorrespondenceMatrix:
    a, b = m_xy.entries, m_yx.entries
    if a.shape != b.shape:
        raise ValueError(f"overlap shapes differ: {a.shape} vs {b.shape}")
    return CorrespondenceMatrix(0.5 * (a + b.T))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def target_distribution(s: CorrespondenceMatrix, row: int, tau_target: float) -> np.ndarray:
    """Softmax of an S row at temperature tau; a zero row yields uniform."""
    if tau_target <= 0:
        raise ValueError("temperature must be positive")
    return _softmax(s.entries[row] / tau_target)


def cosine_matrix(features_x: np.ndarray, features_y: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity; zero vectors have cosine 0 by convention."""
    fx = np.asarray(features_x, dtype=np.float64)
    fy = np.asarray(features_y, dtype=np.float64)
    if fx.ndim != 2 or fy.ndim != 2 or fx.shape[1] != fy.shape[1]:
        raise ValueError(f"feature shapes incompatible: {fx.shape} vs {fy.shape}")
    if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fy))):
        raise ValueError("features must be finite")
    nx = np.linalg.norm(fx, axis=1)
    ny = np.linalg.norm(fy, axis=1)
    sims = fx @ fy.T
    denom = np.outer(nx, ny)
    out = np.zeros_like(sims)
    np.divide(sims, denom, out=out, where=denom > 0)
    return out


def predicted_distribution(
    features_x: np.ndarray, features_y: np.ndarray, row: int, tau_predicted: float
) -> np.ndarray:
    """Softmax over cosine similarities from patch ``row`` of X to Y patches."""
    if tau_predicted <= 0:
        raise ValueError("temperature must be positive")
    sims = cosine_matrix(features_x, features_y)
    return _softmax(sims[row] / tau_predicted)


@dataclass(frozen=True)
class LossReport:
    total: float
    loss_xy: float
    loss_yx: float
    included_xy: int
    included_yx: int


def _directional_loss(s_rows: np.ndarray, q_rows: np.ndarray, cfg: CorrespondenceConfig):
    if cfg.literal_mode:
        included = np.ones(s_rows.shape[0], dtype=bool)
    else:
        included = s_rows.max(axis=1) >= cfg.mask_threshold
    count = int(included.sum())
    if count == 0:
        return 0.0, 0
    p = _softmax(s_rows[included] / cfg.tau_target)
    ce = -np.sum(p * np.log(q_rows[included]), axis=1)
    return float(np.sum(ce) / count), count


def correspondence_loss(
    s: CorrespondenceMatrix,
    features_x: np.ndarray,
    features_y: np.ndarray,
    cfg: CorrespondenceConfig,
) -> LossReport:
    """Bidirectional cross-entropy between geometric targets and feature-
    similarity predictions for one view pair."""
    sims = cosine_matrix(features_x, features_y)
    m = s.entries.shape[0]
    if sims.shape != (m, m):
        raise ValueError(
            f"feature counts {sims.shape} do not match correspondence size {m}"
        )
    q_xy = _softmax(sims / cfg.tau_predicted)
    q_yx = _softmax(sims.T / cfg.tau_predicted)
    loss_xy, inc_xy = _directional_loss(s.entries, q_xy, cfg)
    loss_yx, inc_yx = _directional_loss(s.entries.T, q_yx, cfg)
    return LossReport(loss_xy + loss_yx, loss_xy, loss_yx, inc_xy, inc_yx)


def write_matrix(path, s: CorrespondenceMatrix) -> None:
    """Serialize S as magic + u16 n + u16 reserved + little-endian f32 block."""
    n = s.n
    if s.entries.shape != (n * n, n * n):
        raise ValueError("correspondence matrix is not (n^2, n^2)")
    with open(path, "wb") as f:
        f.write(HSUP_MAGIC)
        f.write(struct.pack("<HH", n, 0))
        f.write(s.entries.astype("<f4").tobytes())


def read_matrix(path) -> CorrespondenceMatrix:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8 or data[:4] != HSUP_MAGIC:
        raise ValueError(f"{path}: bad correspondence file magic")
    n, _reserved = struct.unpack("<HH", data[4:8])
    expected = 8 + n * n * n * n * 4
    if len(data) != expected:
        raise ValueError(f"{path}: truncated correspondence file")
    entries = np.frombuffer(data[8:], dtype="<f4").astype(np.float64)
    return CorrespondenceMatrix(entries.reshape(n * n, n * n))
