"""Scene ingestion and supervision synthesis.

Reads calibrated RGB-D scene manifests (``hatch-manifest/1``), produces
per-scene supervision bundles (all-pairs correspondence matrices + teacher
action plans), and generates deterministic synthetic desk-scale fixtures.

Bundle directory layout::

    manifest.json     canonical copy of the source manifest
    S_{i}_{j}.hsup    one correspondence matrix per unordered view pair
    actions.json      teacher plans, canonical annotation serialization
    config.json       generation config snapshot (regenerates bit-identically)
    degenerate.json   pairs that could not be compiled, with reasons
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import shutil
from dataclasses import dataclass, field

import numpy as np

from . import pfm
from .actions import (
    ActionAnnotationSet,
    ActionPlan,
    CompileError,
    CompileTolerances,
    compile_plan,
    parse_annotations,
    required_pairs,
    serialize_annotations,
)
from .correspondence import (
    CorrespondenceConfig,
    CorrespondenceMatrix,
    directional_overlap,
    read_matrix,
    symmetric_overlap,
    write_matrix,
)
from .geometry import (
    CameraView,
    DepthMap,
    Intrinsics,
    Pose,
    RelativePose,
    pitch_matrix,
    relative_pose,
    yaw_matrix,
)

MANIFEST_SCHEMA = "hatch-manifest/1"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ViewRecord:
    intrinsics: Intrinsics
    pose: Pose
    depth_path: str
    image_path: str = None


@dataclass(frozen=True)
class SceneManifest:
    scene_id: str
    views: tuple
    root: str = "."

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if not self.views:
            raise ManifestError("manifest must contain at least one view")

    def load_view(self, index: int) -> CameraView:
        record = self.views[index]
        values = pfm.read_pfm(os.path.join(self.root, record.depth_path))
        if values.shape != (record.intrinsics.height, record.intrinsics.width):
            raise ManifestError(
                f"view {index}: depth raster {values.shape[::-1]} does not match "
                f"intrinsics {(record.intrinsics.width, record.intrinsics.height)}"
            )
        return CameraView(record.intrinsics, record.pose, DepthMap(values))


def _pose_from_flat(flat, index: int) -> Pose:
    mat = np.asarray(flat, dtype=np.float64)
    if mat.shape != (16,):
        raise ManifestError(f"view {index}: pose must be 16 row-major reals")
    mat = mat.reshape(4, 4)
    if np.max(np.abs(mat[3] - np.array([0, 0, 0, 1.0]))) > 1e-9:
        raise ManifestError(f"view {index}: pose bottom row is not (0, 0, 0, 1)")
    try:
        return Pose(mat[:3, :3], mat[:3, 3])
    except ValueError as exc:
        raise ManifestError(f"view {index}: {exc}") from None


def manifest_to_dict(manifest: SceneManifest) -> dict:
    views = []
    for record in manifest.views:
        intr = record.intrinsics
        flat = np.eye(4)
        flat[:3, :3] = record.pose.rotation
        flat[:3, 3] = record.pose.translation
        entry = {
            "depth": record.depth_path,
            "intrinsics": {
                "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                "width": intr.width, "height": intr.height,
            },
            "pose": [float(v) for v in flat.ravel()],
        }
        if record.image_path is not None:
            entry["image"] = record.image_path
        views.append(entry)
    return {"schema": MANIFEST_SCHEMA, "scene_id": manifest.scene_id, "views": views}


def manifest_from_dict(data: dict, root: str) -> SceneManifest:
    if not isinstance(data, dict) or data.get("schema") != MANIFEST_SCHEMA:
        raise ManifestError(f"expected schema {MANIFEST_SCHEMA!r}, got {data.get('schema')!r}")
    raw_views = data.get("views")
    if not isinstance(raw_views, list) or not raw_views:
        raise ManifestError("manifest must list at least one view")
    views = []
    for index, raw in enumerate(raw_views):
        try:
            ri = raw["intrinsics"]
            intr = Intrinsics(
                fx=float(ri["fx"]), fy=float(ri["fy"]),
                cx=float(ri["cx"]), cy=float(ri["cy"]),
                width=int(ri["width"]), height=int(ri["height"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"view {index}: bad intrinsics: {exc}") from None
        pose = _pose_from_flat(raw.get("pose"), index)
        if "depth" not in raw:
            raise ManifestError(f"view {index}: missing depth path")
        views.append(ViewRecord(intr, pose, str(raw["depth"]), raw.get("image")))
    return SceneManifest(str(data.get("scene_id", "scene")), tuple(views), root)


def load_manifest(path) -> SceneManifest:
    """Load and eagerly validate a manifest, including depth raster dims."""
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: malformed JSON: {exc}") from None
    manifest = manifest_from_dict(data, os.path.dirname(os.path.abspath(path)))
    for index in range(len(manifest.views)):
        manifest.load_view(index)  # dimension/pose validation
    return manifest


def save_manifest(manifest: SceneManifest, path) -> None:
    with open(path, "w") as f:
        json.dump(manifest_to_dict(manifest), f, indent=2, sort_keys=True)
        f.write("\n")


@dataclass(frozen=True)
class SupervisionBundle:
    scene_id: str
    matrices: dict  # (i, j) -> CorrespondenceMatrix, i < j
    actions: ActionAnnotationSet
    degenerate: tuple  # ((i, j, reason), ...)
    correspondence_config: CorrespondenceConfig
    compile_tolerances: CompileTolerances
    manifest: SceneManifest


def build_supervision(
    manifest: SceneManifest,
    cfg: CorrespondenceConfig = CorrespondenceConfig(),
    tol: CompileTolerances = CompileTolerances(),
) -> SupervisionBundle:
    """All-pairs correspondence matrices and teacher action plans for a scene.

    Pairs whose relative rotation carries non-compilable roll are recorded as
    degenerate instead of aborting the scene.
    """
    views = [manifest.load_view(i) for i in range(len(manifest.views))]
    matrices = {}
    entries = []
    degenerate = []
    for i, j in required_pairs(len(views)):
        m_ij = directional_overlap(views[i], views[j], cfg)
        m_ji = directional_overlap(views[j], views[i], cfg)
        matrices[(i, j)] = symmetric_overlap(m_ij, m_ji)
        rel = relative_pose(views[i].pose, views[j].pose)
        try:
            entries.append((i, j, compile_plan(rel, tol)))
        except CompileError as exc:
            degenerate.append((i, j, str(exc)))
    return SupervisionBundle(
        scene_id=manifest.scene_id,
        matrices=matrices,
        actions=ActionAnnotationSet(tuple(entries)),
        degenerate=tuple(degenerate),
        correspondence_config=cfg,
        compile_tolerances=tol,
        manifest=manifest,
    )


def _config_snapshot(cfg: CorrespondenceConfig, tol: CompileTolerances) -> dict:
    return {
        "correspondence": dataclasses.asdict(cfg),
        "compile_tolerances": dataclasses.asdict(tol),
    }


def write_bundle(bundle: SupervisionBundle, out_dir) -> None:
    """Write a bundle directory atomically (staged then renamed)."""
    out_dir = os.path.abspath(out_dir)
    staging = out_dir + ".tmp"
    if os.path.exists(staging):
        shutil.rmtree(staging)
    os.makedirs(staging)
    save_manifest(bundle.manifest, os.path.join(staging, "manifest.json"))
    for depth_path in {v.depth_path for v in bundle.manifest.views}:
        src = os.path.join(bundle.manifest.root, depth_path)
        dst = os.path.join(staging, depth_path)
        os.makedirs(os.path.dirname(dst) or staging, exist_ok=True)
        if os.path.abspath(src) != os.path.abspath(dst):
            shutil.copyfile(src, dst)
    for (i, j), matrix in sorted(bundle.matrices.items()):
        write_matrix(os.path.join(staging, f"S_{i}_{j}.hsup"), matrix)
    with open(os.path.join(staging, "actions.json"), "w") as f:
        f.write(serialize_annotations(bundle.actions))
        f.write("\n")
    with open(os.path.join(staging, "config.json"), "w") as f:
        json.dump(_config_snapshot(bundle.correspondence_config, bundle.compile_tolerances),
                  f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(staging, "degenerate.json"), "w") as f:
        json.dump([{"from": i, "to": j, "error": reason}
                   for i, j, reason in bundle.degenerate], f, indent=2)
        f.write("\n")
    if os.path.exists(out_dir):
        shutil.rmtree(out_dir)
    os.replace(staging, out_dir)


def read_bundle(directory) -> SupervisionBundle:
    directory = os.path.abspath(directory)
    manifest = load_manifest(os.path.join(directory, "manifest.json"))
    with open(os.path.join(directory, "config.json")) as f:
        snapshot = json.load(f)
    cfg = CorrespondenceConfig(**snapshot["correspondence"])
    tol = CompileTolerances(**snapshot["compile_tolerances"])
    with open(os.path.join(directory, "actions.json")) as f:
        actions = parse_annotations(f.read())
    with open(os.path.join(directory, "degenerate.json")) as f:
        degenerate = tuple(
            (entry["from"], entry["to"], entry["error"]) for entry in json.load(f)
        )
    matrices = {}
    pairs = set(required_pairs(len(manifest.views)))
    for name in sorted(os.listdir(directory)):
        if name.startswith("S_") and name.endswith(".hsup"):
            stem = name[2:-5].split("_")
            pair = (int(stem[0]), int(stem[1]))
            if pair not in pairs:
                raise ManifestError(f"unexpected correspondence file {name}")
            matrices[pair] = read_matrix(os.path.join(directory, name))
    return SupervisionBundle(
        scene_id=manifest.scene_id,
        matrices=matrices,
        actions=actions,
        degenerate=degenerate,
        correspondence_config=cfg,
        compile_tolerances=tol,
        manifest=manifest,
    )


@dataclass(frozen=True)
class SynthSpec:
    """Procedural desk-scale scene: a frontal wall plane with a protruding
    rectangular slab, viewed by roll-free cameras with seeded jitter."""

    n_views: int = 3
    width: int = 64
    height: int = 64
    fov_deg: float = 60.0
    wall_distance: float = 3.0
    slab_distance: float = 2.0
    slab_half_extent: float = 0.6
    max_yaw_deg: float = 10.0
    max_pitch_deg: float = 5.0
    max_offset_m: float = 0.3
    yaw_step_deg: float = 0.0

    @staticmethod
    def from_mapping(data: dict) -> "SynthSpec":
        allowed = {f.name for f in dataclasses.fields(SynthSpec)}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown synth spec fields: {sorted(unknown)}")
        return SynthSpec(**data)


def _render_depth(intr: Intrinsics, pose: Pose, spec: SynthSpec) -> np.ndarray:
    """Ray-cast z-depth against the slab plane (within its extent) else the
    wall plane; both are world planes z = const with normal (0, 0, 1)."""
    us, vs = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    dirs = np.stack(
        [(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy, np.ones_like(us, dtype=np.float64)],
        axis=0,
    ).reshape(3, -1)
    world_dirs = pose.rotation @ dirs
    origin = pose.translation

    def plane_hit(plane_z):
        dz = world_dirs[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (plane_z - origin[2]) / dz
        hit = np.where(np.abs(dz) > 1e-12, s, np.inf)
        return hit

    depth = np.full(world_dirs.shape[1], np.nan)
    s_slab = plane_hit(spec.slab_distance)
    with np.errstate(invalid="ignore"):
        slab_pts = origin[:, None] + world_dirs * s_slab
    on_slab = (
        (s_slab > 0)
        & np.isfinite(s_slab)
        & (np.abs(slab_pts[0]) <= spec.slab_half_extent)
        & (np.abs(slab_pts[1]) <= spec.slab_half_extent)
    )
    depth[on_slab] = s_slab[on_slab]
    s_wall = plane_hit(spec.wall_distance)
    use_wall = ~on_slab & (s_wall > 0) & np.isfinite(s_wall)
    depth[use_wall] = s_wall[use_wall]
    # z-depth equals the ray parameter because dirs have unit z in camera frame
    return np.where(np.isfinite(depth), depth, 0.0).reshape(intr.height, intr.width)


def synth_scene(spec: SynthSpec, seed: int):
    """Deterministic synthetic scene with exactly known roll-free poses.

    Returns (manifest-without-files, depth rasters, relative poses).  The
    manifest's depth paths are not yet written; use write_synth_scene.
    """
    rng = np.random.default_rng(seed)
    focal = (spec.width / 2.0) / math.tan(math.radians(spec.fov_deg) / 2.0)
    intr = Intrinsics(
        fx=focal, fy=focal, cx=spec.width / 2.0, cy=spec.height / 2.0,
        width=spec.width, height=spec.height,
    )
    poses = []
    for index in range(spec.n_views):
        if index == 0:
            poses.append(Pose.identity())
            continue
        yaw = index * spec.yaw_step_deg + float(
            rng.uniform(-spec.max_yaw_deg, spec.max_yaw_deg)
        )
        pitch = float(rng.uniform(-spec.max_pitch_deg, spec.max_pitch_deg))
        offset = rng.uniform(-spec.max_offset_m, spec.max_offset_m, size=3)
        poses.append(Pose(yaw_matrix(yaw) @ pitch_matrix(pitch), offset))
    rasters = [_render_depth(intr, pose, spec) for pose in poses]
    views = tuple(
        ViewRecord(intr, pose, f"depth_{index}.pfm")
        for index, pose in enumerate(poses)
    )
    manifest = SceneManifest("synth", views, root=".")
    relatives = {
        (i, j): relative_pose(poses[i], poses[j])
        for i, j in required_pairs(spec.n_views)
    }
    return manifest, rasters, relatives


def write_synth_scene(spec: SynthSpec, seed: int, out_dir) -> SceneManifest:
    """Materialize a synthetic scene (manifest + PFM rasters) on disk."""
    manifest, rasters, _ = synth_scene(spec, seed)
    os.makedirs(out_dir, exist_ok=True)
    for record, raster in zip(manifest.views, rasters):
        pfm.write_pfm(os.path.join(out_dir, record.depth_path), raster)
    manifest = SceneManifest(manifest.scene_id, manifest.views, root=os.path.abspath(out_dir))
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
