"""Cross-view patch correspondence supervision and verifiable action/answer
rewards for multi-view spatial reasoning training."""

from .actions import (
    ActionAnnotationSet,
    ActionPlan,
    AtomicAction,
    CompileError,
    CompileTolerances,
    compile_plan,
    execute,
    parse_annotations,
    required_pairs,
    serialize_annotations,
)
from .correspondence import (
    CorrespondenceConfig,
    CorrespondenceMatrix,
    OverlapMatrix,
    correspondence_loss,
    directional_overlap,
    predicted_distribution,
    read_matrix,
    symmetric_overlap,
    target_distribution,
    write_matrix,
)
from .dataset import (
    SceneManifest,
    SupervisionBundle,
    SynthSpec,
    build_supervision,
    load_manifest,
    read_bundle,
    synth_scene,
    write_bundle,
    write_synth_scene,
)
from .geometry import (
    CameraView,
    DepthMap,
    Intrinsics,
    Pose,
    RelativePose,
    depth_consistent,
    project,
    relative_pose,
    rotation_angle_deg,
    to_world,
    unproject,
)
from .rewards import (
    GroundTruth,
    RewardBreakdown,
    RewardConfig,
    answer_accuracy_reward,
    action_accuracy_reward,
    extract_blocks,
    format_reward,
    iou_boxes,
    match_select,
    mra_numeric,
    score_output,
    soft_exact_match,
    total_reward,
    view_change_mra,
)

__version__ = "0.1.0"
