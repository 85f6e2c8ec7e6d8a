"""Interaction graphs, similarity rewards, and kinematic retargeting.

The pipeline: build per-frame interaction graphs over body and object
markers (``graph``), score how well an evaluated scene preserves a
reference's spatial relationships (``reward``), and retarget motion onto
differently proportioned characters by optimizing pose deltas against that
score (``retarget``).  ``observe`` emits the observation vectors a training
loop would consume, ``synth`` builds the demo clips, and ``cli`` wraps the
whole thing for the command line.
"""

from .core import (
    FacingFrame,
    Joint,
    ModelError,
    Pose,
    ScaleSpec,
    Skeleton,
    apply_action,
    apply_scale,
    compute_facing_frame,
    fk_arrays,
    forward_kinematics,
)
from .delaunay import (
    DegenerateInputError,
    circumsphere,
    perturb_points,
    tetrahedralize,
    unique_edges,
)
from .graph import (
    Connectivity,
    EdgeClass,
    InteractionGraph,
    build_graph,
    classify_edges,
    frame_connectivity,
    reference_connectivity,
)
from .observe import Observation, ObservationSpec, build_observation, observation_size
from .presets import (
    box_markers,
    humanoid_markers,
    humanoid_skeleton,
    upper_body_markers,
)
from .retarget import (
    OptimizerConfig,
    RetargetResult,
    frame_objective,
    grasp_residuals,
    optimize_clip,
    scale_character,
)
from .reward import (
    JointRewardParams,
    RewardBreakdown,
    RewardParams,
    WeightingMode,
    center_of_mass,
    cross_edge_error,
    edge_weights,
    evaluate_frame,
    evaluate_joint_baseline,
    evaluate_scene,
    self_edge_error,
)
from .scene import (
    Character,
    GraspWindow,
    MarkerSpec,
    Scene,
    SceneError,
    SceneObject,
    SchemaError,
    load_scene,
    save_scene,
)
from .synth import build_highfive_scene, build_prop_scene, hand_gap

__version__ = "0.1.0"

__all__ = [
    "Character",
    "Connectivity",
    "DegenerateInputError",
    "EdgeClass",
    "FacingFrame",
    "GraspWindow",
    "InteractionGraph",
    "Joint",
    "JointRewardParams",
    "MarkerSpec",
    "ModelError",
    "Observation",
    "ObservationSpec",
    "OptimizerConfig",
    "Pose",
    "RetargetResult",
    "RewardBreakdown",
    "RewardParams",
    "ScaleSpec",
    "Scene",
    "SceneError",
    "SceneObject",
    "SchemaError",
    "Skeleton",
    "WeightingMode",
    "apply_action",
    "apply_scale",
    "box_markers",
    "build_graph",
    "build_highfive_scene",
    "build_observation",
    "build_prop_scene",
    "center_of_mass",
    "circumsphere",
    "classify_edges",
    "compute_facing_frame",
    "cross_edge_error",
    "edge_weights",
    "evaluate_frame",
    "evaluate_joint_baseline",
    "evaluate_scene",
    "fk_arrays",
    "forward_kinematics",
    "frame_connectivity",
    "frame_objective",
    "grasp_residuals",
    "hand_gap",
    "humanoid_markers",
    "humanoid_skeleton",
    "load_scene",
    "observation_size",
    "optimize_clip",
    "perturb_points",
    "reference_connectivity",
    "save_scene",
    "scale_character",
    "self_edge_error",
    "tetrahedralize",
    "unique_edges",
    "upper_body_markers",
]
