"""Geometry-aware BEV tokenization of RGB-D observations.

Back-projects per-patch features through depth into an agent-centric
bird's-eye-view grid, pools occupied cells into compact tokens, and ships
a synthetic navigation harness (simulator, episode protocol, metrics,
persistence, CLI) to exercise the representation end to end.
"""

__version__ = "0.1.0"

from .bev import (
    BevConfig,
    BevFrame,
    BevMap,
    BevToken,
    CellAssignment,
    EmbeddingCoords,
    FusionMode,
    TokenStats,
    aggregate,
    bin_points,
    build_ga_bev,
    position_embedding,
    token_count,
)
from .errors import GabevError
from .features import (
    FeatureMap,
    MlpProjection,
    load_mlp_weights,
    project_geometry_features,
    save_mlp_weights,
    stub_3dfm_encode,
)
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    PointFeatureSet,
    Pose,
    Stream,
    backproject_patch_grid,
    compose,
    invert,
    resize_depth,
    world_to_agent,
)
from .sim import Action, AgentState, Box, NoiseSpec, Scene

__all__ = [
    "__version__",
    "Action",
    "AgentState",
    "BevConfig",
    "BevFrame",
    "BevMap",
    "BevToken",
    "Box",
    "CameraIntrinsics",
    "CellAssignment",
    "DepthMap",
    "EmbeddingCoords",
    "FeatureMap",
    "FusionMode",
    "GabevError",
    "MlpProjection",
    "NoiseSpec",
    "PointFeatureSet",
    "Pose",
    "Scene",
    "Stream",
    "TokenStats",
    "aggregate",
    "backproject_patch_grid",
    "bin_points",
    "build_ga_bev",
    "compose",
    "invert",
    "load_mlp_weights",
    "position_embedding",
    "project_geometry_features",
    "resize_depth",
    "save_mlp_weights",
    "stub_3dfm_encode",
    "token_count",
    "world_to_agent",
]
