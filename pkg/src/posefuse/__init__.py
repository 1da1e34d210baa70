"""posefuse: cross-dataset pose/scene fusion and synthetic-corpus tooling.

The package covers the full desk-scale loop: align motion sequences into
foreign scenes with exact 3D ground truth, project pose guidance through
explicit cameras, generate and detect via pluggable adapters (deterministic
mocks included), score and filter samples by 2D consistency, evaluate with
the standard MPJPE family, and compare the four GT/HPE train-test input
regimes with a closed-form baseline lifter.
"""

from .errors import PoseFuseError
from .geometry import (
    CameraModel,
    HandednessCorrection,
    NORMALIZED_WIDTH,
    apply_handedness,
    load_camera,
    normalize_2d,
    project,
    save_camera,
    world_to_camera,
)
from .skeleton import (
    COCO_BODY_17,
    COCO_BODY_TO_H36M,
    H36M_17,
    H36M_TO_COCO_BODY,
    JointSchema,
    Pose2DSequence,
    Pose3DSequence,
    SchemaMapping,
    bone_lengths,
    map_schema_2d,
    map_schema_3d,
)
from .fusion import (
    AlignmentTransform,
    FusedSample,
    MotionSample,
    PairingPolicy,
    SceneSample,
    align,
    compute_alignment,
    cross_fuse,
    make_guidance,
)
from .synth import (
    CorruptionKnob,
    DetectorNoiseConfig,
    GeneratorRequest,
    MockGeneratorAdapter,
    PixelDetectorAdapter,
    SyntheticDetectorAdapter,
    detect,
    generate,
    mock_generate,
    synth_detect,
)
from .quality import QualityReport, filter_top, score_sample
from .metrics import (
    MetricReport,
    evaluate_suite,
    mpjpe,
    n_mpjpe,
    p_mpjpe,
    per_sequence_average,
    pos2d_error,
    velocity_error,
)
from .lifter import LifterModel, Regime, REGIMES, fit, predict, run_regimes
from .poseio import (
    Manifest,
    ManifestSample,
    load_manifest,
    read_pose,
    save_manifest,
    validate_manifest,
    write_pose,
)
from .pipeline import PipelineConfig, export_training_set, load_config, run_pipeline

__version__ = "0.1.0"
