"""Streaming text-to-motion pipeline for single-DoF robot skeletons."""

from .features import (
    FeatureLayout,
    InitialPose,
    MotionFeatures,
    RawMotion,
    RawMotionFrame,
    decode_features,
    encode_features,
    feature_dim,
    mirror_motion,
    mirror_text,
)
from .kinematics import (
    BodyPose,
    SkeletonSpec,
    extract_foot_contacts,
    forward_kinematics,
    load_packaged_skeleton,
    load_skeleton,
    save_skeleton,
)

__version__ = "0.1.0"

__all__ = [
    "BodyPose",
    "FeatureLayout",
    "InitialPose",
    "MotionFeatures",
    "RawMotion",
    "RawMotionFrame",
    "SkeletonSpec",
    "decode_features",
    "encode_features",
    "extract_foot_contacts",
    "feature_dim",
    "forward_kinematics",
    "load_packaged_skeleton",
    "load_skeleton",
    "mirror_motion",
    "mirror_text",
    "save_skeleton",
]
