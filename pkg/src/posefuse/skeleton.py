"""Joint schemas, pose-sequence containers, and keypoint-format mapping.

A schema names the joints of a skeleton, fixes their order, and declares the
bone tree used for rendering and bone-length checks.  Pose sequences are thin
validated wrappers around (T, J, 3) / (T, J, 2) float64 arrays; 3D is in
millimeters, 2D in pixels.  Two schemas ship built in: ``h36m-17`` (the
dataset/lifter skeleton) and ``coco-body`` (the 17-point body subset of the
guidance format expected by pose-conditioned video generators).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, SchemaError, SchemaMismatchError

WORLD = "world"
CAMERA = "camera"

_FRAME_TAGS = (WORLD, CAMERA)


@dataclass(frozen=True)
class JointSchema:
    """Ordered joint names plus the bone tree rooted at ``root_index``."""

    name: str
    joints: tuple[str, ...]
    root_index: int
    bones: tuple[tuple[int, int], ...]
    left_right_pairs: tuple[tuple[int, int], ...] = ()
    foot_indices: tuple[int, ...] = ()

    def __post_init__(self):
        n = len(self.joints)
        if n == 0:
            raise SchemaError(f"schema {self.name!r} has no joints")
        if len(set(self.joints)) != n:
            raise SchemaError(f"schema {self.name!r} has duplicate joint names")
        if not 0 <= self.root_index < n:
            raise SchemaError(f"schema {self.name!r}: root index {self.root_index} out of range")
        for pair in self.bones + self.left_right_pairs:
            for idx in pair:
                if not 0 <= idx < n:
                    raise SchemaError(f"schema {self.name!r}: joint index {idx} out of range")
        for idx in self.foot_indices:
            if not 0 <= idx < n:
                raise SchemaError(f"schema {self.name!r}: foot index {idx} out of range")
        self._check_tree()

    def _check_tree(self):
        """Bones must form a spanning tree rooted at root_index."""
        n = len(self.joints)
        if len(self.bones) != n - 1:
            raise SchemaError(
                f"schema {self.name!r}: {len(self.bones)} bones cannot span "
                f"{n} joints as a tree"
            )
        children: dict[int, list[int]] = {}
        seen_child = set()
        for parent, child in self.bones:
            if child == self.root_index:
                raise SchemaError(f"schema {self.name!r}: root appears as a bone child")
            if child in seen_child:
                raise SchemaError(
                    f"schema {self.name!r}: joint {self.joints[child]!r} has two parents"
                )
            seen_child.add(child)
            children.setdefault(parent, []).append(child)
        reached = {self.root_index}
        stack = [self.root_index]
        while stack:
            for c in children.get(stack.pop(), ()):
                reached.add(c)
                stack.append(c)
        if len(reached) != n:
            missing = [self.joints[i] for i in range(n) if i not in reached]
            raise SchemaError(
                f"schema {self.name!r}: joints not reachable from root: {missing}"
            )

    def __len__(self) -> int:
        return len(self.joints)

    def index(self, joint_name: str) -> int:
        try:
            return self.joints.index(joint_name)
        except ValueError:
            raise SchemaError(f"schema {self.name!r} has no joint {joint_name!r}") from None


def _first_nonfinite(data: np.ndarray) -> tuple[int, int] | None:
    bad = ~np.isfinite(data)
    if not bad.any():
        return None
    t, j = np.argwhere(bad.any(axis=-1))[0]
    return int(t), int(j)


@dataclass
class Pose3DSequence:
    """T x J x 3 joint positions in millimeters, tagged world- or camera-frame."""

    data: np.ndarray
    schema: JointSchema
    frame_tag: str = WORLD

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise InvalidInputError(f"expected (T, J, 3) array, got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise InvalidInputError("pose sequence needs at least one frame")
        if self.data.shape[1] != len(self.schema):
            raise SchemaMismatchError(
                f"array has {self.data.shape[1]} joints but schema "
                f"{self.schema.name!r} declares {len(self.schema)}"
            )
        if self.frame_tag not in _FRAME_TAGS:
            raise InvalidInputError(f"frame tag must be one of {_FRAME_TAGS}, got {self.frame_tag!r}")
        loc = _first_nonfinite(self.data)
        if loc is not None:
            raise InvalidInputError(
                f"non-finite coordinate at frame {loc[0]}, joint {loc[1]} "
                f"({self.schema.joints[loc[1]]!r})"
            )

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    def root_track(self) -> np.ndarray:
        return self.data[:, self.schema.root_index]


@dataclass
class Pose2DSequence:
    """T x J x 2 image-plane keypoints in pixels with per-joint confidence."""

    data: np.ndarray
    schema: JointSchema
    confidence: np.ndarray = None  # defaults to all ones

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 2:
            raise InvalidInputError(f"expected (T, J, 2) array, got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise InvalidInputError("keypoint sequence needs at least one frame")
        if self.data.shape[1] != len(self.schema):
            raise SchemaMismatchError(
                f"array has {self.data.shape[1]} joints but schema "
                f"{self.schema.name!r} declares {len(self.schema)}"
            )
        if self.confidence is None:
            self.confidence = np.ones(self.data.shape[:2])
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.confidence.shape != self.data.shape[:2]:
            raise InvalidInputError(
                f"confidence shape {self.confidence.shape} does not match "
                f"keypoints {self.data.shape[:2]}"
            )
        loc = _first_nonfinite(self.data)
        if loc is not None:
            raise InvalidInputError(
                f"non-finite keypoint at frame {loc[0]}, joint {loc[1]} "
                f"({self.schema.joints[loc[1]]!r})"
            )
        if not np.isfinite(self.confidence).all():
            raise InvalidInputError("non-finite confidence value")
        if self.confidence.min() < 0.0 or self.confidence.max() > 1.0:
            raise InvalidInputError("confidence values must lie in [0, 1]")

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]


# Assignment entries of a schema mapping.  ("copy", i) copies source joint i,
# ("midpoint", i, j) averages source joints i and j, ("drop",) marks a target
# joint that has no source and gets confidence 0.
COPY = "copy"
MIDPOINT = "midpoint"
DROP = "drop"


@dataclass(frozen=True)
class SchemaMapping:
    """Per-target-joint assignment table between two schemas."""

    source: JointSchema
    target: JointSchema
    assignments: tuple[tuple, ...]

    def __post_init__(self):
        if len(self.assignments) != len(self.target):
            raise SchemaError(
                f"mapping {self.source.name!r} -> {self.target.name!r} assigns "
                f"{len(self.assignments)} joints, target has {len(self.target)}"
            )
        ns = len(self.source)
        for tgt_idx, entry in enumerate(self.assignments):
            kind = entry[0]
            if kind == COPY:
                ok = len(entry) == 2 and 0 <= entry[1] < ns
            elif kind == MIDPOINT:
                ok = len(entry) == 3 and all(0 <= i < ns for i in entry[1:])
            elif kind == DROP:
                ok = len(entry) == 1
            else:
                ok = False
            if not ok:
                raise SchemaError(
                    f"mapping entry for target joint "
                    f"{self.target.joints[tgt_idx]!r} is invalid: {entry!r}"
                )

    @property
    def has_drops(self) -> bool:
        return any(e[0] == DROP for e in self.assignments)

    @classmethod
    def identity(cls, schema: JointSchema) -> "SchemaMapping":
        return cls(schema, schema, tuple((COPY, i) for i in range(len(schema))))

    @classmethod
    def from_names(cls, source: JointSchema, target: JointSchema,
                   table: dict[str, object]) -> "SchemaMapping":
        """Build a mapping from {target joint: source joint | (a, b) | None}."""
        entries = []
        for tgt in target.joints:
            if tgt not in table:
                raise SchemaError(f"mapping table misses target joint {tgt!r}")
            spec = table[tgt]
            if spec is None:
                entries.append((DROP,))
            elif isinstance(spec, str):
                entries.append((COPY, source.index(spec)))
            else:
                a, b = spec
                entries.append((MIDPOINT, source.index(a), source.index(b)))
        return cls(source, target, tuple(entries))


def _check_mapping_source(kps_schema: JointSchema, mapping: SchemaMapping):
    if kps_schema != mapping.source:
        raise SchemaMismatchError(
            f"keypoints use schema {kps_schema.name!r} but mapping expects "
            f"source {mapping.source.name!r}"
        )


def map_schema_2d(kps: Pose2DSequence, mapping: SchemaMapping) -> Pose2DSequence:
    """Convert 2D keypoints to the mapping's target schema.

    Midpoint targets average the two source joints (positions and
    confidences); dropped targets get position (0, 0) and confidence 0.
    """
    _check_mapping_source(kps.schema, mapping)
    t = kps.num_frames
    out = np.zeros((t, len(mapping.target), 2))
    conf = np.zeros((t, len(mapping.target)))
    for tgt_idx, entry in enumerate(mapping.assignments):
        if entry[0] == COPY:
            out[:, tgt_idx] = kps.data[:, entry[1]]
            conf[:, tgt_idx] = kps.confidence[:, entry[1]]
        elif entry[0] == MIDPOINT:
            out[:, tgt_idx] = 0.5 * (kps.data[:, entry[1]] + kps.data[:, entry[2]])
            conf[:, tgt_idx] = 0.5 * (kps.confidence[:, entry[1]] + kps.confidence[:, entry[2]])
    return Pose2DSequence(out, mapping.target, conf)


def map_schema_3d(pose: Pose3DSequence, mapping: SchemaMapping) -> Pose3DSequence:
    """Convert a 3D pose to the target schema; drops are not allowed in 3D."""
    _check_mapping_source(pose.schema, mapping)
    if mapping.has_drops:
        dropped = [mapping.target.joints[i] for i, e in enumerate(mapping.assignments)
                   if e[0] == DROP]
        raise SchemaError(
            f"3D mapping {mapping.source.name!r} -> {mapping.target.name!r} would "
            f"drop joints {dropped}; 3D ground truth must stay complete"
        )
    t = pose.num_frames
    out = np.zeros((t, len(mapping.target), 3))
    for tgt_idx, entry in enumerate(mapping.assignments):
        if entry[0] == COPY:
            out[:, tgt_idx] = pose.data[:, entry[1]]
        else:
            out[:, tgt_idx] = 0.5 * (pose.data[:, entry[1]] + pose.data[:, entry[2]])
    return Pose3DSequence(out, mapping.target, pose.frame_tag)


def bone_lengths(pose: Pose3DSequence, frame_index: int = 0) -> np.ndarray:
    """Euclidean length in mm of each schema bone at one frame."""
    frame = pose.data[frame_index]
    parents = np.array([b[0] for b in pose.schema.bones])
    children = np.array([b[1] for b in pose.schema.bones])
    return np.linalg.norm(frame[children] - frame[parents], axis=-1)


# --- built-in schemas -------------------------------------------------------

H36M_17 = JointSchema(
    name="h36m-17",
    joints=(
        "pelvis", "right_hip", "right_knee", "right_ankle",
        "left_hip", "left_knee", "left_ankle",
        "spine", "neck", "head", "head_top",
        "left_shoulder", "left_elbow", "left_wrist",
        "right_shoulder", "right_elbow", "right_wrist",
    ),
    root_index=0,
    bones=(
        (0, 1), (1, 2), (2, 3),
        (0, 4), (4, 5), (5, 6),
        (0, 7), (7, 8), (8, 9), (9, 10),
        (8, 11), (11, 12), (12, 13),
        (8, 14), (14, 15), (15, 16),
    ),
    left_right_pairs=((4, 1), (5, 2), (6, 3), (11, 14), (12, 15), (13, 16)),
    foot_indices=(3, 6),
)

COCO_BODY_17 = JointSchema(
    name="coco-body",
    joints=(
        "nose", "left_eye", "right_eye", "left_ear", "right_ear",
        "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
        "left_wrist", "right_wrist", "left_hip", "right_hip",
        "left_knee", "right_knee", "left_ankle", "right_ankle",
    ),
    root_index=0,
    bones=(
        (0, 1), (0, 2), (1, 3), (2, 4),
        (0, 5), (0, 6), (5, 7), (7, 9), (6, 8), (8, 10),
        (5, 11), (6, 12), (11, 13), (13, 15), (12, 14), (14, 16),
    ),
    left_right_pairs=((1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)),
    foot_indices=(15, 16),
)

BUILTIN_SCHEMAS = {s.name: s for s in (H36M_17, COCO_BODY_17)}

# Face keypoints that the guidance format expects but no mocap schema carries
# are drop entries; downstream consumers see them with confidence 0.
H36M_TO_COCO_BODY = SchemaMapping.from_names(
    H36M_17, COCO_BODY_17,
    {
        "nose": "head",
        "left_eye": None, "right_eye": None, "left_ear": None, "right_ear": None,
        "left_shoulder": "left_shoulder", "right_shoulder": "right_shoulder",
        "left_elbow": "left_elbow", "right_elbow": "right_elbow",
        "left_wrist": "left_wrist", "right_wrist": "right_wrist",
        "left_hip": "left_hip", "right_hip": "right_hip",
        "left_knee": "left_knee", "right_knee": "right_knee",
        "left_ankle": "left_ankle", "right_ankle": "right_ankle",
    },
)

COCO_BODY_TO_H36M = SchemaMapping.from_names(
    COCO_BODY_17, H36M_17,
    {
        "pelvis": ("left_hip", "right_hip"),
        "right_hip": "right_hip", "right_knee": "right_knee", "right_ankle": "right_ankle",
        "left_hip": "left_hip", "left_knee": "left_knee", "left_ankle": "left_ankle",
        "spine": ("left_hip", "right_shoulder"),
        "neck": ("left_shoulder", "right_shoulder"),
        "head": "nose",
        "head_top": None,
        "left_shoulder": "left_shoulder", "left_elbow": "left_elbow",
        "left_wrist": "left_wrist",
        "right_shoulder": "right_shoulder", "right_elbow": "right_elbow",
        "right_wrist": "right_wrist",
    },
)

BUILTIN_MAPPINGS = {
    "h36m-17->coco-body": H36M_TO_COCO_BODY,
    "coco-body->h36m-17": COCO_BODY_TO_H36M,
}


# --- schema / mapping files -------------------------------------------------

def schema_to_dict(schema: JointSchema) -> dict:
    return {
        "name": schema.name,
        "joints": list(schema.joints),
        "root": schema.root_index,
        "bones": [list(b) for b in schema.bones],
        "pairs": [list(p) for p in schema.left_right_pairs],
        "feet": list(schema.foot_indices),
    }


def schema_from_dict(d: dict) -> JointSchema:
    try:
        return JointSchema(
            name=d["name"],
            joints=tuple(d["joints"]),
            root_index=int(d["root"]),
            bones=tuple((int(p), int(c)) for p, c in d["bones"]),
            left_right_pairs=tuple((int(a), int(b)) for a, b in d.get("pairs", [])),
            foot_indices=tuple(int(i) for i in d.get("feet", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed schema file: {exc}") from exc


def save_schema(schema: JointSchema, path: str | Path):
    Path(path).write_text(json.dumps(schema_to_dict(schema), indent=2, sort_keys=True))


def load_schema(path: str | Path) -> JointSchema:
    return schema_from_dict(json.loads(Path(path).read_text()))


def save_mapping(mapping: SchemaMapping, path: str | Path):
    entries = []
    for tgt_idx, entry in enumerate(mapping.assignments):
        rec: dict = {"target": mapping.target.joints[tgt_idx]}
        if entry[0] == COPY:
            rec["copy"] = mapping.source.joints[entry[1]]
        elif entry[0] == MIDPOINT:
            rec["midpoint"] = [mapping.source.joints[entry[1]], mapping.source.joints[entry[2]]]
        else:
            rec["drop"] = True
        entries.append(rec)
    doc = {"source": mapping.source.name, "target": mapping.target.name, "assignments": entries}
    Path(path).write_text(json.dumps(doc, indent=2))


def load_mapping(path: str | Path, schemas: dict[str, JointSchema] | None = None) -> SchemaMapping:
    """Load a mapping file, resolving schema names against built-ins plus ``schemas``."""
    registry = dict(BUILTIN_SCHEMAS)
    if schemas:
        registry.update(schemas)
    doc = json.loads(Path(path).read_text())
    try:
        source = registry[doc["source"]]
        target = registry[doc["target"]]
        table: dict[str, object] = {}
        for rec in doc["assignments"]:
            tgt = rec["target"]
            if rec.get("drop"):
                table[tgt] = None
            elif "midpoint" in rec:
                table[tgt] = tuple(rec["midpoint"])
            else:
                table[tgt] = rec["copy"]
    except KeyError as exc:
        raise SchemaError(f"malformed mapping file: missing {exc}") from exc
    return SchemaMapping.from_names(source, target, table)
