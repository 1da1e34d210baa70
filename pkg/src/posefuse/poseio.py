"""On-disk formats: the binary pose-tensor file and the corpus manifest.

Pose-tensor file layout (all integers little endian):

    bytes 0-3    magic ``PSEQ``
    bytes 4-5    format version, u16 (currently 1)
    byte  6      kind, u8: number of coordinates per joint (2 for 2D, 3 for 3D)
    bytes 7-10   T, u32 (frames)
    bytes 11-14  J, u32 (joints)
    bytes 15-16  schema name length, u16, followed by that many UTF-8 bytes
    payload      T*J*kind float32, frame-major, then joint, then coordinate
    confidence   optional trailing T*J float32 block (2D only)

Storage is float32 (dataset convention); in-memory arrays are float64.  The
manifest is a JSON document binding sample ids to relative file paths and
SHA-256 content hashes; it contains no timestamps, so identical runs produce
byte-identical manifests.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    FileFormatError,
    InvalidInputError,
    ManifestError,
    NonFinitePayloadError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .geometry import CONVENTION, load_camera
from .skeleton import BUILTIN_SCHEMAS, CAMERA, JointSchema, Pose2DSequence, Pose3DSequence

MAGIC = b"PSEQ"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHBII H")  # magic, version, kind, T, J, name length


def write_pose(path: str | Path, seq: Pose2DSequence | Pose3DSequence):
    """Serialize a pose sequence; 2D sequences always include confidence."""
    if isinstance(seq, Pose3DSequence):
        kind = 3
    elif isinstance(seq, Pose2DSequence):
        kind = 2
    else:
        raise InvalidInputError(f"cannot serialize {type(seq).__name__}")
    t, j = seq.data.shape[:2]
    name = seq.schema.name.encode("utf-8")
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, kind, t, j, len(name)), name,
             seq.data.astype("<f4").tobytes()]
    if kind == 2:
        parts.append(seq.confidence.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_pose(path: str | Path,
              schemas: dict[str, JointSchema] | None = None,
              frame_tag: str = CAMERA) -> Pose2DSequence | Pose3DSequence:
    """Read a pose-tensor file, validating structure and finiteness.

    The file stores only the schema name; it is resolved against the built-in
    schemas plus the optional ``schemas`` registry.  ``frame_tag`` is attached
    to 3D sequences (the format itself is frame-agnostic).
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        if raw[:4] != MAGIC:
            raise BadMagicError(f"{path}: not a pose-tensor file")
        raise TruncatedFileError(f"{path}: header incomplete")
    magic, version, kind, t, j, name_len = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version} unsupported")
    if kind not in (2, 3):
        raise FileFormatError(f"{path}: kind {kind} is neither 2D nor 3D")
    if t < 1 or j < 1:
        raise FileFormatError(f"{path}: degenerate dims T={t}, J={j}")
    offset = _HEADER.size
    if len(raw) < offset + name_len:
        raise TruncatedFileError(f"{path}: schema name incomplete")
    try:
        name = raw[offset:offset + name_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FileFormatError(f"{path}: schema name is not UTF-8") from exc
    offset += name_len

    base = t * j * kind * 4
    conf_len = t * j * 4
    remaining = len(raw) - offset
    if remaining < base:
        raise TruncatedFileError(
            f"{path}: payload has {remaining} bytes, expected {base}"
        )
    has_conf = False
    if remaining != base:
        if kind == 2 and remaining == base + conf_len:
            has_conf = True
        else:
            raise TruncatedFileError(
                f"{path}: payload has {remaining} bytes, expected {base}"
                + (f" or {base + conf_len}" if kind == 2 else "")
            )

    registry = dict(BUILTIN_SCHEMAS)
    if schemas:
        registry.update(schemas)
    if name not in registry:
        raise FileFormatError(
            f"{path}: unknown schema {name!r}; pass it via the schema registry"
        )
    schema = registry[name]

    data = np.frombuffer(raw, dtype="<f4", count=t * j * kind, offset=offset)
    data = data.astype(np.float64).reshape(t, j, kind)
    if not np.isfinite(data).all():
        raise NonFinitePayloadError(f"{path}: payload contains non-finite values")
    if kind == 3:
        return Pose3DSequence(data, schema, frame_tag)
    if has_conf:
        conf = np.frombuffer(raw, dtype="<f4", count=t * j, offset=offset + base)
        conf = conf.astype(np.float64).reshape(t, j)
        if not np.isfinite(conf).all():
            raise NonFinitePayloadError(f"{path}: confidence contains non-finite values")
    else:
        conf = np.ones((t, j))
    return Pose2DSequence(data, schema, conf)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- manifest ----------------------------------------------------------------

MANIFEST_VERSION = 1

# file-slot names a sample record may carry; "frames" points at a directory
SAMPLE_FILE_KEYS = ("camera", "gt_3d_world", "gt_3d_camera", "guidance_2d",
                    "detected_2d", "frames")


@dataclass
class ManifestSample:
    """One corpus sample: provenance, relative file paths, content hashes."""

    id: str
    scene_ref: tuple[str, str] | None = None   # (dataset, sample)
    motion_ref: tuple[str, str] | None = None
    files: dict = field(default_factory=dict)   # slot -> relative path
    hashes: dict = field(default_factory=dict)  # relative path -> sha256
    quality_score: float | None = None
    kept: bool = False
    status: str = "ok"                          # "ok" | "failed"
    fail_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "scene_ref": list(self.scene_ref) if self.scene_ref else None,
            "motion_ref": list(self.motion_ref) if self.motion_ref else None,
            "files": dict(sorted(self.files.items())),
            "hashes": dict(sorted(self.hashes.items())),
            "quality_score": self.quality_score,
            "kept": self.kept,
            "status": self.status,
            "fail_reason": self.fail_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestSample":
        return cls(
            id=d["id"],
            scene_ref=tuple(d["scene_ref"]) if d.get("scene_ref") else None,
            motion_ref=tuple(d["motion_ref"]) if d.get("motion_ref") else None,
            files=dict(d.get("files", {})),
            hashes=dict(d.get("hashes", {})),
            quality_score=d.get("quality_score"),
            kept=bool(d.get("kept", False)),
            status=d.get("status", "ok"),
            fail_reason=d.get("fail_reason"),
        )


@dataclass
class Manifest:
    """Corpus description binding samples to on-disk tensors, images, cameras."""

    samples: list = field(default_factory=list)
    source_datasets: list = field(default_factory=list)
    convention: str = CONVENTION
    version: int = MANIFEST_VERSION
    root_dir: Path | None = None  # attached on load/save, not serialized

    def sample_ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def kept_samples(self) -> list[ManifestSample]:
        return [s for s in self.samples if s.status == "ok" and s.kept]

    def ok_samples(self) -> list[ManifestSample]:
        return [s for s in self.samples if s.status == "ok"]

    def get(self, sample_id: str) -> ManifestSample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise ManifestError(f"no sample {sample_id!r} in manifest")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "convention": self.convention,
            "source_datasets": self.source_datasets,
            "samples": [s.to_dict() for s in sorted(self.samples, key=lambda s: s.id)],
        }


def save_manifest(manifest: Manifest, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest.root_dir = path.parent
    return path


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if doc.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{path}: manifest version {doc.get('version')} unsupported")
    manifest = Manifest(
        samples=[ManifestSample.from_dict(d) for d in doc.get("samples", [])],
        source_datasets=doc.get("source_datasets", []),
        convention=doc.get("convention", CONVENTION),
        version=doc["version"],
        root_dir=path.parent,
    )
    return manifest


def validate_manifest(manifest: Manifest,
                      check_consistency: bool = False,
                      schemas: dict[str, JointSchema] | None = None) -> list[str]:
    """Check every sample; returns a list of problems (empty means valid).

    Every dangling path, hash mismatch, or duplicate id is reported with the
    offending sample id.  With ``check_consistency`` the stored 2D guidance is
    compared against the reprojected stored 3D ground truth; the tolerance
    allows for float32 storage quantization.
    """
    problems: list[str] = []
    if manifest.root_dir is None:
        return ["manifest has no root directory; load it from disk first"]
    root = manifest.root_dir

    seen: set[str] = set()
    for sample in manifest.samples:
        if sample.id in seen:
            problems.append(f"{sample.id}: duplicate sample id")
        seen.add(sample.id)
        if sample.status != "ok":
            continue
        for slot, rel in sample.files.items():
            target = root / rel
            if slot == "frames":
                if not target.is_dir():
                    problems.append(f"{sample.id}: frames directory missing: {rel}")
                continue
            if not target.is_file():
                problems.append(f"{sample.id}: missing file: {rel}")
        for rel, digest in sample.hashes.items():
            target = root / rel
            if not target.is_file():
                problems.append(f"{sample.id}: hashed file missing: {rel}")
            elif sha256_file(target) != digest:
                problems.append(f"{sample.id}: hash mismatch: {rel}")

    if check_consistency and not problems:
        problems.extend(_check_guidance_consistency(manifest, schemas))
    return problems


# float32 storage quantizes both the 3D pose and the stored pixels; for
# coordinates up to a few thousand px/mm this bounds the reprojection gap.
FLOAT32_CONSISTENCY_TOL = 2e-3


def _check_guidance_consistency(manifest: Manifest,
                                schemas: dict[str, JointSchema] | None) -> list[str]:
    from .geometry import project, world_to_camera  # local import keeps module load light

    problems = []
    root = manifest.root_dir
    for sample in manifest.ok_samples():
        files = sample.files
        if not {"gt_3d_world", "guidance_2d", "camera"} <= set(files):
            continue
        try:
            cam = load_camera(root / files["camera"])
            gt = read_pose(root / files["gt_3d_world"], schemas, frame_tag="world")
            guidance = read_pose(root / files["guidance_2d"], schemas)
            reproj = project(world_to_camera(gt, cam), cam)
        except Exception as exc:  # surface per-sample, keep validating
            problems.append(f"{sample.id}: consistency check failed to run: {exc}")
            continue
        if guidance.schema != reproj.schema or guidance.data.shape != reproj.data.shape:
            problems.append(f"{sample.id}: guidance schema/shape does not match ground truth")
            continue
        gap = float(np.abs(guidance.data - reproj.data).max())
        if gap > FLOAT32_CONSISTENCY_TOL:
            problems.append(
                f"{sample.id}: guidance disagrees with reprojected ground truth "
                f"(max gap {gap:.3e} px)"
            )
    return problems
