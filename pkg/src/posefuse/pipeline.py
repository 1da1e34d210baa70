"""End-to-end batch driver: fuse, generate, detect, score, filter, export.

The pipeline turns source scenes and motions into a corpus directory:

    out/
      manifest.json
      cameras/<dataset>.<scene>.json
      samples/<id>/gt_3d_world.pseq gt_3d_camera.pseq guidance_2d.pseq
                   detected_2d.pseq frames/ record.json
      quality_reports.jsonl

Each sample is processed independently and failures are isolated: a bad
sample is recorded with its reason and never aborts the corpus.  Per-sample
randomness is derived from (corpus seed, sample id, stage), so results do not
depend on worker count or scheduling, and reruns skip samples whose recorded
outputs still hash clean.  Manifests carry no timestamps; identical configs
produce byte-identical manifests.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import quality
from .errors import ConfigError, InvalidInputError, MissingChannelError, PipelineError, PoseFuseError
from .fusion import (
    FusedSample,
    MotionSample,
    PairingPolicy,
    SceneSample,
    align,
    compute_alignment,
    cross_fuse,
    make_guidance,
    validate_placement,
)
from .geometry import HandednessCorrection, load_camera, project, save_camera, world_to_camera
from .poseio import (
    Manifest,
    ManifestSample,
    load_manifest,
    read_pose,
    save_manifest,
    sha256_file,
    write_pose,
)
from .skeleton import (
    BUILTIN_MAPPINGS,
    BUILTIN_SCHEMAS,
    CAMERA,
    JointSchema,
    SchemaMapping,
    load_mapping,
    load_schema,
    map_schema_2d,
)
from .synth import (
    CorruptionKnob,
    DetectorNoiseConfig,
    ExternalDetectorAdapter,
    ExternalGeneratorAdapter,
    GeneratorRequest,
    MockGeneratorAdapter,
    PixelDetectorAdapter,
    SyntheticDetectorAdapter,
    detect,
    generate,
    stable_seed,
    synth_detect,
)

log = logging.getLogger(__name__)

STAGES = ("fuse", "generate", "detect", "score")


def _stage_index(stage: str) -> int:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGES}")
    return STAGES.index(stage)


@dataclass
class PipelineConfig:
    """Everything a corpus build needs; loadable from TOML or JSON."""

    out_dir: Path
    scenes: list = field(default_factory=list)
    motions: list = field(default_factory=list)
    schemas: dict = field(default_factory=dict)      # extra schema registry
    policy: PairingPolicy = PairingPolicy()
    mapping: str = "identity"                        # identity | built-in name | file path
    generator: str = "mock"                          # mock | none | external
    generator_command: list = field(default_factory=list)
    corruption: CorruptionKnob = CorruptionKnob()
    detector: str = "synthetic"                      # synthetic | pixel | external
    detector_command: list = field(default_factory=list)
    noise: DetectorNoiseConfig = DetectorNoiseConfig()
    filter_fraction: float = 0.10
    max_outside_fraction: float = 0.20
    seed: int = 0
    workers: int = 1
    export_channels: list = field(default_factory=list)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.generator not in ("mock", "none", "external"):
            raise ConfigError(f"unknown generator kind {self.generator!r}")
        if self.detector not in ("synthetic", "pixel", "external"):
            raise ConfigError(f"unknown detector kind {self.detector!r}")
        if self.generator == "none" and self.detector in ("pixel", "external"):
            raise ConfigError(
                f"detector {self.detector!r} needs generated frames; use the "
                f"synthetic detector or enable a generator"
            )
        if self.generator == "external" and self.detector == "synthetic":
            raise ConfigError(
                "the synthetic detector reads the mock generator's sidecar "
                "truth; pair an external generator with a pixel or external "
                "detector"
            )
        if self.generator == "external" and not self.generator_command:
            raise ConfigError("external generator needs a command")
        if self.detector == "external" and not self.detector_command:
            raise ConfigError("external detector needs a command")
        if not 0.0 < self.filter_fraction <= 1.0:
            raise ConfigError("filter fraction must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for ch in self.export_channels:
            if ch not in ("GT", "HPE"):
                raise ConfigError(f"export channel must be GT or HPE, got {ch!r}")

    def guidance_mapping(self, schema: JointSchema) -> SchemaMapping:
        if self.mapping == "identity":
            return SchemaMapping.identity(schema)
        if self.mapping in BUILTIN_MAPPINGS:
            mapping = BUILTIN_MAPPINGS[self.mapping]
        else:
            mapping = load_mapping(self.mapping, self.schemas)
        if mapping.source != schema:
            raise ConfigError(
                f"guidance mapping expects source schema {mapping.source.name!r} "
                f"but motions use {schema.name!r}"
            )
        return mapping


def _load_toml(path: Path) -> dict:
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as f:
        return tomllib.load(f)


def load_sources(path: str | Path) -> tuple[list, list, dict]:
    """Read a source manifest: datasets with scenes, motions, and schemas."""
    path = Path(path)
    base = path.parent
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read source manifest {path}: {exc}") from exc

    schemas: dict[str, JointSchema] = {}
    for rel in doc.get("schema_files", []):
        schema = load_schema(base / rel)
        schemas[schema.name] = schema
    registry = dict(BUILTIN_SCHEMAS)
    registry.update(schemas)

    scenes: list[SceneSample] = []
    motions: list[MotionSample] = []
    for ds in doc.get("datasets", []):
        dataset_id = ds["dataset_id"]
        schema_name = ds.get("schema", "h36m-17")
        if schema_name not in registry:
            raise ConfigError(f"dataset {dataset_id!r} uses unknown schema {schema_name!r}")
        handedness = HandednessCorrection(ds.get("handedness"))
        for sc in ds.get("scenes", []):
            scenes.append(SceneSample(
                dataset_id=dataset_id,
                sample_id=sc["sample_id"],
                reference_frame_paths=tuple(str(base / p) for p in sc["reference_frames"]),
                camera=load_camera(base / sc["camera"]),
                root_pose=sc["root_pose"],
                facing=sc["facing"],
                ground_height=float(sc.get("ground_height", 0.0)),
            ))
        for mo in ds.get("motions", []):
            pose = read_pose(base / mo["motion"], registry, frame_tag="world")
            motions.append(MotionSample.from_motion(dataset_id, mo["sample_id"],
                                                    pose, handedness))
    return scenes, motions, schemas


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    """Load a pipeline config file (TOML by suffix, JSON otherwise)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    doc = _load_toml(path) if path.suffix.lower() == ".toml" else json.loads(path.read_text())
    base = path.parent

    pipe = doc.get("pipeline", {})
    overrides = overrides or {}

    scenes, motions, schemas = [], [], {}
    for rel in doc.get("sources", {}).get("files", []):
        s, m, extra = load_sources(base / rel)
        scenes.extend(s)
        motions.extend(m)
        schemas.update(extra)

    pairing = doc.get("pairing", {})
    policy = PairingPolicy(
        kind=pairing.get("policy", "all-pairs"),
        k=pairing.get("k"),
        seed=int(pairing.get("seed", pipe.get("seed", 0))),
    )
    generator = doc.get("generator", {})
    detector = doc.get("detector", {})
    try:
        knob = CorruptionKnob.from_dict(generator.get("corruption", {}))
        noise = DetectorNoiseConfig.from_dict(detector.get("noise", {}))
    except (TypeError, InvalidInputError) as exc:
        raise ConfigError(f"bad noise/corruption settings: {exc}") from exc

    if overrides.get("out_dir"):
        out_dir = Path(overrides["out_dir"])  # CLI override: relative to the cwd
    elif pipe.get("out_dir"):
        out_dir = Path(pipe["out_dir"])
        if not out_dir.is_absolute():
            out_dir = base / out_dir  # config value: relative to the config file
    else:
        raise ConfigError("config must set pipeline.out_dir (or pass --out)")

    return PipelineConfig(
        out_dir=out_dir,
        scenes=scenes,
        motions=motions,
        schemas=schemas,
        policy=policy,
        mapping=doc.get("guidance", {}).get("mapping", "identity"),
        generator=generator.get("kind", "mock"),
        generator_command=list(generator.get("command", [])),
        corruption=knob,
        detector=detector.get("kind", "synthetic"),
        detector_command=list(detector.get("command", [])),
        noise=noise,
        filter_fraction=float(doc.get("filter", {}).get("fraction", 0.10)),
        max_outside_fraction=float(doc.get("placement", {}).get("max_outside_fraction", 0.20)),
        seed=int(overrides.get("seed", pipe.get("seed", 0))),
        workers=int(overrides.get("workers", pipe.get("workers", 1))),
        export_channels=list(doc.get("export", {}).get("channels", [])),
    )


def _atomic_write_json(path: Path, payload: dict):
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _ensure_camera_file(cfg: PipelineConfig, scene: SceneSample) -> str:
    rel = f"cameras/{scene.dataset_id}.{scene.sample_id}.json"
    path = cfg.out_dir / rel
    if not path.is_file():
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        os.close(fd)
        save_camera(scene.camera, tmp)
        os.replace(tmp, path)  # concurrent writers produce identical bytes
    return rel


class _SampleJob:
    """Stage-by-stage processing of one fused sample with an on-disk record."""

    def __init__(self, spec: FusedSample, scene: SceneSample, motion: MotionSample,
                 cfg: PipelineConfig, until: str):
        self.spec = spec
        self.scene = scene
        self.motion = motion
        self.cfg = cfg
        self.until_idx = _stage_index(until)
        self.sid = spec.id
        self.dir = cfg.out_dir / "samples" / self.sid
        self.rel = f"samples/{self.sid}"
        self.record: dict = {"files": {}, "hashes": {}, "quality_score": None,
                             "per_frame_scores": None}

    # --- record handling ---

    def _record_path(self) -> Path:
        return self.dir / "record.json"

    def _load_record(self) -> bool:
        path = self._record_path()
        if not path.is_file():
            return False
        try:
            rec = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            return False
        for rel, digest in rec.get("hashes", {}).items():
            target = self.cfg.out_dir / rel
            if not target.is_file() or sha256_file(target) != digest:
                log.info("sample %s: stale outputs, reprocessing", self.sid)
                return False
        self.record = rec
        return True

    def _save_record(self):
        _atomic_write_json(self._record_path(), self.record)

    def _add_file(self, slot: str, rel: str, hash_it: bool = True):
        self.record["files"][slot] = rel
        if hash_it:
            self.record["hashes"][rel] = sha256_file(self.cfg.out_dir / rel)

    # --- stage data (recomputed cheaply on resume) ---

    def _guidance(self):
        return read_pose(self.cfg.out_dir / self.record["files"]["guidance_2d"],
                         self.cfg.schemas)

    def _mapped_guidance(self):
        mapping = self.cfg.guidance_mapping(self.motion.motion.schema)
        return map_schema_2d(self._guidance(), mapping)

    # --- stages ---

    def _stage_fuse(self):
        if "guidance_2d" in self.record["files"]:
            return
        corrected = self.motion.corrected()
        xf = compute_alignment(corrected, self.scene)
        gt_world = align(corrected, self.scene, xf)
        validate_placement(gt_world, self.scene.camera, self.cfg.max_outside_fraction)
        gt_camera = world_to_camera(gt_world, self.scene.camera)
        guidance = project(gt_camera, self.scene.camera)

        self.dir.mkdir(parents=True, exist_ok=True)
        cam_rel = _ensure_camera_file(self.cfg, self.scene)
        write_pose(self.cfg.out_dir / f"{self.rel}/gt_3d_world.pseq", gt_world)
        write_pose(self.cfg.out_dir / f"{self.rel}/gt_3d_camera.pseq", gt_camera)
        write_pose(self.cfg.out_dir / f"{self.rel}/guidance_2d.pseq", guidance)
        self._add_file("camera", cam_rel)
        self._add_file("gt_3d_world", f"{self.rel}/gt_3d_world.pseq")
        self._add_file("gt_3d_camera", f"{self.rel}/gt_3d_camera.pseq")
        self._add_file("guidance_2d", f"{self.rel}/guidance_2d.pseq")

    def _stage_generate(self):
        if self.cfg.generator == "none" or "frames" in self.record["files"]:
            return
        req = GeneratorRequest(
            reference_frame_paths=self.scene.reference_frame_paths,
            guidance=self._mapped_guidance(),
            output_dir=self.dir / "frames",
            seed=stable_seed(self.cfg.seed, self.sid, "generate"),
        )
        if self.cfg.generator == "mock":
            adapter = MockGeneratorAdapter(self.cfg.corruption)
        else:
            adapter = ExternalGeneratorAdapter(self.cfg.generator_command)
        frames_dir = generate(req, adapter)
        self.record["files"]["frames"] = f"{self.rel}/frames"
        for frame in sorted(frames_dir.glob("frame_*.png")):
            rel = f"{self.rel}/frames/{frame.name}"
            self.record["hashes"][rel] = sha256_file(frame)

    def _stage_detect(self):
        if "detected_2d" in self.record["files"]:
            return
        seed = stable_seed(self.cfg.seed, self.sid, "detect")
        mapped_schema = self.cfg.guidance_mapping(self.motion.motion.schema).target
        registry = {**BUILTIN_SCHEMAS, **self.cfg.schemas, mapped_schema.name: mapped_schema}
        if self.cfg.generator == "none":
            # no generative step: detections are noise over the exact guidance
            detected = synth_detect(self._mapped_guidance(), self.cfg.noise,
                                    self.scene.camera.image_width, seed)
        else:
            frames_dir = self.cfg.out_dir / self.record["files"]["frames"]
            if self.cfg.detector == "synthetic":
                adapter = SyntheticDetectorAdapter(self.cfg.noise,
                                                   self.scene.camera.image_width,
                                                   seed, registry)
            elif self.cfg.detector == "pixel":
                adapter = PixelDetectorAdapter(mapped_schema)
            else:
                adapter = ExternalDetectorAdapter(self.cfg.detector_command, registry, seed)
            detected = detect(frames_dir, adapter)
        write_pose(self.cfg.out_dir / f"{self.rel}/detected_2d.pseq", detected)
        self._add_file("detected_2d", f"{self.rel}/detected_2d.pseq")

    def _stage_score(self):
        if self.record.get("quality_score") is not None:
            return
        detected = read_pose(self.cfg.out_dir / self.record["files"]["detected_2d"],
                             self.cfg.schemas)
        truth = self._mapped_guidance()
        report = quality.score_sample(detected, truth, self.scene.camera, self.sid)
        self.record["quality_score"] = report.score
        self.record["per_frame_scores"] = [float(x) for x in report.per_frame_scores]

    def run(self) -> ManifestSample:
        self.dir.mkdir(parents=True, exist_ok=True)
        self._load_record()
        stages = (self._stage_fuse, self._stage_generate, self._stage_detect,
                  self._stage_score)
        try:
            for idx, stage in enumerate(stages):
                if idx > self.until_idx:
                    break
                stage()
            self._save_record()
        except Exception as exc:  # per-sample isolation: record, never abort
            log.warning("sample %s failed: %s", self.sid, exc)
            reason = str(exc) if isinstance(exc, PoseFuseError) else \
                f"{type(exc).__name__}: {exc}"
            return ManifestSample(id=self.sid, scene_ref=self.spec.scene_ref,
                                  motion_ref=self.spec.motion_ref,
                                  status="failed", fail_reason=reason)
        return ManifestSample(
            id=self.sid,
            scene_ref=self.spec.scene_ref,
            motion_ref=self.spec.motion_ref,
            files=dict(self.record["files"]),
            hashes=dict(self.record["hashes"]),
            quality_score=self.record.get("quality_score"),
        )

    def quality_report(self) -> quality.QualityReport | None:
        if self.record.get("quality_score") is None:
            return None
        return quality.QualityReport(self.sid, self.record["quality_score"],
                                     self.record["per_frame_scores"])


def apply_filter(manifest: Manifest, fraction: float) -> dict:
    """Recompute kept flags from stored scores; returns summary statistics."""
    reports = []
    for sample in manifest.ok_samples():
        if sample.quality_score is None:
            raise MissingChannelError(
                f"sample {sample.id!r} has no quality score; run the score stage first"
            )
        reports.append(quality.QualityReport(sample.id, sample.quality_score,
                                             [sample.quality_score]))
    kept_ids = set(quality.filter_top(reports, fraction))
    for sample in manifest.samples:
        sample.kept = sample.status == "ok" and sample.id in kept_ids
    all_scores = [r.score for r in reports]
    kept_scores = [r.score for r in reports if r.sample_id in kept_ids]
    return {
        "fraction": fraction,
        "unfiltered": quality.summary_stats(all_scores),
        "filtered": quality.summary_stats(kept_scores),
    }


def run_pipeline(cfg: PipelineConfig, until: str = "score",
                 apply_quality_filter: bool = True) -> tuple[Manifest, int]:
    """Execute the batch pipeline; returns (manifest, number of failed samples).

    Raises ``PipelineError`` only when every sample fails; individual
    failures are recorded in the manifest with their reason.
    """
    until_idx = _stage_index(until)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    scene_index = {(s.dataset_id, s.sample_id): s for s in cfg.scenes}
    motion_index = {(m.dataset_id, m.sample_id): m for m in cfg.motions}
    specs = cross_fuse(cfg.scenes, cfg.motions, cfg.policy)
    log.info("pipeline: %d samples to process (until %s)", len(specs), until)

    jobs = [
        _SampleJob(spec, scene_index[spec.scene_ref], motion_index[spec.motion_ref],
                   cfg, until)
        for spec in specs
    ]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda job: job.run(), jobs))
    else:
        results = [job.run() for job in jobs]

    manifest = Manifest(root_dir=cfg.out_dir)
    seen_datasets = {}
    for sample in (cfg.scenes + cfg.motions):
        schema = getattr(getattr(sample, "motion", None), "schema", None)
        seen_datasets.setdefault(sample.dataset_id, {
            "dataset_id": sample.dataset_id,
            "schema": schema.name if schema is not None else "h36m-17",
            "handedness": getattr(getattr(sample, "handedness", None), "flip_axis", None),
        })
    manifest.source_datasets = [seen_datasets[k] for k in sorted(seen_datasets)]
    manifest.samples = sorted(results, key=lambda s: s.id)

    n_failed = sum(1 for s in manifest.samples if s.status == "failed")
    if n_failed == len(manifest.samples):
        reasons = {s.fail_reason for s in manifest.samples}
        raise PipelineError(f"all {n_failed} samples failed; reasons: {sorted(reasons)}")

    if until_idx >= _stage_index("score"):
        reports = [job.quality_report() for job in jobs]
        reports = [r for r in reports if r is not None]
        if apply_quality_filter and reports:
            stats = apply_filter(manifest, cfg.filter_fraction)
            log.info("filter: kept %d of %d (mean %.2f -> %.2f normalized px)",
                     stats["filtered"]["count"], stats["unfiltered"]["count"],
                     stats["unfiltered"]["mean"], stats["filtered"]["mean"])
        quality.write_reports(reports, cfg.out_dir / "quality_reports.jsonl")

    save_manifest(manifest, cfg.out_dir / "manifest.json")
    for channel in cfg.export_channels:
        export_training_set(manifest, channel, cfg.out_dir / f"export-{channel.lower()}",
                            cfg.schemas)
    return manifest, n_failed


def export_training_set(manifest: Manifest, channel: str, out_dir: str | Path,
                        schemas: dict | None = None) -> Path:
    """Write the lifter-ready (2D input, 3D target) pairs for one channel.

    GT exports the stored projected guidance, HPE the stored detections; both
    are byte-for-byte copies of the corpus tensors.  Returns the index path.
    """
    if channel not in ("GT", "HPE"):
        raise ConfigError(f"channel must be GT or HPE, got {channel!r}")
    slot = "guidance_2d" if channel == "GT" else "detected_2d"
    if manifest.root_dir is None:
        raise InvalidInputError("manifest must be loaded from disk")
    kept = manifest.kept_samples()
    if not kept:
        raise MissingChannelError("no kept samples to export")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for sample in kept:
        if slot not in sample.files or "gt_3d_camera" not in sample.files:
            raise MissingChannelError(
                f"sample {sample.id!r} lacks the {channel} channel ({slot})"
            )
        input_rel = f"{sample.id}.input_2d.pseq"
        target_rel = f"{sample.id}.target_3d.pseq"
        (out_dir / input_rel).write_bytes((manifest.root_dir / sample.files[slot]).read_bytes())
        (out_dir / target_rel).write_bytes(
            (manifest.root_dir / sample.files["gt_3d_camera"]).read_bytes())
        index.append({"id": sample.id, "input": input_rel, "target": target_rel})
    index_path = out_dir / "index.json"
    index_path.write_text(json.dumps({"channel": channel, "pairs": index},
                                     indent=2, sort_keys=True))
    return index_path
