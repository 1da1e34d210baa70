"""The full pipeline, driven exactly the way the CLI drives it.

Materializes toy sources in the on-disk layout a real dataset converter
would produce (motions as pose tensors, cameras as JSON, a source manifest
binding them), writes a TOML config, and runs fuse -> generate -> detect ->
score -> filter -> export.  Ends by training the baseline lifter on the
exported HPE channel, which is the realistic training setup.
"""

from pathlib import Path

import numpy as np

from posefuse.lifter import fit, predict
from posefuse.metrics import mpjpe, per_sequence_average
from posefuse.pipeline import export_training_set, load_config, run_pipeline
from posefuse.poseio import read_pose, validate_manifest
from posefuse.skeleton import CAMERA
from posefuse.toydata import default_camera, make_toy_sources, write_source_manifest

root = Path("demos/output/07_pipeline")
camera = default_camera(image_width=512, image_height=384)

# 1. sources on disk, as a converter for a real dataset would write them
scenes, motions = make_toy_sources(root / "sources", n_scenes=4, n_motions=6,
                                   seed=13, frames=6, camera=camera)
sources = write_source_manifest(root / "sources", scenes, motions)
print(f"source manifest: {sources}")

# 2. a config file, then the same entry point the CLI uses
config_path = root / "pipeline.toml"
config_path.write_text("""
[pipeline]
out_dir = "corpus"
seed = 17

[sources]
files = ["sources/sources.json"]

[pairing]
policy = "cross-only"

[generator]
kind = "mock"

[generator.corruption]
pose_drift_sigma = 100.0
failure_prob = 0.3

[detector]
kind = "synthetic"

[filter]
fraction = 0.25
""")
cfg = load_config(config_path)
manifest, n_failed = run_pipeline(cfg)
kept = manifest.kept_samples()
print(f"\npipeline: {len(manifest.samples)} samples attempted, "
      f"{n_failed} failed, {len(kept)} kept after filtering")
print(f"validation: {validate_manifest(manifest, check_consistency=True) or 'clean'}")

# 3. export the realistic (detector-input) training channel and fit the lifter
index_path = export_training_set(manifest, "HPE", root / "train-hpe")
import json
pairs = json.loads(index_path.read_text())["pairs"]
inputs = [read_pose(root / "train-hpe" / p["input"]) for p in pairs]
targets = [read_pose(root / "train-hpe" / p["target"], frame_tag=CAMERA) for p in pairs]
model = fit(inputs, targets, lam=1e-3)

errors = [mpjpe(t, predict(model, x)) for x, t in zip(inputs, targets)]
print(f"\nlifter fit on the exported HPE channel: "
      f"{per_sequence_average(errors):.1f} mm training MPJPE "
      f"over {len(pairs)} kept sequences")
print(f"corpus lives under {cfg.out_dir}")
