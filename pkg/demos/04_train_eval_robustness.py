"""End-to-end: synthesize data, train a small model, evaluate, stress it.

This is the full pipeline at demo scale (a reduced architecture and a
couple dozen epochs, about a minute of CPU). The acceptance suite runs
the same flow with the desk-scale defaults; see README for the CLI
equivalent.

Run from the repository root:  python demos/04_train_eval_robustness.py
"""

import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")  # see README performance note

from evpose import evaluation, model, pipeline, synth
from evpose.events import parse_events, parse_poses, split_random, window_events

OUT = os.path.join(os.path.dirname(__file__), "output", "04_pipeline")
os.makedirs(OUT, exist_ok=True)

# --- data -----------------------------------------------------------------
scene = synth.default_scene(seed=7, rate_hz=200.0, duration=0.6)
events_text, poses_text = synth.generate_dataset(scene)
events = parse_events(events_text, scene.sensor_w, scene.sensor_h)
poses = parse_poses(poses_text)
windows, _ = window_events(events, poses)
train_windows, test_windows = split_random(windows, 0.7, seed=1)
print(f"{len(windows)} windows -> {len(train_windows)} train / {len(test_windows)} test")

# --- train ------------------------------------------------------------
# A small architecture so the demo stays around a minute; swap in
# model.desk_config() (and a few hundred epochs) for the real thing.
small = model.ModelConfig(
    input_h=64,
    input_w=64,
    conv_blocks=((6, 3, 1, 4), (12, 3, 1, 2)),
    feature_dim=64,
    lstm_hidden=32,
    lstm_layers=2,
    fc_hidden=32,
    dropout_rate=0.5,
)
config = pipeline.TrainConfig(model=small, lr=1e-3, epochs=30, seed=1)
ckpt = pipeline.train(config, train_windows)
h = ckpt.loss_history
print(f"trained {config.epochs} epochs: loss {h[0]:.3f} -> {h[-1]:.3f}")

# --- evaluate ---------------------------------------------------------
# Median/mean position error in scene units, orientation in degrees.
for name, subset in (("train", train_windows), ("test", test_windows)):
    report = evaluation.evaluate(ckpt.params, subset)
    print(f"{name}: position median {report.position.median:.4f} "
          f"(IQR {report.position.q1:.4f}..{report.position.q3:.4f}), "
          f"orientation median {report.orientation.median:.2f} deg")

report = evaluation.evaluate(ckpt.params, test_windows)
with open(os.path.join(OUT, "report.json"), "w") as f:
    f.write(report.to_json() + "\n")
with open(os.path.join(OUT, "report.csv"), "w") as f:
    f.write(report.to_csv())

# --- robustness to the number of events -------------------------------
# Rebuild each test image from only the newest 10%, 20%, ... of events.
table = evaluation.robustness_experiment(ckpt.params, test_windows)
print("fraction of events vs median errors:")
for fraction, pos_med, ori_med in table.rows:
    print(f"  {fraction:4.1f}  {pos_med:.4f}  {ori_med:6.2f} deg")
with open(os.path.join(OUT, "robustness.csv"), "w") as f:
    f.write(table.to_csv())

# --- checkpointing ----------------------------------------------------
ckpt_path = os.path.join(OUT, "model.ckpt")
pipeline.save_checkpoint(ckpt, ckpt_path)
loaded = pipeline.load_checkpoint(ckpt_path)
again = evaluation.evaluate(loaded.params, test_windows)
assert again.per_sample_errors == report.per_sample_errors
print(f"checkpoint round-trip reproduces the evaluation exactly; artifacts in {OUT}")
