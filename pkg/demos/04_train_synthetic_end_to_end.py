#!/usr/bin/env python3
"""End-to-end run: synthesize data, train three variants, compare.

Uses the split signal mode, where verb information lives only in the video
descriptor and noun information only in the frame embeddings. Each
single-encoder variant can solve half the task; the fused variant solves
both, which is the entire argument for concatenating the two descriptors.

Runs in well under a minute on a laptop CPU. Artifacts land in
./_demo_runs/ (safe to delete).
"""

from pathlib import Path

from cliplta import SynthConfig, TrainConfig, generate, run_eval, train

root = Path("_demo_runs")
data_dir = root / "data"

cfg = SynthConfig(
    n_train=200, n_val=64, n_input_clips=2, N=4, c=32, d_video=32,
    Z=4, n_verbs=8, n_nouns=8, signal_mode="split", noise_std=0.1, seed=31,
)
if not (data_dir / "store" / "manifest.json").exists():
    print("generating synthetic dataset (split mode: verbs in video, nouns in frames)")
    generate(cfg, data_dir)

results = {}
for variant in ("baseline", "clip_img_only", "img_plus_clip"):
    out = root / variant
    print(f"\ntraining {variant} ...")
    ckpt, log = train(TrainConfig(
        variant=variant,
        store=str(data_dir / "store"),
        gt=str(data_dir / "gt_train.json"),
        taxonomy=str(data_dir / "taxonomy.json"),
        out_dir=str(out),
        epochs=30, batch_size=8, base_lr=3e-3, seed=0,
        n_layers=2, n_heads_agg=4,
    ))
    _, report = run_eval(ckpt, data_dir / "store", data_dir / "gt_val.json",
                         data_dir / "taxonomy.json", K=5, seed=0)
    results[variant] = report
    print(f"  final train loss {log.records[-1]['train_loss']:.3f} -> "
          f"val verb_ed={report.verb_ed:.3f} noun_ed={report.noun_ed:.3f}")

print("\nMethod            Verb    Noun")
for variant, report in results.items():
    print(f"{variant:<18}{report.verb_ed:.4f}  {report.noun_ed:.4f}")
print("\nvideo-only learns verbs, frames-only learns nouns, fusion learns both;")
print("the same comparison runs as part of the acceptance suite over 3 seeds.")
