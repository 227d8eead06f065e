"""Training loop and evaluation driver.

The reference path is single-threaded and fully seeded: parameter init,
batch order, and candidate sampling all derive from the config seed, so a
rerun with the same config reproduces the run log losses and the prediction
file byte for byte.

Optimizer: SGD with momentum and a cosine learning-rate decay from base_lr
over the configured epochs. The default hyperparameters (epochs 30, batch
64, base_lr 1e-4) are the documented full-scale profile; desk-scale runs
shrink batch size and model dims through the config.

Dataset convention: the feature store holds the clips of example ``eid`` as
clip ids ``eid#0 .. eid#{T-1}``, where T (clips per example) is inferred
from the store and must be constant across examples. Frames per clip must
also be constant so examples can be batched.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import img_text_concat
from .errors import NumericError, ValidationError
from .featurestore import FeatureStore, TextEmbeddingTable, build_text_table, stub_embed
from .metrics import EvalReport, ed_at_zk, evaluate, read_ground_truth
from .model import (
    DEFAULT_ATTENTION_PROMPT,
    LtaModel,
    LtaModelConfig,
    PredictionSet,
    StepLogits,
    batch_loss_and_grads,
    load_checkpoint,
    sample_candidates,
    save_checkpoint,
    write_predictions,
)
from .taxonomy import CATEGORIES, GroundTruthSequence, Taxonomy, load_taxonomy

DEFAULT_PROMPT_TEMPLATE = "a photo of {}"


@dataclass
class TrainConfig:
    variant: str
    store: str
    gt: str
    taxonomy: str
    out_dir: str
    val_gt: str | None = None
    epochs: int = 30
    batch_size: int = 64
    base_lr: float = 1e-4
    momentum: float = 0.9
    seed: int = 0
    eval_every: int = 0          # 0 -> evaluate only after the last epoch
    K: int = 5
    temperature: float = 1.0
    # model hyperparameters
    n_layers: int = 6
    n_heads_agg: int = 8
    d_ff: int = 0
    d_attn: int = 0
    n_heads_ca: int = 8
    learned_query: bool = False
    attention_prompt: str = DEFAULT_ATTENTION_PROMPT
    text_seed: int = 100
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.base_lr > 0:
            raise ValidationError(f"base_lr must be > 0, got {self.base_lr}")
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if self.K < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}")


@dataclass
class RunLog:
    records: list[dict] = field(default_factory=list)
    checkpoint_path: str = ""

    def append(self, record: dict) -> None:
        if self.records and record["epoch"] <= self.records[-1]["epoch"]:
            raise ValidationError("run log epochs must be strictly increasing")
        if not np.isfinite(record["train_loss"]):
            raise ValidationError("run log losses must be finite")
        self.records.append(record)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for record in self.records:
                f.write(json.dumps(record, sort_keys=True) + "\n")


def build_label_tables(taxonomy: Taxonomy, c: int, text_seed: int,
                       prompt_template: str = DEFAULT_PROMPT_TEMPLATE) -> dict[str, TextEmbeddingTable]:
    """Stub text-encoder tables for all four categories."""
    encoder = lambda prompt: stub_embed(text_seed, prompt, c)
    return {cat: build_text_table(taxonomy, cat, prompt_template, encoder) for cat in CATEGORIES}


def infer_clips_per_example(store: FeatureStore, example_id: str) -> int:
    t = 0
    while f"{example_id}#{t}" in store:
        t += 1
    if t == 0:
        raise ValidationError(f"store has no clips for example {example_id!r} (expected id '{example_id}#0')")
    return t


@dataclass
class Dataset:
    """Batched arrays for one split, in ground-truth file order."""

    example_ids: list[str]
    video: np.ndarray        # (B, T, d_video)
    frames: np.ndarray       # (B, T, N, c)
    verb_ids: np.ndarray     # (B, Z)
    noun_ids: np.ndarray
    clip_desc: np.ndarray | None = None   # (B, T, d_clip) for precomputed variants

    def __len__(self) -> int:
        return len(self.example_ids)

    def batch(self, idx: np.ndarray, model_cfg: LtaModelConfig) -> dict:
        out = {}
        if model_cfg.uses_video:
            out["video"] = self.video[idx]
        if model_cfg.variant == "clip_attention":
            out["frames"] = self.frames[idx]
        elif model_cfg.d_clip > 0:
            out["clip_desc"] = self.clip_desc[idx]
        return out


def load_dataset(store: FeatureStore, gt_list: list[GroundTruthSequence], n_input_clips: int) -> Dataset:
    videos, frame_stacks, verb_rows, noun_rows, ids = [], [], [], [], []
    n_frames = None
    for gt in gt_list:
        clip_frames, clip_videos = [], []
        for t in range(n_input_clips):
            clip_id = f"{gt.example_id}#{t}"
            frames, video = store.read_clip(clip_id)
            if n_frames is None:
                n_frames = frames.n_frames
            elif frames.n_frames != n_frames:
                raise ValidationError(
                    f"clip {clip_id!r} has {frames.n_frames} frames; expected {n_frames} "
                    "(frames per clip must be constant for batching)"
                )
            clip_frames.append(frames.frames)
            clip_videos.append(video.vector)
        ids.append(gt.example_id)
        frame_stacks.append(np.stack(clip_frames))
        videos.append(np.stack(clip_videos))
        verb_rows.append(gt.verb_ids)
        noun_rows.append(gt.noun_ids)
    return Dataset(
        example_ids=ids,
        video=np.stack(videos),
        frames=np.stack(frame_stacks),
        verb_ids=np.array(verb_rows, dtype=np.int64),
        noun_ids=np.array(noun_rows, dtype=np.int64),
    )


def precompute_descriptors(dataset: Dataset, model_cfg: LtaModelConfig,
                           tables: dict[str, TextEmbeddingTable] | None) -> None:
    """Fill dataset.clip_desc for variants whose aggregation has no trainable parts."""
    if model_cfg.variant in ("baseline", "clip_attention"):
        return
    B, T = dataset.frames.shape[:2]
    if model_cfg.variant in ("clip_img_only", "img_plus_clip"):
        dataset.clip_desc = dataset.frames.mean(axis=2)
    elif model_cfg.variant == "img_plus_clip_text":
        if tables is None:
            raise ValidationError("img_plus_clip_text requires label text tables")
        desc = np.empty((B, T, 5 * model_cfg.c), dtype=dataset.frames.dtype)
        for b in range(B):
            for t in range(T):
                desc[b, t] = img_text_concat(dataset.frames[b, t], tables).vector
        dataset.clip_desc = desc


def _cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * epoch / total_epochs))


def _example_sample_seed(seed: int, example_id: str) -> int:
    digest = hashlib.blake2b(f"{seed}|{example_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _predict_dataset(model: LtaModel, dataset: Dataset, K: int, temperature: float,
                     seed: int, batch_size: int = 64) -> list[PredictionSet]:
    predictions = []
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        batch = dataset.batch(idx, model.config)
        verb_logits, noun_logits, _ = model.forward_batch(batch)
        for row, b in enumerate(idx):
            example_id = dataset.example_ids[b]
            logits = StepLogits(verb_logits=verb_logits[row].astype(np.float64),
                                noun_logits=noun_logits[row].astype(np.float64))
            predictions.append(
                sample_candidates(logits, K, temperature,
                                  _example_sample_seed(seed, example_id), example_id)
            )
    return predictions


def _score_in_memory(predictions: list[PredictionSet], gt_list: list[GroundTruthSequence]) -> tuple[float, float]:
    by_id = {p.example_id: p for p in predictions}
    verb_scores, noun_scores = [], []
    for gt in gt_list:
        v, n = ed_at_zk(by_id[gt.example_id], gt)
        verb_scores.append(v)
        noun_scores.append(n)
    return float(np.mean(verb_scores)), float(np.mean(noun_scores))


def train(cfg: TrainConfig) -> tuple[Path, RunLog]:
    """Train per config; returns (checkpoint dir, run log).

    Writes ``checkpoint/``, ``runlog.jsonl``, and ``train_config.json``
    under cfg.out_dir.
    """
    taxonomy = load_taxonomy(cfg.taxonomy)
    store = FeatureStore.open(cfg.store)
    gt_train, Z, gt_hash = read_ground_truth(cfg.gt)
    if gt_hash != taxonomy.sha256():
        raise ValidationError("ground truth taxonomy hash does not match the taxonomy file")
    n_input_clips = infer_clips_per_example(store, gt_train[0].example_id)

    model_cfg = LtaModelConfig(
        variant=cfg.variant,
        n_verbs=len(taxonomy.verbs),
        n_nouns=len(taxonomy.nouns),
        c=store.c,
        d_video=store.d_video,
        n_input_clips=n_input_clips,
        Z=Z,
        n_layers=cfg.n_layers,
        n_heads_agg=cfg.n_heads_agg,
        d_ff=cfg.d_ff,
        d_attn=cfg.d_attn,
        n_heads_ca=cfg.n_heads_ca,
        learned_query=cfg.learned_query,
        attention_prompt=cfg.attention_prompt,
        label_template=cfg.prompt_template,
        text_seed=cfg.text_seed,
        seed=cfg.seed,
    )
    model = LtaModel(model_cfg)

    tables = None
    if cfg.variant == "img_plus_clip_text":
        tables = build_label_tables(taxonomy, store.c, cfg.text_seed, cfg.prompt_template)

    dataset = load_dataset(store, gt_train, n_input_clips)
    precompute_descriptors(dataset, model_cfg, tables)

    val_dataset, val_gt = None, None
    if cfg.val_gt:
        val_gt, val_z, val_hash = read_ground_truth(cfg.val_gt)
        if val_z != Z or val_hash != gt_hash:
            raise ValidationError("validation ground truth is inconsistent with the training file")
        val_dataset = load_dataset(store, val_gt, n_input_clips)
        precompute_descriptors(val_dataset, model_cfg, tables)

    trainable = model.trainable_names()
    params = model.named_parameters()
    velocity = {name: np.zeros_like(params[name]) for name in trainable}
    shuffle_rng = np.random.default_rng(cfg.seed)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = RunLog()
    n = len(dataset)

    for epoch in range(cfg.epochs):
        epoch_start = time.time()
        lr = _cosine_lr(cfg.base_lr, epoch, cfg.epochs)
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            batch = dataset.batch(idx, model_cfg)
            verb_logits, noun_logits, cache = model.forward_batch(batch)
            loss, d_verb, d_noun = batch_loss_and_grads(
                verb_logits, noun_logits, dataset.verb_ids[idx], dataset.noun_ids[idx]
            )
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {batch_index}")
            model.zero_grad()
            model.backward_batch(cache, d_verb, d_noun)
            grads = model.named_grads()
            for name in trainable:
                v = velocity[name]
                v *= cfg.momentum
                v -= lr * grads[name]
                params[name] += v
            epoch_losses.append(loss)

        record = {
            "epoch": epoch + 1,
            "train_loss": float(np.mean(epoch_losses)),
            "wall_time": round(time.time() - epoch_start, 6),
        }
        if val_dataset is not None and cfg.eval_every > 0 and (epoch + 1) % cfg.eval_every == 0:
            preds = _predict_dataset(model, val_dataset, cfg.K, cfg.temperature, cfg.seed)
            record["val_verb_ed"], record["val_noun_ed"] = _score_in_memory(preds, val_gt)
        log.append(record)

    ckpt_dir = out_dir / "checkpoint"
    save_checkpoint(model, ckpt_dir)
    log.checkpoint_path = str(ckpt_dir)
    log.save(out_dir / "runlog.jsonl")
    with open(out_dir / "train_config.json", "w", encoding="utf-8") as f:
        json.dump(asdict(cfg), f, indent=2)
        f.write("\n")
    return ckpt_dir, log


def run_eval(checkpoint: str | Path | LtaModel, store_path: str | Path, gt_path: str | Path,
             taxonomy_path: str | Path, *, K: int = 5, temperature: float = 1.0, seed: int = 0,
             out_dir: str | Path | None = None) -> tuple[Path, EvalReport]:
    """Predict on a split and score it; returns (prediction file, report).

    Featurization settings (text seed, prompt templates) come from the
    checkpoint config, so evaluation cannot silently diverge from training.
    Writes predictions.json and report.json (under out_dir, default the
    checkpoint's parent directory).
    """
    if K < 1:
        raise ValidationError(f"K must be >= 1, got {K}")
    if not temperature > 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    model = checkpoint if isinstance(checkpoint, LtaModel) else load_checkpoint(checkpoint)
    taxonomy = load_taxonomy(taxonomy_path)
    if len(taxonomy.verbs) != model.config.n_verbs or len(taxonomy.nouns) != model.config.n_nouns:
        raise ValidationError("taxonomy class counts do not match the checkpoint")
    store = FeatureStore.open(store_path)
    if store.c != model.config.c or store.d_video != model.config.d_video:
        raise ValidationError("store widths do not match the checkpoint")
    gt_list, Z, gt_hash = read_ground_truth(gt_path)
    if gt_hash != taxonomy.sha256():
        raise ValidationError("ground truth taxonomy hash does not match the taxonomy file")
    if Z != model.config.Z:
        raise ValidationError(f"ground truth horizon Z={Z} does not match the checkpoint Z={model.config.Z}")

    n_input_clips = infer_clips_per_example(store, gt_list[0].example_id)
    if n_input_clips != model.config.n_input_clips:
        raise ValidationError("clips per example in the store do not match the checkpoint")
    dataset = load_dataset(store, gt_list, n_input_clips)
    tables = None
    if model.config.variant == "img_plus_clip_text":
        tables = build_label_tables(taxonomy, store.c, model.config.text_seed,
                                    model.config.label_template)
    precompute_descriptors(dataset, model.config, tables)

    predictions = _predict_dataset(model, dataset, K, temperature, seed)
    if out_dir is None:
        if isinstance(checkpoint, LtaModel):
            raise ValidationError("out_dir is required when evaluating an in-memory model")
        out_dir = Path(checkpoint).parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pred_file = out_dir / "predictions.json"
    write_predictions(pred_file, predictions, Z, K, taxonomy.sha256())
    report = evaluate(pred_file, gt_path, taxonomy)
    with open(out_dir / "report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    return pred_file, report
