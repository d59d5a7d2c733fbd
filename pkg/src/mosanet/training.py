"""Multi-task objective, training loops, adaptation, and model evaluation.

The per-task loss combines the utterance-level squared error with the
frame-level squared errors against the same utterance truth:

    mean over utterances of [(T - U)^2 + (alpha / L) * sum_l (T - f_l)^2]

and the total is the gamma-weighted sum over active tasks. Batch size one
with Adam (lr 1e-4) is the main-model recipe; the BLSTM baseline trains
with RMSprop (lr 1e-3). Adaptation warm-starts a pretrained objective-score
model and retargets its quality head to MOS and intelligibility head to
subjective intelligibility.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from . import evalstats
from .assessor import (
    AssessorConfig,
    AssessorModel,
    build_model,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .audio import load_waveform
from .corpus import ManifestEntry, score_value
from .features.extract import FeatureExtractor, RawStreams

# subjective tasks reuse the weight slots of the objective task they replace
_WEIGHT_SLOT = {"pesq": "q", "mos": "q", "stoi": "i", "intel": "i", "sdi": "d"}


@dataclass(frozen=True)
class LossWeights:
    """Task weights (gamma) and frame-term weights (alpha); default all 1."""

    gamma_q: float = 1.0
    gamma_i: float = 1.0
    gamma_d: float = 1.0
    alpha_q: float = 1.0
    alpha_i: float = 1.0
    alpha_d: float = 1.0

    def __post_init__(self):
        values = [self.gamma_q, self.gamma_i, self.gamma_d,
                  self.alpha_q, self.alpha_i, self.alpha_d]
        if any(v < 0 for v in values):
            raise ValueError("loss weights must be non-negative")

    def gamma(self, task: str) -> float:
        return getattr(self, f"gamma_{_WEIGHT_SLOT[task]}")

    def alpha(self, task: str) -> float:
        return getattr(self, f"alpha_{_WEIGHT_SLOT[task]}")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    batch_size: int = 1
    epochs: int = 50
    seed: int = 0
    early_stop_patience: int = 15
    heldout_fraction: float = 0.1
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.optimizer not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def multitask_loss(
    results: Sequence,
    truths: Sequence[Mapping[str, float]],
    weights: LossWeights = LossWeights(),
    ids: Sequence[str] | None = None,
):
    """Total loss and per-task breakdown over a batch of utterances.

    ``results`` items expose per-task utterance and frame predictions
    (AssessmentResult, or a mapping task -> (utterance, frames)); numpy and
    torch values both work, so the same code scores oracles and trains.
    """
    if len(results) != len(truths):
        raise ValueError("results and truths batches differ in length")
    n = len(results)
    breakdown: dict[str, object] = {}
    total = None
    for idx, (result, truth) in enumerate(zip(results, truths)):
        if hasattr(result, "utterance_score"):
            tasks = result.tasks
            pairs = {t: (result.utterance_score[t], result.frame_scores[t]) for t in tasks}
        else:
            pairs = dict(result)
            tasks = tuple(pairs)
        for task in tasks:
            if task not in truth or truth[task] is None:
                name = ids[idx] if ids is not None else f"utterance #{idx}"
                raise ValueError(f"missing {task} truth for {name}")
            target = truth[task]
            utt_pred, frame_preds = pairs[task]
            frame_term = ((target - frame_preds) ** 2).mean()
            term = (target - utt_pred) ** 2 + weights.alpha(task) * frame_term
            breakdown[task] = breakdown.get(task, 0.0) + term
    for task in breakdown:
        breakdown[task] = breakdown[task] / n
        weighted = weights.gamma(task) * breakdown[task]
        total = weighted if total is None else total + weighted
    return total, breakdown


# ---- dataset ---------------------------------------------------------------


@dataclass
class TrainItem:
    utt_id: str
    raw: RawStreams
    truths: dict[str, float]


def prepare_items(
    entries: Sequence[ManifestEntry],
    tasks: Sequence[str],
    extractor: FeatureExtractor,
) -> list[TrainItem]:
    """Extract features once and pair them with per-task truths."""
    items = []
    for entry in entries:
        truths = {}
        for task in tasks:
            value = score_value(entry, task)
            if value is None:
                raise ValueError(f"missing {task} truth for {entry.utt_id}")
            truths[task] = value
        wav = load_waveform(entry.degraded_path)
        items.append(TrainItem(entry.utt_id, extractor.extract(wav, entry.utt_id), truths))
    return items


def _make_optimizer(model: AssessorModel, config: TrainConfig):
    if config.optimizer == "adam":
        return torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    return torch.optim.RMSprop(model.parameters(), lr=config.learning_rate)


def _batch_loss(model, batch: list[TrainItem], weights: LossWeights):
    results = []
    truths = []
    ids = []
    for item in batch:
        outputs = model(item.raw)
        results.append(
            {t: (frames.mean(), frames) for t, (frames, _, _) in outputs.items()}
        )
        truths.append(item.truths)
        ids.append(item.utt_id)
    return multitask_loss(results, truths, weights, ids=ids)


def _eval_loss(model, items: list[TrainItem], weights: LossWeights) -> float:
    if not items:
        return float("nan")
    model.eval()
    with torch.no_grad():
        total, _ = _batch_loss(model, items, weights)
    model.train()
    return float(total)


def write_history_csv(history: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(history[0]) if history else ["epoch"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(history)
    return path


def train(
    model: AssessorModel,
    entries: Sequence[ManifestEntry],
    config: TrainConfig,
    weights: LossWeights = LossWeights(),
    extractor: FeatureExtractor | None = None,
    out_dir: str | Path | None = None,
) -> tuple[Path | None, list[dict]]:
    """Seeded shuffled loop; keeps the checkpoint with the best held-out loss.

    Returns (best checkpoint path or None when ``out_dir`` is unset, history
    rows). History carries per-epoch total/per-task training loss, held-out
    loss, and wall time.
    """
    if extractor is None:
        extractor = FeatureExtractor(_feature_config_for(model.config))
    items = prepare_items(entries, model.config.tasks, extractor)
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)

    n_held = int(round(config.heldout_fraction * len(items)))
    if n_held > 0:
        order = rng.permutation(len(items))
        held_items = [items[i] for i in order[:n_held]]
        train_items = [items[i] for i in order[n_held:]]
    else:
        held_items = []
        train_items = list(items)
    if not train_items:
        raise ValueError("no training utterances left after the held-out split")

    optimizer = _make_optimizer(model, config)
    history: list[dict] = []
    best_loss = float("inf")
    best_state = None
    best_epoch = 0
    since_best = 0
    model.train()

    for epoch in range(1, config.epochs + 1):
        t0 = time.monotonic()
        order = rng.permutation(len(train_items))
        epoch_total = 0.0
        epoch_tasks = {t: 0.0 for t in model.config.tasks}
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_items[i] for i in order[start : start + config.batch_size]]
            optimizer.zero_grad()
            total, breakdown = _batch_loss(model, batch, weights)
            if not torch.isfinite(total):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch starting with "
                    f"{batch[0].utt_id}"
                )
            total.backward()
            if config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
            if hasattr(model, "sinc"):
                model.sinc.project_valid_bands_()
            epoch_total += float(total.detach())
            for task, value in breakdown.items():
                epoch_tasks[task] += float(value.detach())
            n_batches += 1

        monitor = (
            _eval_loss(model, held_items, weights)
            if held_items
            else epoch_total / n_batches
        )
        row = {
            "epoch": epoch,
            "total_loss": epoch_total / n_batches,
            **{f"{t}_loss": epoch_tasks[t] / n_batches for t in model.config.tasks},
            "heldout_loss": monitor,
            "wall_s": time.monotonic() - t0,
        }
        history.append(row)
        if monitor < best_loss:
            best_loss = monitor
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if config.early_stop_patience > 0 and since_best >= config.early_stop_patience:
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()

    ckpt_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        ckpt_path = save_checkpoint(
            model,
            out_dir / "assessor.pt",
            seed=config.seed,
            epoch=best_epoch,
            extra={
                "optimizer": config.optimizer,
                "learning_rate": config.learning_rate,
                "batch_size": config.batch_size,
                "n_train": len(train_items),
                "n_heldout": len(held_items),
                "grad_clip": config.grad_clip,
                "best_heldout_loss": best_loss,
            },
        )
        write_history_csv(history, out_dir / "history.csv")
    return ckpt_path, history


def _feature_config_for(config: AssessorConfig):
    from .features.extract import FeatureConfig

    return FeatureConfig(
        streams=config.streams,
        lfb_filters=config.lfb_filters,
        ssl_dim=config.ssl_dim,
    )


# ---- adaptation ------------------------------------------------------------

ADAPT_TASK_MAP = {"pesq": "mos", "stoi": "intel"}


def adapt(
    pretrained: str | Path | AssessorModel,
    entries: Sequence[ManifestEntry],
    config: TrainConfig | None = None,
    weights: LossWeights = LossWeights(),
    extractor: FeatureExtractor | None = None,
    out_dir: str | Path | None = None,
    warm_start: bool = True,
) -> tuple[Path | None, list[dict], AssessorModel]:
    """Retarget a pretrained objective-score model to subjective ratings.

    The quality branch becomes the MOS head and the intelligibility branch
    the subjective-intelligibility head; the distortion branch is dropped.
    With ``warm_start=False`` the same architecture trains from scratch.
    Default learning rate is half the pre-training default.
    """
    if isinstance(pretrained, AssessorModel):
        source = pretrained
    else:
        source, _meta = load_checkpoint(pretrained)
    missing = {"pesq", "stoi"} - set(source.config.tasks)
    if missing:
        raise ValueError(f"pretrained model lacks branches for adaptation: {sorted(missing)}")
    if config is None:
        config = TrainConfig(learning_rate=5e-5)

    target_config = dc_replace(source.config, tasks=("mos", "intel"))
    model = build_model(target_config, seed=config.seed)
    if warm_start:
        state = model.state_dict()
        source_state = source.state_dict()
        for key, value in source_state.items():
            new_key = key
            for old_task, new_task in ADAPT_TASK_MAP.items():
                prefix = f"branches.{old_task}."
                if key.startswith(prefix):
                    new_key = f"branches.{new_task}." + key[len(prefix):]
                    break
                head_prefix = f"heads.{old_task}."
                if key.startswith(head_prefix):
                    new_key = f"heads.{new_task}." + key[len(head_prefix):]
                    break
            if key.startswith("branches.sdi.") or key.startswith("heads.sdi."):
                continue  # distortion branch dropped
            if new_key in state:
                state[new_key] = value
        model.load_state_dict(state)
    ckpt, history = train(model, entries, config, weights, extractor, out_dir)
    return ckpt, history, model


# ---- evaluation ------------------------------------------------------------

def evaluate_model(
    model_or_path,
    entries: Sequence[ManifestEntry],
    extractor: FeatureExtractor | None = None,
) -> list[dict]:
    """Utterance-level predictions vs truths, per split and task.

    Rows carry lcc/srcc/mse (or the string "degenerate" when a correlation
    is undefined) plus the utterance count. Splits without entries are
    skipped with a warning.
    """
    if isinstance(model_or_path, AssessorModel):
        model = model_or_path
    else:
        model, _ = load_checkpoint(model_or_path)
    if extractor is None:
        extractor = FeatureExtractor(_feature_config_for(model.config))

    rows = []
    splits = sorted({e.split for e in entries})
    for split in splits:
        split_entries = [e for e in entries if e.split == split]
        if not split_entries:
            warnings.warn(f"split {split} is empty; skipped")
            continue
        predictions: dict[str, list[float]] = {t: [] for t in model.config.tasks}
        truths: dict[str, list[float]] = {t: [] for t in model.config.tasks}
        for entry in split_entries:
            wav = load_waveform(entry.degraded_path)
            result = forward(model, extractor.extract(wav, entry.utt_id))
            for task in model.config.tasks:
                truth = score_value(entry, task)
                if truth is None:
                    raise ValueError(f"missing {task} truth for {entry.utt_id}")
                predictions[task].append(result.utterance_score[task])
                truths[task].append(truth)
        for task in model.config.tasks:
            pair = (np.asarray(predictions[task]), np.asarray(truths[task]))
            row = {"split": split, "task": task, "count": len(split_entries)}
            try:
                row["lcc"] = evalstats.lcc(pair)
                row["srcc"] = evalstats.srcc(pair)
            except evalstats.DegenerateStatistic:
                row["lcc"] = "degenerate"
                row["srcc"] = "degenerate"
            row["mse"] = evalstats.mse(pair)
            row["pairs"] = pair
            rows.append(row)
    return rows


def write_results_csv(rows: list[dict], path: str | Path, model_name: str) -> Path:
    """Results table: model, split, task, LCC, SRCC, MSE."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "split", "task", "lcc", "srcc", "mse", "count"])
        for row in rows:
            def fmt(v):
                return f"{v:.6f}" if isinstance(v, float) else str(v)
            writer.writerow(
                [model_name, row["split"], row["task"],
                 fmt(row["lcc"]), fmt(row["srcc"]), fmt(row["mse"]), row["count"]]
            )
    return path
