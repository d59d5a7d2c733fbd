"""Assessment-aware spectral-mapping speech enhancement.

A CNN maps noisy 257-bin log-power spectra to enhanced spectra: four conv
blocks (channels 16/32/64/128, three layers each, the last layer of each
block striding the frequency axis by 3), then an FC layer of 128 units and
a linear 257-bin output per frame. The quality-intelligibility-aware
variant concatenates latent codes from a frozen assessment model into the
input of a designated middle layer (tiled across the frequency axis as
extra channels, nearest-frame aligned in time). Training minimizes the
spectral MSE against the clean reference while the assessor stays frozen.

Waveform synthesis inverts the log-power (exp(LPS/2)) and runs
overlap-add ISTFT with the noisy phase.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import hashlib

import numpy as np
import torch
from torch import nn

from .assessor import AssessorModel, extract_latent, load_checkpoint, ordered_tasks
from .audio import Waveform, load_waveform
from .corpus import ManifestEntry
from .features.extract import RawStreams
from .features.spectral import (
    LPS,
    SpectralFrames,
    istft,
    log_power_spec,
    lps_to_magnitude,
    stft,
)

N_BINS = 257


@dataclass(frozen=True)
class EnhancerConfig:
    conv_channels: tuple[int, ...] = (16, 32, 64, 128)
    conv_layers: int = 12
    freq_stride: int = 3  # last layer of each block strides the frequency axis
    fc_units: int = 128
    injection_layer: int = 6  # latent enters the next layer's input
    latent_branch: tuple[str, ...] = ("pesq", "stoi")
    use_latent: bool = True
    latent_dim: int = 128  # per-branch width (assessor FC width)

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        if self.conv_layers % len(self.conv_channels) != 0:
            raise ValueError("conv_layers must split evenly across channel blocks")
        if not 1 <= self.injection_layer <= self.conv_layers - 1:
            raise ValueError("injection layer must sit strictly inside the conv stack")
        if self.use_latent:
            if not self.latent_branch:
                raise ValueError("use_latent requires a non-empty latent branch")
            object.__setattr__(self, "latent_branch", ordered_tasks(self.latent_branch))
        elif self.latent_branch:
            raise ValueError("latent branch given but use_latent is off")

    @property
    def latent_width(self) -> int:
        return self.latent_dim * len(self.latent_branch) if self.use_latent else 0

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class LatentCode:
    """Assessor latents, to be nearest-frame aligned to the enhancer's time axis."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("latent code must be a non-empty frames x dim matrix")
        if not np.all(np.isfinite(values)):
            raise ValueError("latent code contains non-finite values")
        object.__setattr__(self, "values", values)

    def aligned(self, n_frames: int) -> np.ndarray:
        """Nearest-frame interpolation onto a target frame count."""
        source = self.values.shape[0]
        if n_frames < 1:
            raise ValueError("latent/frame misalignment: no target frames")
        if source == 1:
            idx = np.zeros(n_frames, dtype=int)
        else:
            positions = np.arange(n_frames) * (source - 1) / max(n_frames - 1, 1)
            idx = np.round(positions).astype(int)
        return self.values[idx]


class EnhancerModel(nn.Module):
    def __init__(self, config: EnhancerConfig):
        super().__init__()
        self.config = config
        per_block = config.conv_layers // len(config.conv_channels)
        convs = []
        c_in = 1
        freq = N_BINS
        layer_index = 0
        self.injection_in_channels = None
        self.injection_freq = None
        for c_out in config.conv_channels:
            for j in range(per_block):
                extra = 0
                if layer_index == config.injection_layer:
                    extra = config.latent_width
                    self.injection_in_channels = c_in + extra
                    self.injection_freq = freq
                stride = (1, config.freq_stride) if j == per_block - 1 else (1, 1)
                convs.append(
                    nn.Conv2d(c_in + extra, c_out, kernel_size=3, stride=stride, padding=1)
                )
                if stride[1] != 1:
                    freq = (freq + stride[1] - 1) // stride[1]  # padded conv: ceil
                c_in = c_out
                layer_index += 1
        self.convs = nn.ModuleList(convs)
        self.final_freq = freq
        self.fc = nn.Linear(c_in * freq, config.fc_units)
        self.out = nn.Linear(config.fc_units, N_BINS)

    def forward(self, lps: torch.Tensor, latent: torch.Tensor | None = None) -> torch.Tensor:
        """(L, 257) noisy LPS [+ (L, latent_width) codes] -> (L, 257) enhanced LPS."""
        config = self.config
        if lps.ndim != 2 or lps.shape[1] != N_BINS:
            raise ValueError(f"enhancer consumes (frames, {N_BINS}) LPS input")
        if config.use_latent:
            if latent is None:
                raise ValueError("latent code required when use_latent is on")
            if latent.shape != (lps.shape[0], config.latent_width):
                raise ValueError(
                    f"latent/frame misalignment: got {tuple(latent.shape)}, "
                    f"need {(int(lps.shape[0]), config.latent_width)}"
                )
        elif latent is not None:
            raise ValueError("latent code passed to a latent-free enhancer")
        x = lps.unsqueeze(0).unsqueeze(0)  # (1, 1, L, bins)
        for i, conv in enumerate(self.convs):
            if i == config.injection_layer and config.use_latent:
                tiled = latent.T.unsqueeze(0).unsqueeze(3)  # (1, D, L, 1)
                tiled = tiled.expand(1, config.latent_width, latent.shape[0], x.shape[3])
                x = torch.cat([x, tiled.to(x.dtype)], dim=1)
            x = torch.relu(conv(x))
        frames = x[0].permute(1, 0, 2).reshape(x.shape[2], -1)  # (L, C*freq)
        return self.out(torch.relu(self.fc(frames)))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_enhancer(config: EnhancerConfig, seed: int = 0) -> EnhancerModel:
    torch.manual_seed(seed)
    return EnhancerModel(config)


def enhance_forward(
    se_model: EnhancerModel,
    noisy_lps: SpectralFrames,
    latent: LatentCode | None = None,
) -> SpectralFrames:
    """Spec-level forward: LPS frames in, enhanced LPS frames out."""
    if noisy_lps.kind != LPS:
        raise ValueError(f"enhancer consumes LPS features, got {noisy_lps.kind}")
    dtype = next(se_model.parameters()).dtype
    lps = torch.as_tensor(noisy_lps.values, dtype=dtype)
    latent_tensor = None
    if se_model.config.use_latent:
        if latent is None:
            raise ValueError("latent code required when use_latent is on")
        latent_tensor = torch.as_tensor(
            latent.aligned(noisy_lps.frame_count), dtype=dtype
        )
    se_model.eval()
    with torch.no_grad():
        out = se_model(lps, latent_tensor)
    return SpectralFrames(out.cpu().numpy().astype(np.float64), kind=LPS)


# ---- assessor latents for the enhancer -------------------------------------

def _assessor_latents(assessor: AssessorModel, noisy: Waveform, branch) -> LatentCode:
    from .features.spectral import power_spec, ri_features

    frames = stft(noisy)
    spectral = (
        power_spec(frames)
        if assessor.config.streams[0] == "PS"
        else ri_features(frames)
    )
    raw = RawStreams(spectral=spectral)
    return LatentCode(extract_latent(assessor, raw, branch))


def check_assessor_compat(assessor: AssessorModel, config: EnhancerConfig) -> None:
    if not config.use_latent:
        return
    non_spectral = set(assessor.config.streams) - {"PS", "COMPLEX"}
    if non_spectral or len(assessor.config.streams) != 1:
        raise ValueError(
            "checkpoint mismatch: the guiding assessor must be trained on the "
            f"spectral stream only, got {assessor.config.streams}"
        )
    missing = set(config.latent_branch) - set(assessor.config.tasks)
    if missing:
        raise ValueError(f"checkpoint mismatch: assessor lacks branches {sorted(missing)}")
    if assessor.config.fc_units != config.latent_dim:
        raise ValueError(
            f"checkpoint mismatch: assessor latent width {assessor.config.fc_units} "
            f"!= enhancer latent_dim {config.latent_dim}"
        )


@dataclass(frozen=True)
class SeTrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 1
    epochs: int = 50
    seed: int = 0
    grad_clip: float = 5.0


def train_se(
    se_model: EnhancerModel,
    frozen_assessor: AssessorModel | str | Path | None,
    entries: Sequence[ManifestEntry],
    config: SeTrainConfig,
    out_dir: str | Path | None = None,
) -> tuple[Path | None, list[dict]]:
    """Minimize enhanced-vs-clean LPS MSE; the assessor provably never moves.

    ``entries`` are degraded (noisy) manifest rows whose clean_path is the
    target. The assessor parameter hash is checked before and after; any
    drift aborts the run.
    """
    assessor = None
    if se_model.config.use_latent:
        if frozen_assessor is None:
            raise ValueError("latent-guided training needs a frozen assessor")
        if isinstance(frozen_assessor, (str, Path)):
            assessor, _ = load_checkpoint(frozen_assessor)
        else:
            assessor = frozen_assessor
        check_assessor_compat(assessor, se_model.config)
        assessor.eval()
        hash_before = assessor.parameter_hash()

    dtype = next(se_model.parameters()).dtype
    items = []
    for entry in entries:
        if entry.kind == "clean":
            continue
        noisy = load_waveform(entry.degraded_path)
        clean = load_waveform(entry.clean_path)
        noisy_lps = torch.as_tensor(log_power_spec(stft(noisy)).values, dtype=dtype)
        clean_lps = torch.as_tensor(log_power_spec(stft(clean)).values, dtype=dtype)
        latent = None
        if assessor is not None:
            codes = _assessor_latents(assessor, noisy, se_model.config.latent_branch)
            latent = torch.as_tensor(
                codes.aligned(noisy_lps.shape[0]), dtype=dtype
            )
        items.append((entry.utt_id, noisy_lps, clean_lps, latent))
    if not items:
        raise ValueError("no degraded utterances to train on")

    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    optimizer = torch.optim.Adam(se_model.parameters(), lr=config.learning_rate)
    history = []
    se_model.train()
    for epoch in range(1, config.epochs + 1):
        t0 = time.monotonic()
        order = rng.permutation(len(items))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            optimizer.zero_grad()
            batch = order[start : start + config.batch_size]
            loss = 0.0
            for i in batch:
                utt_id, noisy_lps, clean_lps, latent = items[i]
                out = se_model(noisy_lps, latent)
                loss = loss + torch.mean((out - clean_lps) ** 2)
            loss = loss / len(batch)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite SE loss at epoch {epoch}, utterance {items[batch[0]][0]}"
                )
            loss.backward()
            if config.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(se_model.parameters(), config.grad_clip)
            optimizer.step()
            epoch_loss += float(loss.detach()) * len(batch)
        history.append(
            {
                "epoch": epoch,
                "spectral_mse": epoch_loss / len(items),
                "wall_s": time.monotonic() - t0,
            }
        )
    se_model.eval()

    if assessor is not None and assessor.parameter_hash() != hash_before:
        raise RuntimeError("frozen assessor parameters changed during SE training")

    ckpt_path = None
    if out_dir is not None:
        ckpt_path = save_enhancer(
            se_model, Path(out_dir) / "enhancer.pt", seed=config.seed,
            epoch=config.epochs,
        )
        from .training import write_history_csv

        write_history_csv(history, Path(out_dir) / "se_history.csv")
    return ckpt_path, history


def enhance_utterance(
    se_model: EnhancerModel,
    assessor: AssessorModel | None,
    noisy: Waveform,
) -> Waveform:
    """Noisy waveform -> enhanced waveform (noisy phase, inverted log-power)."""
    if se_model.config.use_latent:
        if assessor is None:
            raise ValueError("checkpoint mismatch: latent-guided enhancer needs an assessor")
        check_assessor_compat(assessor, se_model.config)
    frames = stft(noisy)
    noisy_lps = log_power_spec(frames)
    latent = None
    if se_model.config.use_latent:
        latent = _assessor_latents(assessor, noisy, se_model.config.latent_branch)
    enhanced = enhance_forward(se_model, noisy_lps, latent)
    magnitude = lps_to_magnitude(enhanced.values)
    return istft(magnitude, np.angle(frames))


# ---- persistence ------------------------------------------------------------

def save_enhancer(
    model: EnhancerModel, path: str | Path, seed: int, epoch: int = 0
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), path)
    meta = {
        "kind": "enhancer",
        "config": model.config.to_dict(),
        "config_hash": model.config.hash(),
        "seed": seed,
        "epoch": epoch,
        "parameter_count": model.parameter_count(),
    }
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_enhancer(path: str | Path) -> tuple[EnhancerModel, dict]:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    config_dict = dict(meta["config"])
    for key in ("conv_channels", "latent_branch"):
        config_dict[key] = tuple(config_dict[key])
    config = EnhancerConfig(**config_dict)
    if config.hash() != meta["config_hash"]:
        raise ValueError(f"{path}: sidecar config hash does not match its config")
    model = EnhancerModel(config)
    model.load_state_dict(torch.load(path, weights_only=True))
    model.eval()
    return model, meta
