"""Multi-task speech assessment models.

The main architecture (CRNN_AT) runs a shared 2-D conv trunk over the
spectral and filterbank streams (channel blocks 16/32/64/128, three layers
per block, time stride {1,1,3}), mean-pools the frequency axis, joins the
linearly-reduced SSL stream, and feeds the time-concatenated sequence to a
BLSTM and a shared FC layer. Each metric then gets its own multiplicative
attention, a post-attention FC (whose output is the extractable latent
code), and a linear frame-score head; the utterance score is the global
average of the frame scores.

Baselines: CRNN (same, no attention), BLSTM (one 100-unit bidirectional
layer, FC 50 ELU, FC 1), and CNN (four conv blocks with 2-D global average
pooling, so its "frame" axis collapses to a single score).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .features.bundle import FeatureBundle, assemble_bundle
from .features.extract import RawStreams
from .features.sinc import FilterbankParams, SincFilterbank
from .features.spectral import SpectralFrames

ARCHS = ("BLSTM", "CNN", "CRNN", "CRNN_AT")
TASK_ORDER = ("pesq", "stoi", "sdi", "mos", "intel")


def ordered_tasks(tasks) -> tuple[str, ...]:
    unknown = set(tasks) - set(TASK_ORDER)
    if unknown:
        raise ValueError(f"unknown tasks {sorted(unknown)}; choose from {TASK_ORDER}")
    return tuple(t for t in TASK_ORDER if t in set(tasks))


@dataclass(frozen=True)
class AssessorConfig:
    arch: str = "CRNN_AT"
    tasks: tuple[str, ...] = ("pesq", "stoi", "sdi")
    streams: tuple[str, ...] = ("PS",)
    conv_channels: tuple[int, ...] = (16, 32, 64, 128)
    conv_layers: int = 12
    time_stride: int = 3  # applied by the last layer of each block
    blstm_units: int = 128
    fc_units: int = 128
    lfb_filters: int = 80
    ssl_dim: int = 8

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}; choose from {ARCHS}")
        if not self.tasks:
            raise ValueError("task set must be non-empty")
        object.__setattr__(self, "tasks", ordered_tasks(self.tasks))
        object.__setattr__(self, "streams", tuple(self.streams))
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        if self.conv_layers % len(self.conv_channels) != 0:
            raise ValueError("conv_layers must split evenly across channel blocks")
        if self.arch in ("BLSTM", "CNN") and (
            "LFB" in self.streams or "SSL" in self.streams
        ):
            raise ValueError(f"{self.arch} baseline consumes a single spectral stream")

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()

    def spectral_expected(self) -> bool:
        return "PS" in self.streams or "COMPLEX" in self.streams


@dataclass
class AssessmentResult:
    """Inference output: per-task utterance score, frame scores, and extras."""

    tasks: tuple[str, ...]
    utterance_score: dict[str, float]
    frame_scores: dict[str, np.ndarray]
    latent: dict[str, np.ndarray]
    attention: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        for task in self.tasks:
            frames = self.frame_scores[task]
            if self.utterance_score[task] != float(np.mean(frames)):
                raise ValueError(f"{task}: utterance score must equal the frame mean")
            if self.attention is not None:
                rows = self.attention[task].sum(axis=1)
                if np.max(np.abs(rows - 1.0)) > 1e-6:
                    raise ValueError(f"{task}: attention rows must sum to 1")


def multiplicative_attention(h, w):
    """scores = H W H^T, row-softmax weights, context = weights @ H.

    Accepts torch tensors (stays in the graph) or numpy arrays.
    """
    if isinstance(h, torch.Tensor):
        scores = h @ w @ h.T
        # float64 softmax keeps row sums within 1e-6 of 1 at any length
        weights = torch.softmax(scores.to(torch.float64), dim=1)
        return weights.to(h.dtype) @ h, weights
    scores = np.asarray(h) @ np.asarray(w) @ np.asarray(h).T
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    weights = e / e.sum(axis=1, keepdims=True)
    return weights @ h, weights


class _ConvTrunk(nn.Module):
    """Shared 2-D conv stack; frequency-size agnostic, emits per-frame vectors."""

    def __init__(self, channels: tuple[int, ...], layers: int, time_stride: int):
        super().__init__()
        per_block = layers // len(channels)
        convs = []
        c_in = 1
        for c_out in channels:
            for j in range(per_block):
                stride = (time_stride, 1) if j == per_block - 1 else (1, 1)
                convs.append(nn.Conv2d(c_in, c_out, kernel_size=3, stride=stride, padding=1))
                c_in = c_out
        self.convs = nn.ModuleList(convs)
        self.out_dim = c_in

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """(L, bins) -> (L', out_dim) with the time axis strided down."""
        x = frames.unsqueeze(0).unsqueeze(0)  # (1, 1, L, bins)
        for conv in self.convs:
            x = torch.relu(conv(x))
        return x.mean(dim=3)[0].T  # pool frequency -> (L', channels)


class _TaskBranch(nn.Module):
    def __init__(self, width: int, attention: bool):
        super().__init__()
        self.attn = nn.Parameter(torch.empty(width, width)) if attention else None
        if self.attn is not None:
            nn.init.uniform_(self.attn, -(width**-0.5), width**-0.5)
        self.latent_fc = nn.Linear(width, width)
        self.head = nn.Linear(width, 1)

    def forward(self, h: torch.Tensor):
        weights = None
        if self.attn is not None:
            h, weights = multiplicative_attention(h, self.attn)
        latent = torch.relu(self.latent_fc(h))
        frames = self.head(latent).squeeze(1)
        return frames, latent, weights


class AssessorModel(nn.Module):
    def __init__(self, config: AssessorConfig):
        super().__init__()
        self.config = config
        tasks = config.tasks
        if config.arch in ("CRNN", "CRNN_AT"):
            self.trunk = _ConvTrunk(config.conv_channels, config.conv_layers, config.time_stride)
            if "LFB" in config.streams:
                self.sinc = SincFilterbank(
                    FilterbankParams.mel_initialized(config.lfb_filters)
                )
            if "SSL" in config.streams:
                self.ssl_proj = nn.Linear(config.ssl_dim, self.trunk.out_dim)
            self.blstm = nn.LSTM(
                self.trunk.out_dim, config.blstm_units, bidirectional=True, batch_first=True
            )
            self.shared_fc = nn.Linear(2 * config.blstm_units, config.fc_units)
            self.branches = nn.ModuleDict(
                {
                    t: _TaskBranch(config.fc_units, attention=config.arch == "CRNN_AT")
                    for t in tasks
                }
            )
        elif config.arch == "BLSTM":
            self.blstm = nn.LSTM(257, 100, bidirectional=True, batch_first=True)
            self.heads = nn.ModuleDict(
                {
                    t: nn.Sequential(nn.Linear(200, 50), nn.ELU(), nn.Linear(50, 1))
                    for t in tasks
                }
            )
        else:  # CNN
            specs = [(15, 5), (25, 7), (40, 9), (50, 11)]
            convs = []
            c_in = 1
            for c_out, k in specs:
                convs.append(nn.Conv2d(c_in, c_out, kernel_size=k, padding=k // 2))
                c_in = c_out
            self.convs = nn.ModuleList(convs)
            self.heads = nn.ModuleDict(
                {
                    t: nn.Sequential(
                        nn.Linear(50, 50), nn.LeakyReLU(),
                        nn.Linear(50, 10), nn.LeakyReLU(),
                        nn.Linear(10, 1),
                    )
                    for t in tasks
                }
            )

    # ---- bundle preparation -------------------------------------------

    def _dtype(self):
        return next(self.parameters()).dtype

    def make_bundle(self, raw: RawStreams) -> FeatureBundle:
        """Run the learnable extractors on raw streams (stays differentiable)."""
        config = self.config
        spectral = raw.spectral if "PS" in config.streams or "COMPLEX" in config.streams else None
        lfb = None
        if "LFB" in config.streams:
            if raw.samples is None:
                raise ValueError("stream mismatch: model expects the waveform for LFB")
            lfb = self.sinc(torch.as_tensor(raw.samples, dtype=self._dtype()))
        ssl = None
        if "SSL" in config.streams:
            if raw.ssl is None:
                raise ValueError("stream mismatch: model expects SSL embeddings")
            ssl = self.ssl_proj(torch.as_tensor(np.asarray(raw.ssl), dtype=self._dtype()))
        if spectral is None and config.spectral_expected():
            raise ValueError("stream mismatch: model expects a spectral stream")
        return assemble_bundle(
            spectral=spectral, lfb=lfb, ssl=ssl,
            d_common=self.trunk.out_dim if hasattr(self, "trunk") else None,
        )

    # ---- forward passes -------------------------------------------------

    def _sequence_from_bundle(self, bundle: FeatureBundle) -> torch.Tensor:
        """Trunk the spectral/LFB streams, append SSL, concatenate over time."""
        dtype = self._dtype()
        pieces = []
        if bundle.spectral is not None:
            spec = torch.as_tensor(bundle.spectral.values, dtype=dtype)
            pieces.append(self.trunk(spec))
        if bundle.lfb is not None:
            lfb = bundle.lfb
            if not isinstance(lfb, torch.Tensor):
                lfb = torch.as_tensor(np.asarray(lfb), dtype=dtype)
            pieces.append(self.trunk(lfb))
        if bundle.ssl is not None:
            ssl = bundle.ssl
            if not isinstance(ssl, torch.Tensor):
                ssl = torch.as_tensor(np.asarray(ssl), dtype=dtype)
            if ssl.shape[1] != self.trunk.out_dim:
                raise ValueError(
                    f"stream mismatch: ssl width {ssl.shape[1]} != {self.trunk.out_dim}"
                )
            pieces.append(ssl)
        if not pieces:
            raise ValueError("stream mismatch: empty bundle")
        return torch.cat(pieces, dim=0)

    def forward(self, features):
        """RawStreams | FeatureBundle -> {task: (frames, latent, attention)}."""
        config = self.config
        if isinstance(features, RawStreams):
            bundle = self.make_bundle(features) if config.arch in ("CRNN", "CRNN_AT") else features
        else:
            bundle = features
        if config.arch in ("CRNN", "CRNN_AT"):
            seq = self._sequence_from_bundle(bundle)
            h, _ = self.blstm(seq.unsqueeze(0))
            h = torch.relu(self.shared_fc(h[0]))
            return {t: self.branches[t](h) for t in config.tasks}
        spectral = getattr(bundle, "spectral", None)
        if spectral is None:
            raise ValueError("stream mismatch: baseline needs spectral frames")
        spec = torch.as_tensor(spectral.values, dtype=self._dtype())
        if config.arch == "BLSTM":
            h, _ = self.blstm(spec.unsqueeze(0))
            return {
                t: (self.heads[t](h[0]).squeeze(1), h[0], None) for t in config.tasks
            }
        x = spec.unsqueeze(0).unsqueeze(0)
        for conv in self.convs:
            x = torch.relu(conv(x))
        pooled = x.mean(dim=(2, 3))  # 2-D global average pooling -> (1, 50)
        return {
            t: (self.heads[t](pooled).reshape(1), pooled, None) for t in config.tasks
        }

    # ---- misc -----------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def parameter_hash(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(tensor.detach().cpu().numpy()).tobytes())
        return digest.hexdigest()


def build_model(config: AssessorConfig, seed: int = 0) -> AssessorModel:
    """Deterministically initialized model; same config+seed, same parameters."""
    torch.manual_seed(seed)
    return AssessorModel(config)


def forward(model: AssessorModel, features) -> AssessmentResult:
    """Inference wrapper producing numpy results with the mean identity."""
    model.eval()
    with torch.no_grad():
        outputs = model(features)
    utterance, frames, latents, attention = {}, {}, {}, {}
    for task, (frame_scores, latent, weights) in outputs.items():
        f = frame_scores.detach().cpu().numpy().astype(np.float64)
        frames[task] = f
        utterance[task] = float(np.mean(f))
        latents[task] = latent.detach().cpu().numpy()
        if weights is not None:
            attention[task] = weights.detach().cpu().numpy()
    return AssessmentResult(
        tasks=model.config.tasks,
        utterance_score=utterance,
        frame_scores=frames,
        latent=latents,
        attention=attention or None,
    )


def extract_latent(model: AssessorModel, features, branch) -> np.ndarray:
    """Post-attention FC outputs, branches concatenated in canonical task order."""
    branch = ordered_tasks(branch)
    missing = set(branch) - set(model.config.tasks)
    if missing:
        raise ValueError(f"branch not trained: {sorted(missing)}")
    model.eval()
    with torch.no_grad():
        outputs = model(features)
    return np.concatenate(
        [outputs[t][1].detach().cpu().numpy() for t in branch], axis=1
    )


# ---- checkpoints ---------------------------------------------------------

def save_checkpoint(
    model: AssessorModel,
    path: str | Path,
    seed: int,
    epoch: int = 0,
    extra: dict | None = None,
) -> Path:
    """Parameter archive at <path> plus a JSON sidecar at <path>.json."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), path)
    meta = {
        "kind": "assessor",
        "config": model.config.to_dict(),
        "config_hash": model.config.hash(),
        "arch": model.config.arch,
        "tasks": list(model.config.tasks),
        "streams": list(model.config.streams),
        "epoch": epoch,
        "seed": seed,
        "parameter_count": model.parameter_count(),
    }
    if extra:
        meta.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_checkpoint(path: str | Path) -> tuple[AssessorModel, dict]:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    config_dict = dict(meta["config"])
    for key in ("tasks", "streams", "conv_channels"):
        config_dict[key] = tuple(config_dict[key])
    config = AssessorConfig(**config_dict)
    if config.hash() != meta["config_hash"]:
        raise ValueError(f"{path}: sidecar config hash does not match its config")
    model = AssessorModel(config)
    model.load_state_dict(torch.load(path, weights_only=True))
    model.eval()
    return model, meta
