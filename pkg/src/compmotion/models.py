"""Video-level classifiers (Model A), the frame-level MLP (Model B) and their training loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .preprocess import FeatureSequence

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = "1"

LEARNING_RATES = (1e-3, 1e-4, 1e-5)
DROPOUTS = (0.2, 0.3)
BATCH_SIZES = (16, 32)
HIDDEN_UNITS = (32, 48, 64, 96, 128, 192, 256)

RECURRENT = "RecurrentBaseline"
ATTENTION = "TemporalAttention"
VARIANTS = (RECURRENT, ATTENTION)

MASK_BIAS = -1e9


class DimensionError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    dropout: float = 0.2
    batch_size: int = 16
    max_epochs: int = 30
    early_stop_patience: int = 5
    seed: int = 0
    val_fraction: float = 0.15
    allow_override: bool = False

    def __post_init__(self):
        if not self.allow_override:
            if self.learning_rate not in LEARNING_RATES:
                raise ValueError(f"learning_rate {self.learning_rate} not in grid {LEARNING_RATES}; set allow_override")
            if self.dropout not in DROPOUTS:
                raise ValueError(f"dropout {self.dropout} not in grid {DROPOUTS}; set allow_override")
            if self.batch_size not in BATCH_SIZES:
                raise ValueError(f"batch_size {self.batch_size} not in grid {BATCH_SIZES}; set allow_override")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def replace(self, **kw) -> "TrainConfig":
        d = self.to_dict()
        d.update(kw)
        return TrainConfig(**d)


def cosine_lr(base_lr: float, epoch: int, max_epochs: int) -> float:
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / max_epochs))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


def positional_encoding(T: int, d: int) -> np.ndarray:
    pos = np.arange(T)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def pad_batch(features: Sequence[np.ndarray], max_len: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad ``(T_i, D)`` arrays to ``(B, max_len, D)`` plus a 0/1 validity mask."""
    lengths = [f.shape[0] for f in features]
    T = max(lengths) if max_len is None else max_len
    if T < max(lengths):
        raise DimensionError(f"max_len {T} shorter than longest sequence {max(lengths)}")
    D = features[0].shape[1]
    x = np.zeros((len(features), T, D))
    mask = np.zeros((len(features), T))
    for b, f in enumerate(features):
        x[b, : f.shape[0]] = f
        mask[b, : f.shape[0]] = 1.0
    return x, mask


def _as_array(f) -> np.ndarray:
    return f.features if isinstance(f, FeatureSequence) else np.asarray(f, dtype=np.float64)


class _Module:
    params: dict[str, Tensor]

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise DimensionError(f"parameter {k}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def _param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        return t


class VideoClassifier(_Module):
    """Many-to-one sequence classifier producing one compensation probability per trial.

    ``RecurrentBaseline`` is a single-layer gated recurrent (LSTM) cell whose
    state stops updating past each sequence's true length.
    ``TemporalAttention`` embeds frames, adds sinusoidal positions, applies one
    masked self-attention head with a residual ReLU, and mean-pools valid frames.
    """

    kind = "video"

    def __init__(self, variant: str, input_dim: int, max_len: int, hidden_size: int | None = None,
                 dropout: float = 0.2, input_scale: float = 10.0, seed: int = 0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.variant = variant
        self.input_dim = int(input_dim)
        self.max_len = int(max_len)
        self.hidden_size = int(hidden_size or (192 if variant == RECURRENT else 32))
        self.dropout = float(dropout)
        self.input_scale = float(input_scale)
        self.params = {}
        rng = np.random.default_rng(seed)
        D, H = self.input_dim, self.hidden_size
        if variant == RECURRENT:
            self._param("W_x", glorot(rng, D, 4 * H))
            self._param("W_h", glorot(rng, H, 4 * H))
            self._param("b", np.zeros(4 * H))
        else:
            self._param("W_emb", glorot(rng, D, H))
            self._param("b_emb", np.zeros(H))
            self._param("W_q", glorot(rng, H, H))
            self._param("W_k", glorot(rng, H, H))
            self._param("W_v", glorot(rng, H, H))
        self._param("W_out", glorot(rng, H, 1))
        self._param("b_out", np.zeros(1))

    def architecture(self) -> dict:
        return {
            "variant": self.variant,
            "input_dim": self.input_dim,
            "max_len": self.max_len,
            "hidden_size": self.hidden_size,
            "dropout": self.dropout,
            "input_scale": self.input_scale,
        }

    def logits(self, x, mask: np.ndarray, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Logits of shape ``(B,)`` for a padded batch ``x`` of shape ``(B, T, D)``."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise DimensionError(f"expected (B, T, {self.input_dim}) input, got {x.shape}")
        mask = np.asarray(mask, dtype=np.float64)
        if self.input_scale != 1.0:
            x = x * self.input_scale
        if self.variant == RECURRENT:
            pooled = self._recurrent(x, mask)
        else:
            pooled = self._attention(x, mask, training, rng)
        pooled = ad.dropout(pooled, self.dropout, rng, training)
        out = pooled @ self.params["W_out"] + self.params["b_out"]
        return out.reshape(x.shape[0])

    def _attention(self, x: Tensor, mask: np.ndarray, training: bool, rng) -> Tensor:
        p = self.params
        B, T, _ = x.shape
        H = self.hidden_size
        e = x @ p["W_emb"] + p["b_emb"] + positional_encoding(T, H)
        e = ad.dropout(e, self.dropout, rng, training)
        q = e @ p["W_q"]
        k = e @ p["W_k"]
        v = e @ p["W_v"]
        scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(H)) + ((1.0 - mask) * MASK_BIAS)[:, None, :]
        attn = ad.softmax(scores, axis=-1)
        h = ad.relu(attn @ v + e)
        m = mask[:, :, None]
        return (h * m).sum(axis=1) / m.sum(axis=1)

    def _recurrent(self, x: Tensor, mask: np.ndarray) -> Tensor:
        p = self.params
        B, T, _ = x.shape
        H = self.hidden_size
        xw = x @ p["W_x"] + p["b"]
        h = Tensor(np.zeros((B, H)))
        c = Tensor(np.zeros((B, H)))
        for t in range(T):
            m = mask[:, t:t + 1]
            if not m.any():
                break
            g = xw[:, t] + h @ p["W_h"]
            i_gate = ad.sigmoid(g[:, :H])
            f_gate = ad.sigmoid(g[:, H:2 * H])
            o_gate = ad.sigmoid(g[:, 2 * H:3 * H])
            cand = ad.tanh(g[:, 3 * H:])
            c_new = f_gate * c + i_gate * cand
            h_new = o_gate * ad.tanh(c_new)
            if m.all():
                c, h = c_new, h_new
            else:
                c = c_new * m + c * (1.0 - m)
                h = h_new * m + h * (1.0 - m)
        return h

    def forward_items(self, data, idx, training=False, rng=None) -> Tensor:
        x, mask = pad_batch([_as_array(data[i]) for i in idx])
        return self.logits(x, mask, training, rng)


class FrameClassifier(_Module):
    """MLP over one flattened frame: ReLU hidden layers, sigmoid output."""

    kind = "frame"

    def __init__(self, input_dim: int, hidden: Sequence[int] = (64,), dropout: float = 0.2,
                 input_scale: float = 10.0, seed: int = 0, allow_override: bool = False):
        hidden = tuple(int(h) for h in hidden)
        if not 1 <= len(hidden) <= 2:
            raise ValueError("frame classifier takes one or two hidden layers")
        if not allow_override and any(h not in HIDDEN_UNITS for h in hidden):
            raise ValueError(f"hidden units must come from {HIDDEN_UNITS}; set allow_override")
        self.input_dim = int(input_dim)
        self.hidden = hidden
        self.dropout = float(dropout)
        self.input_scale = float(input_scale)
        self.params = {}
        rng = np.random.default_rng(seed)
        sizes = (self.input_dim, *hidden)
        for k in range(len(hidden)):
            self._param(f"W{k}", glorot(rng, sizes[k], sizes[k + 1]))
            self._param(f"b{k}", np.zeros(sizes[k + 1]))
        self._param("W_out", glorot(rng, sizes[-1], 1))
        self._param("b_out", np.zeros(1))

    def architecture(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "dropout": self.dropout,
            "input_scale": self.input_scale,
        }

    def logits(self, x, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"expected (N, {self.input_dim}) input, got {x.shape}")
        h = x * self.input_scale if self.input_scale != 1.0 else x
        for k in range(len(self.hidden)):
            h = ad.relu(h @ self.params[f"W{k}"] + self.params[f"b{k}"])
            h = ad.dropout(h, self.dropout, rng, training)
        out = h @ self.params["W_out"] + self.params["b_out"]
        return out.reshape(x.shape[0])

    def forward_items(self, data, idx, training=False, rng=None) -> Tensor:
        return self.logits(data[idx], training, rng)

    def predict_proba(self, frames: np.ndarray, batch: int = 4096) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        out = []
        with ad.no_grad():
            for lo in range(0, frames.shape[0], batch):
                out.append(ad.sigmoid(self.logits(frames[lo:lo + batch])).data)
        return np.concatenate(out) if out else np.zeros(0)


# -- inference ----------------------------------------------------------------

def forward_video(model: VideoClassifier, features) -> float:
    """Probability for one sequence; evaluated over its true length only."""
    f = _as_array(features)
    if f.ndim != 2 or f.shape[1] != model.input_dim:
        raise DimensionError(f"feature dim {f.shape} does not match model input_dim {model.input_dim}")
    with ad.no_grad():
        z = model.logits(f[None], np.ones((1, f.shape[0])))
        return float(ad.sigmoid(z).data[0])


def predict_videos(model: VideoClassifier, features: Sequence, batch: int = 32) -> np.ndarray:
    probs = []
    with ad.no_grad():
        for lo in range(0, len(features), batch):
            x, mask = pad_batch([_as_array(f) for f in features[lo:lo + batch]])
            probs.append(ad.sigmoid(model.logits(x, mask)).data)
    return np.concatenate(probs) if probs else np.zeros(0)


def forward_frame(model: FrameClassifier, frame) -> float:
    v = np.asarray(frame, dtype=np.float64)
    if v.shape != (model.input_dim,):
        raise DimensionError(f"frame of shape {v.shape} does not match model input_dim {model.input_dim}")
    with ad.no_grad():
        return float(ad.sigmoid(model.logits(v[None])).data[0])


def predict_video_label(model: VideoClassifier, features, decision_threshold: float = 0.5) -> int:
    return label_from_probability(forward_video(model, features), decision_threshold)


def label_from_probability(p: float, decision_threshold: float = 0.5) -> int:
    # ties resolve to 0
    return int(p > decision_threshold)


# -- training -----------------------------------------------------------------

class Adam:
    def __init__(self, params: dict[str, Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0
    stopped_early: bool = False
    n_train: int = 0
    n_val: int = 0
    parameters: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("parameters")
        return d


def stratified_split(labels: np.ndarray, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Return (train_idx, val_idx), holding out ``round(fraction * n_c)`` of each class."""
    labels = np.asarray(labels)
    val = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_val = int(round(fraction * idx.size))
        if n_val >= idx.size:
            n_val = idx.size - 1
        val.append(idx[:n_val])
    val_idx = np.sort(np.concatenate(val)) if val else np.zeros(0, dtype=int)
    train_idx = np.setdiff1d(np.arange(labels.size), val_idx)
    return train_idx, val_idx


def _eval_loss(model, data, labels, idx, batch: int) -> float:
    if idx.size == 0:
        return float("nan")
    total = 0.0
    with ad.no_grad():
        for lo in range(0, idx.size, batch):
            b = idx[lo:lo + batch]
            z = model.forward_items(data, b)
            total += ad.bce_with_logits(z, labels[b]).item() * b.size
    return total / idx.size


def train(model, data, labels, config: TrainConfig) -> TrainReport:
    """Fit ``model`` with Adam, per-epoch cosine decay, BCE loss and early stopping.

    A stratified ``config.val_fraction`` of the items is held out; the
    parameters of the epoch with the lowest validation loss are restored.
    ``data`` is a sequence of ``(T, D)`` feature arrays for a
    :class:`VideoClassifier`, or an ``(N, D)`` array for a :class:`FrameClassifier`.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n = len(data)
    if n == 0:
        raise TrainingError("empty training data")
    if labels.shape != (n,):
        raise TrainingError(f"{n} items but labels of shape {labels.shape}")
    if isinstance(model, FrameClassifier):
        data = np.asarray(data, dtype=np.float64)
    else:
        data = [_as_array(d) for d in data]
    rng = np.random.default_rng(config.seed)
    train_idx, val_idx = stratified_split(labels, config.val_fraction, rng)
    opt = Adam(model.params)
    report = TrainReport(n_train=int(train_idx.size), n_val=int(val_idx.size))
    best = math.inf
    best_state = model.state_dict()
    wait = 0
    eval_batch = max(config.batch_size, 256 if isinstance(model, FrameClassifier) else 32)
    for epoch in range(config.max_epochs):
        lr = cosine_lr(config.learning_rate, epoch, config.max_epochs)
        order = train_idx[rng.permutation(train_idx.size)]
        running = 0.0
        for lo in range(0, order.size, config.batch_size):
            b = order[lo:lo + config.batch_size]
            opt.zero_grad()
            loss = ad.bce_with_logits(model.forward_items(data, b, training=True, rng=rng), labels[b])
            if not math.isfinite(loss.item()):
                raise TrainingDiverged(epoch, loss.item())
            running += loss.item() * b.size
            ad.backward(loss)
            opt.step(lr)
        # mean training-mode minibatch loss over the epoch
        tr = running / order.size
        va = _eval_loss(model, data, labels, val_idx, eval_batch) if val_idx.size else tr
        if not (math.isfinite(tr) and math.isfinite(va)):
            raise TrainingDiverged(epoch, tr if not math.isfinite(tr) else va)
        report.train_loss.append(tr)
        report.val_loss.append(va)
        report.learning_rates.append(lr)
        report.epochs_run = epoch + 1
        log.debug("epoch %d lr=%.3g train=%.5f val=%.5f", epoch, lr, tr, va)
        if va < best:
            best = va
            best_state = model.state_dict()
            report.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait > config.early_stop_patience:
                report.stopped_early = True
                break
    model.load_state_dict(best_state)
    report.parameters = best_state
    return report


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(model, path: str | Path, config: TrainConfig | None = None) -> None:
    """JSON container: schema_version, kind, architecture, config echo, named tensors.

    Values are written as shortest round-trip decimals, so reloading is exact.
    """
    doc = {
        "schema_version": CHECKPOINT_SCHEMA,
        "kind": model.kind,
        "architecture": model.architecture(),
        "config": config.to_dict() if config is not None else None,
        "tensors": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in model.state_dict().items()},
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {doc.get('schema_version')!r}")
    arch = doc["architecture"]
    if doc["kind"] == "video":
        model = VideoClassifier(**arch)
    elif doc["kind"] == "frame":
        model = FrameClassifier(**arch, allow_override=True)
    else:
        raise ValueError(f"unknown checkpoint kind {doc['kind']!r}")
    state = {k: np.array(t["data"], dtype=np.float64).reshape(t["shape"]) for k, t in doc["tensors"].items()}
    model.load_state_dict(state)
    return model
