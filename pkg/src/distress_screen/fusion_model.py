"""Dual-branch audio/text fusion classifier and its training loop.

Text: BiLSTM(768 -> 64 + 64) -> dropout -> dense(128 -> 64, ReLU)
Audio: LSTM(193 -> 64) -> dropout -> dense(64 -> 64, ReLU)
Head: mean of the two 64-dim branch outputs -> dense(64 -> 1) -> sigmoid

Each per-recording feature vector is fed as a length-1 sequence.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import neural_core as nc
from .errors import DataError, DimensionError
from .neural_core import DenseParams, LstmParams

log = logging.getLogger(__name__)

TEXT_DIM = 768
AUDIO_DIM = 193
HIDDEN = 64
FUSED_DIM = 64
DROPOUT = 0.3
TASKS = ("depression", "ptsd")

# Fixed serialization order: (layer name, attribute holding its params).
LAYERS = ("text_fwd", "text_bwd", "text_dense", "audio_lstm", "audio_dense", "head")


@dataclass
class DistressModel:
    text_fwd: LstmParams
    text_bwd: LstmParams
    text_dense: DenseParams
    audio_lstm: LstmParams
    audio_dense: DenseParams
    head: DenseParams
    task_tag: str = "depression"
    dropout: float = DROPOUT

    @property
    def text_dim(self) -> int:
        return self.text_fwd.input_dim

    @property
    def audio_dim(self) -> int:
        return self.audio_lstm.input_dim

    def parameters(self) -> dict:
        """Flat {"layer.W": array} view in serialization order (arrays are shared, not copied)."""
        out = {}
        for layer in LAYERS:
            for name, arr in getattr(self, layer).arrays().items():
                out[f"{layer}.{name}"] = arr
        return out

    @property
    def n_parameters(self) -> int:
        return sum(a.size for a in self.parameters().values())


@dataclass
class SampleRecord:
    id: str
    audio: np.ndarray
    text: np.ndarray
    label: int


@dataclass
class TrainingConfig:
    batch_size: int = 8
    epochs: int = 8
    validation_split: float = 0.2
    test_split: float = 0.2
    lr: float = 0.001
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        for name in ("validation_split", "test_split"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def lstm_param_count(n_in: int, hidden: int) -> int:
    return 4 * (n_in * hidden + hidden * hidden + hidden)


def dense_param_count(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out


def expected_param_count(text_dim=TEXT_DIM, audio_dim=AUDIO_DIM, hidden=HIDDEN, fused_dim=FUSED_DIM):
    return (
        2 * lstm_param_count(text_dim, hidden)
        + lstm_param_count(audio_dim, hidden)
        + dense_param_count(2 * hidden, fused_dim)
        + dense_param_count(hidden, fused_dim)
        + dense_param_count(fused_dim, 1)
    )


def build_model(
    seed: int = 0,
    task_tag: str = "depression",
    text_dim: int = TEXT_DIM,
    audio_dim: int = AUDIO_DIM,
    hidden: int = HIDDEN,
    fused_dim: int = FUSED_DIM,
    dropout: float = DROPOUT,
) -> DistressModel:
    rng = np.random.default_rng(seed)
    return DistressModel(
        text_fwd=LstmParams.init(text_dim, hidden, rng),
        text_bwd=LstmParams.init(text_dim, hidden, rng),
        text_dense=DenseParams.init(2 * hidden, fused_dim, rng),
        audio_lstm=LstmParams.init(audio_dim, hidden, rng),
        audio_dense=DenseParams.init(hidden, fused_dim, rng),
        head=DenseParams.init(fused_dim, 1, rng),
        task_tag=task_tag,
        dropout=dropout,
    )


def _as_sequence(x: np.ndarray, dim: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3 or x.shape[-1] != dim:
        raise DimensionError(f"{what} features must have width {dim}, got shape {x.shape}")
    return x


def forward(m: DistressModel, audio, text, training: bool = False, rng=None):
    """Batched forward pass on audio [B, 193] and text [B, 768].

    [B, T, d] sequences are accepted too. Returns (probabilities [B], cache).
    """
    text_seq = _as_sequence(text, m.text_dim, "text")
    audio_seq = _as_sequence(audio, m.audio_dim, "audio")
    if text_seq.shape[0] != audio_seq.shape[0]:
        raise DimensionError("audio and text batch sizes differ")
    if training and m.dropout > 0 and rng is None:
        raise ValueError("training mode needs an rng for dropout")

    h_text, text_caches = nc.bilstm_forward(text_seq, m.text_fwd, m.text_bwd)
    d_text, mask_text = nc.dropout_apply(h_text, m.dropout, training, rng)
    z_text = nc.dense_forward(d_text, m.text_dense)
    r_text = nc.relu(z_text)

    h_audio, audio_cache = nc.lstm_forward(audio_seq, m.audio_lstm)
    d_audio, mask_audio = nc.dropout_apply(h_audio, m.dropout, training, rng)
    z_audio = nc.dense_forward(d_audio, m.audio_dense)
    r_audio = nc.relu(z_audio)

    fused = 0.5 * (r_text + r_audio)
    logit = nc.dense_forward(fused, m.head)[:, 0]
    prob = nc.sigmoid(logit)

    cache = {
        "text_caches": text_caches, "mask_text": mask_text, "d_text": d_text, "z_text": z_text,
        "text_branch": r_text, "audio_cache": audio_cache, "mask_audio": mask_audio,
        "d_audio": d_audio, "z_audio": z_audio, "audio_branch": r_audio,
        "fused": fused, "logit": logit, "prob": prob,
    }
    return np.atleast_1d(prob), cache


def backward(m: DistressModel, grad_logit: np.ndarray, cache: dict) -> dict:
    """Gradients of sum(grad_logit * logit) for every parameter, keyed like parameters()."""
    g_logit = np.asarray(grad_logit, dtype=np.float64).reshape(-1, 1)
    g_fused, gW_head, gb_head = nc.dense_backward(g_logit, cache["fused"], m.head)

    g_r = 0.5 * g_fused
    g_z_text = g_r * (cache["z_text"] > 0)
    g_d_text, gW_td, gb_td = nc.dense_backward(g_z_text, cache["d_text"], m.text_dense)
    g_h_text = g_d_text if cache["mask_text"] is None else g_d_text * cache["mask_text"]
    g_tf, g_tb, _ = nc.bilstm_backward(g_h_text, cache["text_caches"], m.text_fwd, m.text_bwd)

    g_z_audio = g_r * (cache["z_audio"] > 0)
    g_d_audio, gW_ad, gb_ad = nc.dense_backward(g_z_audio, cache["d_audio"], m.audio_dense)
    g_h_audio = g_d_audio if cache["mask_audio"] is None else g_d_audio * cache["mask_audio"]
    g_al, _ = nc.lstm_backward(g_h_audio, cache["audio_cache"], m.audio_lstm)

    grads = {}
    for layer, g in (("text_fwd", g_tf), ("text_bwd", g_tb), ("audio_lstm", g_al)):
        for name, arr in g.arrays().items():
            grads[f"{layer}.{name}"] = arr
    grads.update({
        "text_dense.W": gW_td, "text_dense.b": gb_td,
        "audio_dense.W": gW_ad, "audio_dense.b": gb_ad,
        "head.W": gW_head, "head.b": gb_head,
    })
    return grads


def model_forward(m: DistressModel, audio, text, training: bool = False, rng=None, hook=None):
    """Probability for one sample (1-D inputs) or a batch.

    ``hook``, if given, is called with the forward cache, which exposes the
    branch outputs ("text_branch", "audio_branch") and the head input ("fused").
    """
    single = np.ndim(audio) == 1 and np.ndim(text) == 1
    if single:
        audio, text = np.asarray(audio)[None], np.asarray(text)[None]
    prob, cache = forward(m, audio, text, training, rng)
    if hook is not None:
        hook(cache)
    return float(prob[0]) if single else prob


def predict_score(m: DistressModel, audio, text):
    return model_forward(m, audio, text, training=False)


def predict_batch(m: DistressModel, audio, text, chunk: int = 256) -> np.ndarray:
    audio = np.asarray(audio, dtype=np.float64)
    text = np.asarray(text, dtype=np.float64)
    if len(audio) != len(text):
        raise DimensionError("audio and text batch sizes differ")
    out = [forward(m, audio[i : i + chunk], text[i : i + chunk])[0] for i in range(0, len(audio), chunk)]
    return np.concatenate(out) if out else np.zeros(0)


# -- data handling ---------------------------------------------------------


def stack_records(records):
    """(audio [N, 193], text [N, 768], labels [N]) arrays from SampleRecords."""
    if not records:
        return np.zeros((0, AUDIO_DIM)), np.zeros((0, TEXT_DIM)), np.zeros(0)
    audio = np.stack([np.asarray(r.audio, dtype=np.float64) for r in records])
    text = np.stack([np.asarray(r.text, dtype=np.float64) for r in records])
    labels = np.array([r.label for r in records], dtype=np.float64)
    return audio, text, labels


def split_dataset(records, cfg: TrainingConfig | None = None, seed: int | None = None):
    """Stratified shuffle split into (train, test).

    Falls back to an unstratified split (with a warning) when some class is
    too small to contribute to both sides.
    """
    cfg = cfg or TrainingConfig()
    seed = cfg.seed if seed is None else seed
    n = len(records)
    if n < 5:
        raise DataError(f"need at least 5 records to split, got {n}")
    labels = np.array([int(r.label) for r in records])
    for cls in (0, 1):
        if not np.any(labels == cls):
            raise DataError(f"class {cls} is absent from the dataset")

    rng = np.random.default_rng(seed)
    per_class = {cls: np.flatnonzero(labels == cls) for cls in (0, 1)}
    n_test = {cls: int(round(cfg.test_split * len(idx))) for cls, idx in per_class.items()}
    stratifiable = all(0 < n_test[c] < len(per_class[c]) for c in (0, 1))

    if stratifiable:
        test_idx, train_idx = [], []
        for cls in (0, 1):
            idx = rng.permutation(per_class[cls])
            test_idx.extend(idx[: n_test[cls]])
            train_idx.extend(idx[n_test[cls] :])
        train_idx = rng.permutation(train_idx)
        test_idx = rng.permutation(test_idx)
    else:
        warnings.warn("class too small to stratify; falling back to an unstratified split")
        idx = rng.permutation(n)
        k = max(1, int(round(cfg.test_split * n)))
        test_idx, train_idx = idx[:k], idx[k:]

    return [records[i] for i in train_idx], [records[i] for i in test_idx]


# -- training --------------------------------------------------------------


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)

    def rows(self):
        for k in range(len(self.train_loss)):
            yield k + 1, self.train_loss[k], self.val_loss[k], self.train_acc[k], self.val_acc[k]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
            for epoch, *vals in self.rows():
                w.writerow([epoch] + [format(v, ".9g") for v in vals])


def evaluate_loss(m: DistressModel, audio, text, labels, threshold: float = 0.5):
    """(mean BCE, accuracy) in inference mode."""
    if len(labels) == 0:
        return float("nan"), float("nan")
    prob = predict_batch(m, audio, text)
    loss, _ = nc.bce_loss(prob, labels)
    return float(np.mean(loss)), float(np.mean((prob > threshold) == (labels == 1)))


def train_model(m: DistressModel, train_records, cfg: TrainingConfig | None = None) -> History:
    """Mini-batch Adam on binary cross-entropy; updates ``m`` in place.

    The last ``validation_split`` fraction of ``train_records`` is held out
    for per-epoch validation metrics.
    """
    cfg = cfg or TrainingConfig()
    if not train_records:
        raise DataError("training set is empty")
    audio, text, labels = stack_records(train_records)
    n_fit = int(len(labels) * (1.0 - cfg.validation_split))
    if n_fit < 1:
        raise DataError("validation split leaves no training samples")
    fit = slice(0, n_fit)
    val = slice(n_fit, None)

    rng = np.random.default_rng(cfg.seed)
    state = nc.AdamState(lr=cfg.lr)
    params = m.parameters()
    history = History()

    for epoch in range(cfg.epochs):
        order = rng.permutation(n_fit)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n_fit, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            y = labels[fit][idx]
            prob, cache = forward(m, audio[fit][idx], text[fit][idx], training=True, rng=rng)
            loss, g_logit = nc.bce_loss(prob, y)
            grads = backward(m, g_logit / len(idx), cache)
            nc.adam_step(params, grads, state)
            loss_sum += float(np.sum(loss))
            correct += int(np.sum((prob > cfg.threshold) == (y == 1)))
        val_loss, val_acc = evaluate_loss(m, audio[val], text[val], labels[val], cfg.threshold)
        history.train_loss.append(loss_sum / n_fit)
        history.train_acc.append(correct / n_fit)
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)
        log.info(
            "epoch %d/%d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f",
            epoch + 1, cfg.epochs, history.train_loss[-1], history.train_acc[-1], val_loss, val_acc,
        )
    return history
