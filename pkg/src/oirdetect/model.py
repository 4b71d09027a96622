"""Multimodal fusion classifier: per-modality projections, multihead
attention over modality tokens, and a sigmoid head, trained with AdamW,
linear warmup/decay, and early stopping on validation macro F1.

Inputs are "bundles": dicts mapping modality name to either a dense
embedding matrix (text_emb / audio_emb) or a (values, present) pair of
handcrafted features (ling / pros).  Handcrafted features are z-scored by
training statistics, constant features dropped, and presence masks
appended as extra inputs.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .evaluation import compute_metrics

MODALITY_ORDER = ("text_emb", "audio_emb", "ling", "pros")
HANDCRAFTED = ("ling", "pros")
CHECKPOINT_MAGIC = b"OIRM"


class ModelError(Exception):
    pass


class MissingModality(ModelError):
    pass


class DimMismatch(ModelError):
    pass


class TooFewSamples(ModelError):
    pass


@dataclass
class Standardizer:
    """Train-split z-scoring with imputation and constant-feature drop."""
    mean: np.ndarray = field(default=None)
    std: np.ndarray = field(default=None)
    kept: np.ndarray = field(default=None)  # indices of non-constant columns

    def fit(self, values: np.ndarray, present: np.ndarray) -> "Standardizer":
        filled = values.copy()
        mean = np.zeros(values.shape[1])
        for j in range(values.shape[1]):
            col = values[present[:, j], j]
            mean[j] = col.mean() if len(col) else 0.0
            filled[~present[:, j], j] = mean[j]
        full_mean = filled.mean(axis=0)
        std = filled.std(axis=0)
        self.kept = np.flatnonzero(std > 0)
        self.mean = full_mean
        self.std = np.where(std > 0, std, 1.0)
        return self

    def transform(self, values: np.ndarray, present: np.ndarray) -> np.ndarray:
        filled = values.copy()
        for j in range(values.shape[1]):
            filled[~present[:, j], j] = self.mean[j]
        z = (filled - self.mean) / self.std
        return np.concatenate([z[:, self.kept],
                               present[:, self.kept].astype(float)], axis=1)

    def state(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "kept": self.kept.tolist()}

    @classmethod
    def from_state(cls, obj: dict) -> "Standardizer":
        s = cls()
        s.mean = np.asarray(obj["mean"])
        s.std = np.asarray(obj["std"])
        s.kept = np.asarray(obj["kept"], dtype=int)
        return s


class FusionNet(nn.Module):
    def __init__(self, input_dims: dict[str, int], d_shared: int,
                 n_heads: int, dropout: float, attention: str = "self",
                 concat_text: bool = True):
        super().__init__()
        if d_shared % n_heads:
            raise ModelError("d_shared must be divisible by n_heads")
        if attention not in ("self", "cross"):
            raise ModelError(f"unknown attention form {attention!r}")
        if attention == "cross" and "text_emb" not in input_dims:
            raise ModelError("cross attention needs the text modality")
        self.modalities = tuple(m for m in MODALITY_ORDER if m in input_dims)
        if not self.modalities:
            raise ModelError("no enabled modality")
        self.input_dims = dict(input_dims)
        self.attention = attention
        self.proj = nn.ModuleDict(
            {m: nn.Linear(input_dims[m], d_shared) for m in self.modalities})
        self.attn = nn.MultiheadAttention(d_shared, n_heads, dropout=dropout,
                                          batch_first=True)
        self.ln1 = nn.LayerNorm(d_shared)
        self.ln2 = nn.LayerNorm(d_shared)
        self.ffn = nn.Sequential(nn.Linear(d_shared, 2 * d_shared), nn.GELU(),
                                 nn.Linear(2 * d_shared, d_shared))
        self.dropout = nn.Dropout(dropout)
        self.concat_text = concat_text and "text_emb" in self.modalities
        head_in = d_shared + (input_dims.get("text_emb", 0)
                              if self.concat_text else 0)
        self.head = nn.Sequential(nn.Linear(head_in, d_shared), nn.Tanh(),
                                  nn.Dropout(dropout), nn.Linear(d_shared, 1))

    def forward(self, inputs: dict[str, torch.Tensor]) -> torch.Tensor:
        for m in self.modalities:
            if m not in inputs:
                raise MissingModality(m)
            if inputs[m].shape[1] != self.input_dims[m]:
                raise DimMismatch(
                    f"{m}: {inputs[m].shape[1]} != {self.input_dims[m]}")
        tokens = torch.stack(
            [torch.tanh(self.proj[m](inputs[m])) for m in self.modalities],
            dim=1)
        if self.attention == "self":
            attn_out, _ = self.attn(tokens, tokens, tokens, need_weights=False)
            x = self.ln1(tokens + self.dropout(attn_out))
            x = self.ln2(x + self.dropout(self.ffn(x)))
            fused = x.mean(dim=1)
        else:
            q = tokens[:, self.modalities.index("text_emb"):
                       self.modalities.index("text_emb") + 1]
            attn_out, _ = self.attn(q, tokens, tokens, need_weights=False)
            x = self.ln1(q + self.dropout(attn_out))
            x = self.ln2(x + self.dropout(self.ffn(x)))
            fused = x[:, 0]
        if self.concat_text:
            fused = torch.cat([inputs["text_emb"], fused], dim=1)
        return self.head(fused).squeeze(-1)


class FusionClassifier:
    """Estimator wrapper with a scikit-learn-style surface
    (fit / predict / predict_proba / get_params / set_params)."""

    def __init__(self, modalities=("text_emb", "audio_emb", "ling", "pros"),
                 d_shared=256, n_heads=4, dropout=0.1, lr=None,
                 weight_decay=0.01, warmup_fraction=0.1, max_epochs=20,
                 patience=3, batch_size=16, seed=0, attention="self",
                 concat_text=True, dtype="float32"):
        self.modalities = tuple(modalities)
        self.d_shared = d_shared
        self.n_heads = n_heads
        self.dropout = dropout
        self.lr = lr
        self.weight_decay = weight_decay
        self.warmup_fraction = warmup_fraction
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.seed = seed
        self.attention = attention
        self.concat_text = concat_text
        self.dtype = dtype
        if patience < 1:
            raise ModelError("patience must be >= 1")
        for m in self.modalities:
            if m not in MODALITY_ORDER:
                raise ModelError(f"unknown modality {m!r}")

    # -- sklearn-style parameter plumbing --------------------------------

    _PARAM_NAMES = ("modalities", "d_shared", "n_heads", "dropout", "lr",
                    "weight_decay", "warmup_fraction", "max_epochs",
                    "patience", "batch_size", "seed", "attention",
                    "concat_text", "dtype")

    def get_params(self, deep: bool = True) -> dict:
        return {k: getattr(self, k) for k in self._PARAM_NAMES}

    def set_params(self, **params) -> "FusionClassifier":
        for k, v in params.items():
            if k not in self._PARAM_NAMES:
                raise ValueError(f"unknown parameter {k}")
            setattr(self, k, v)
        return self

    # -- data preparation ------------------------------------------------

    @property
    def _effective_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        has_emb = any(m in self.modalities for m in ("text_emb", "audio_emb"))
        return 2e-5 if has_emb else 1e-3

    def _torch_dtype(self):
        return torch.float64 if self.dtype == "float64" else torch.float32

    def _prepare(self, bundle: dict, fit: bool = False) -> dict[str, torch.Tensor]:
        out = {}
        for m in self.modalities:
            if m not in bundle:
                raise MissingModality(m)
            if m in HANDCRAFTED:
                values, present = bundle[m]
                if fit:
                    self.standardizers_[m] = Standardizer().fit(values, present)
                arr = self.standardizers_[m].transform(values, present)
            else:
                arr = np.asarray(bundle[m], dtype=float)
            out[m] = torch.as_tensor(arr, dtype=self._torch_dtype())
        return out

    # -- training --------------------------------------------------------

    def fit(self, bundle, y, bundle_val=None, y_val=None) -> "FusionClassifier":
        torch.set_num_threads(1)  # keeps training bit-reproducible
        torch.manual_seed(self.seed)
        self.standardizers_: dict[str, Standardizer] = {}
        inputs = self._prepare(bundle, fit=True)
        y_t = torch.as_tensor(np.asarray(y, dtype=float),
                              dtype=self._torch_dtype())
        n = len(y_t)
        input_dims = {m: int(t.shape[1]) for m, t in inputs.items()}
        self.net_ = FusionNet(input_dims, self.d_shared, self.n_heads,
                              self.dropout, self.attention, self.concat_text)
        self.net_.to(self._torch_dtype())
        opt = torch.optim.AdamW(self.net_.parameters(),
                                lr=self._effective_lr,
                                weight_decay=self.weight_decay)
        steps_per_epoch = max(1, (n + self.batch_size - 1) // self.batch_size)
        total_steps = self.max_epochs * steps_per_epoch
        warmup = max(1, int(self.warmup_fraction * total_steps))

        def lr_lambda(step):
            if step < warmup:
                return (step + 1) / warmup
            return max(0.0, (total_steps - step) / (total_steps - warmup))

        sched = torch.optim.lr_scheduler.LambdaLR(opt, lr_lambda)
        loss_fn = nn.BCEWithLogitsLoss()
        rng = np.random.default_rng(self.seed)
        has_val = bundle_val is not None and y_val is not None
        if has_val:
            val_inputs = self._prepare(bundle_val)
            val_y = np.asarray(y_val, dtype=int)
        best_f1, best_state, best_epoch = -1.0, None, -1
        since_best = 0
        self.history_: list[dict] = []
        for epoch in range(self.max_epochs):
            self.net_.train()
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, self.batch_size):
                idx = torch.as_tensor(order[start:start + self.batch_size])
                batch = {m: t[idx] for m, t in inputs.items()}
                logit = self.net_(batch)
                loss = loss_fn(logit, y_t[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                sched.step()
                losses.append(float(loss.detach()))
            record = {"epoch": epoch, "train_loss": float(np.mean(losses))}
            if has_val:
                val_pred = (self._forward_eval(val_inputs) >= 0.5).astype(int)
                p, r, f1 = compute_metrics(val_pred, val_y)
                record.update(val_precision=p, val_recall=r, val_f1=f1)
                if f1 > best_f1:
                    best_f1, best_epoch = f1, epoch
                    best_state = {k: v.detach().clone() for k, v in
                                  self.net_.state_dict().items()}
                    since_best = 0
                else:
                    since_best += 1
            self.history_.append(record)
            if has_val and since_best >= self.patience:
                break
        if has_val and best_state is not None:
            self.net_.load_state_dict(best_state)
            self.best_epoch_ = best_epoch
        else:
            self.best_epoch_ = self.max_epochs - 1
        self.val_threshold_ = 0.5
        if has_val:
            probs = self._forward_eval(val_inputs)
            best_t, best_tf1 = 0.5, -1.0
            for t in np.arange(0.05, 0.96, 0.05):
                _, _, f1 = compute_metrics((probs >= t).astype(int), val_y)
                if f1 > best_tf1:
                    best_t, best_tf1 = float(t), f1
            self.val_threshold_ = best_t
        return self

    def _forward_eval(self, inputs: dict[str, torch.Tensor]) -> np.ndarray:
        self.net_.eval()
        with torch.no_grad():
            logit = self.net_(inputs)
        return torch.sigmoid(logit).cpu().numpy()

    def predict_proba(self, bundle) -> np.ndarray:
        return self._forward_eval(self._prepare(bundle))

    def predict(self, bundle, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(bundle) >= threshold).astype(int)

    # -- checkpointing ---------------------------------------------------

    def save(self, path) -> None:
        manifest = {
            "params": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in self.get_params().items()},
            "standardizers": {m: s.state()
                              for m, s in self.standardizers_.items()},
            "input_dims": self.net_.input_dims,
        }
        blob = io.BytesIO()
        blob.write(CHECKPOINT_MAGIC)
        meta = json.dumps(manifest).encode("utf-8")
        blob.write(struct.pack("<HI", 1, len(meta)))
        blob.write(meta)
        state = self.net_.state_dict()
        blob.write(struct.pack("<I", len(state)))
        for key in state:
            raw = key.encode("utf-8")
            tensor = state[key].cpu().numpy().astype("<f4")
            blob.write(struct.pack("<H", len(raw)) + raw)
            blob.write(struct.pack("<B", tensor.ndim))
            blob.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            blob.write(tensor.tobytes())
        with open(path, "wb") as fh:
            fh.write(blob.getvalue())

    @classmethod
    def load(cls, path) -> "FusionClassifier":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != CHECKPOINT_MAGIC:
            raise ModelError(f"bad checkpoint magic {raw[:4]!r}")
        version, meta_len = struct.unpack_from("<HI", raw, 4)
        if version != 1:
            raise ModelError(f"unsupported checkpoint version {version}")
        off = 10
        manifest = json.loads(raw[off:off + meta_len].decode("utf-8"))
        off += meta_len
        params = manifest["params"]
        params["modalities"] = tuple(params["modalities"])
        clf = cls(**params)
        clf.standardizers_ = {m: Standardizer.from_state(s)
                              for m, s in manifest["standardizers"].items()}
        input_dims = {m: int(d) for m, d in manifest["input_dims"].items()}
        clf.net_ = FusionNet(input_dims, clf.d_shared, clf.n_heads,
                             clf.dropout, clf.attention, clf.concat_text)
        (n_tensors,) = struct.unpack_from("<I", raw, off)
        off += 4
        state = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(raw, dtype="<f4", count=count,
                                offset=off).reshape(shape)
            off += 4 * count
            state[name] = torch.as_tensor(arr.copy())
        clf.net_.load_state_dict(state)
        clf.net_.to(clf._torch_dtype())
        clf.history_ = []
        return clf


def stratified_group_folds(y, groups, k: int, seed: int) -> list[np.ndarray]:
    """Fold assignment (array of fold index per sample), stratified by
    label and atomic per group."""
    y = np.asarray(y, dtype=int)
    groups = np.asarray(groups)
    unique_groups: dict = {}
    for i, g in enumerate(groups):
        unique_groups.setdefault(g, []).append(i)
    for cls in (0, 1):
        n_cls = sum(1 for g, idx in unique_groups.items() if y[idx[0]] == cls)
        if n_cls < k:
            raise TooFewSamples(f"class {cls}: {n_cls} groups < {k} folds")
    rng = np.random.default_rng(seed)
    fold = np.full(len(y), -1, dtype=int)
    for cls in (0, 1):
        keys = sorted(g for g, idx in unique_groups.items()
                      if y[idx[0]] == cls)
        order = rng.permutation(len(keys))
        for rank, gi in enumerate(order):
            for i in unique_groups[keys[gi]]:
                fold[i] = rank % k
    return fold


def cross_validate(make_classifier, bundle, y, groups, k: int = 10,
                   seed: int = 0, val_fraction: float = 0.15
                   ) -> list[tuple[float, float, float]]:
    """Stratified group k-fold metrics; each fold retrains from scratch
    with an inner validation carve-out for early stopping."""
    y = np.asarray(y, dtype=int)
    fold = stratified_group_folds(y, groups, k, seed)
    results = []
    for f in range(k):
        test_idx = np.flatnonzero(fold == f)
        train_idx = np.flatnonzero(fold != f)
        train_y = y[train_idx]
        train_groups = np.asarray(groups)[train_idx]
        per_class = [len({g for g, yy in zip(train_groups, train_y)
                          if yy == cls}) for cls in (0, 1)]
        inner_k = max(2, min(int(round(1 / max(val_fraction, 1e-6))),
                             min(per_class)))
        inner = stratified_group_folds(train_y, train_groups, inner_k,
                                       seed + 1 + f)
        val_idx = train_idx[inner == 0]
        fit_idx = train_idx[inner != 0]
        clf = make_classifier()
        clf.fit(_index_bundle(bundle, fit_idx), y[fit_idx],
                _index_bundle(bundle, val_idx), y[val_idx])
        preds = clf.predict(_index_bundle(bundle, test_idx))
        results.append(compute_metrics(preds, y[test_idx]))
    return results


def _index_bundle(bundle: dict, idx: np.ndarray) -> dict:
    out = {}
    for m, data in bundle.items():
        if isinstance(data, tuple):
            out[m] = (data[0][idx], data[1][idx])
        else:
            out[m] = np.asarray(data)[idx]
    return out
