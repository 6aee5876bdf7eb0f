"""Binary token classifier: an encoder backbone plus a linear two-way head.

The loss is cross-entropy over answer tokens only.  The supervision mask is
derived from the sequence structure (non-special tokens inside the answer
range), so label values parked at masked positions can never leak into the
loss or gradients.  Any module mapping (input_ids, attention_mask) to
per-token hidden states works as a backbone; a small built-in transformer
covers tests and desk-scale runs, Hugging Face encoders plug in by name.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import torch
from torch import nn

from .align import IGNORE_LABEL, OffsetToken, TokenLabelSequence, binary_runs
from .corpus import PredictedSpan
from .errors import ContractViolation

MANIFEST_VERSION = 1
MANIFEST_FILE = "manifest.json"
WEIGHTS_FILE = "weights.pt"

LABEL_MAP = {"0": "supported", "1": "hallucinated"}
DEFAULT_THRESHOLD = 0.5


@dataclass
class TrainConfig:
    epochs: int = 6
    learning_rate: float = 1e-5
    batch_size: int = 4
    max_len: int = 4096
    seed: int = 42
    backbone_id: str = "toy"
    ignore_label: int = IGNORE_LABEL
    device: str = "cpu"
    backbone_config: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ContractViolation("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ContractViolation("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass(frozen=True)
class TokenPrediction:
    """Per-record hallucination probabilities for the answer tokens."""

    id: str
    probs: tuple[float, ...]
    offsets: tuple[OffsetToken, ...]


class ToyEncoder(nn.Module):
    """Small transformer encoder for smoke tests and synthetic corpora."""

    def __init__(self, vocab_size: int, hidden_size: int = 64, num_layers: int = 2,
                 num_heads: int = 4, max_position: int = 512, dropout: float = 0.0):
        super().__init__()
        self.config = {
            "vocab_size": vocab_size, "hidden_size": hidden_size,
            "num_layers": num_layers, "num_heads": num_heads,
            "max_position": max_position, "dropout": dropout,
        }
        self.hidden_size = hidden_size
        self.token_embedding = nn.Embedding(vocab_size, hidden_size)
        self.position_embedding = nn.Embedding(max_position, hidden_size)
        layer = nn.TransformerEncoderLayer(
            d_model=hidden_size, nhead=num_heads, dim_feedforward=4 * hidden_size,
            dropout=dropout, batch_first=True,
        )
        # nested-tensor fast path reorders padded rows; keep plain math so
        # batching cannot change per-token outputs
        self.encoder = nn.TransformerEncoder(layer, num_layers=num_layers,
                                             enable_nested_tensor=False)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(input_ids.size(1), device=input_ids.device)
        hidden = self.token_embedding(input_ids) + self.position_embedding(positions)
        return self.encoder(hidden, src_key_padding_mask=attention_mask == 0)


class HFBackbone(nn.Module):
    """Wraps a Hugging Face encoder so it emits per-token hidden states."""

    def __init__(self, name_or_path: str, **kwargs):
        from transformers import AutoModel  # optional dependency

        super().__init__()
        self.model = AutoModel.from_pretrained(name_or_path, **kwargs)
        self.hidden_size = self.model.config.hidden_size
        self.config = {"name_or_path": name_or_path}

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        return self.model(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state


def build_backbone(backbone_id: str, backbone_config: dict[str, Any]) -> nn.Module:
    if backbone_id == "toy":
        return ToyEncoder(**backbone_config)
    if backbone_id.startswith("hf:"):
        return HFBackbone(backbone_id[3:], **backbone_config)
    raise ContractViolation(f"unknown backbone id {backbone_id!r}")


class TokenClassifier(nn.Module):
    """Backbone plus a single affine layer mapping hidden states to 2 logits."""

    def __init__(self, backbone: nn.Module):
        super().__init__()
        self.backbone = backbone
        self.head = nn.Linear(backbone.hidden_size, 2)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(input_ids, attention_mask))


def collate_batch(sequences: Sequence[TokenLabelSequence],
                  device: str | torch.device = "cpu",
                  ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad a batch and build loss targets.

    Targets carry IGNORE_LABEL everywhere except structurally supervised
    positions (non-special answer tokens carrying a 0/1 label); padding and
    whatever values sit at masked positions are excluded by construction.
    """
    width = max(len(s) for s in sequences)
    input_ids = torch.zeros((len(sequences), width), dtype=torch.long)
    attention_mask = torch.zeros((len(sequences), width), dtype=torch.long)
    targets = torch.full((len(sequences), width), IGNORE_LABEL, dtype=torch.long)
    for row, seq in enumerate(sequences):
        input_ids[row, :len(seq)] = torch.tensor(seq.input_ids, dtype=torch.long)
        attention_mask[row, :len(seq)] = 1
        for i in seq.answer_token_indices():
            if seq.labels[i] in (0, 1):
                targets[row, i] = seq.labels[i]
    return input_ids.to(device), attention_mask.to(device), targets.to(device)


def batch_loss(model: TokenClassifier, input_ids: torch.Tensor,
               attention_mask: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    logits = model(input_ids, attention_mask)
    return nn.functional.cross_entropy(
        logits.reshape(-1, 2), targets.reshape(-1), ignore_index=IGNORE_LABEL
    )


def _default_toy_config(sequences: Sequence[TokenLabelSequence]) -> dict[str, Any]:
    vocab = max((max(s.input_ids) for s in sequences if s.input_ids), default=0) + 1
    longest = max(len(s) for s in sequences)
    return {"vocab_size": vocab, "max_position": max(longest, 16)}


def train(train_data: Sequence[TokenLabelSequence], config: TrainConfig,
          backbone: nn.Module | None = None,
          ) -> tuple[TokenClassifier, list[float]]:
    """Fine-tune a token classifier; returns (model, per-epoch mean loss).

    Reproducible for a fixed seed: shuffling, initialization, and optimizer
    state all flow from config.seed.
    """
    config.validate()
    if not train_data:
        raise ContractViolation("train_data is empty")
    for seq in train_data:
        if len(seq) > config.max_len:
            raise ContractViolation(
                f"record {seq.record_id!r} packs to {len(seq)} tokens, "
                f"max_len is {config.max_len}"
            )
    supervised = sum(
        1 for seq in train_data for i in seq.answer_token_indices() if seq.labels[i] in (0, 1)
    )
    if supervised == 0:
        raise ContractViolation("no supervised tokens in train_data (all labels IGNORE)")

    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)

    if backbone is None:
        backbone_config = config.backbone_config or _default_toy_config(train_data)
        backbone = build_backbone(config.backbone_id, backbone_config)
        config.backbone_config = getattr(backbone, "config", backbone_config)
    model = TokenClassifier(backbone).to(config.device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)

    order = list(range(len(train_data)))
    losses: list[float] = []
    model.train()
    for _ in range(config.epochs):
        rng.shuffle(order)
        epoch_losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = [train_data[i] for i in order[lo:lo + config.batch_size]]
            loss = batch_loss(model, *collate_batch(batch, config.device))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(loss.item())
        losses.append(sum(epoch_losses) / len(epoch_losses))
    model.eval()
    return model, losses


@torch.no_grad()
def predict(model: TokenClassifier, sequences: Sequence[TokenLabelSequence],
            batch_size: int = 8, device: str | torch.device = "cpu",
            ) -> list[TokenPrediction]:
    """Per-token hallucination probabilities for the answer tokens of each input.

    Output order matches input order, and results are independent of
    ``batch_size`` (padding is masked out of attention).
    """
    model.eval()
    out: list[TokenPrediction] = []
    for lo in range(0, len(sequences), batch_size):
        batch = sequences[lo:lo + batch_size]
        input_ids, attention_mask, _ = collate_batch(batch, device)
        probs = torch.softmax(model(input_ids, attention_mask), dim=-1)[..., 1]
        for row, seq in enumerate(batch):
            idx = seq.answer_token_indices()
            out.append(TokenPrediction(
                id=seq.record_id,
                probs=tuple(probs[row, i].item() for i in idx),
                offsets=tuple(seq.tokens[i] for i in idx),
            ))
    return out


def detect_spans(prediction: TokenPrediction, threshold: float) -> list[PredictedSpan]:
    """Threshold token probabilities and merge runs into character spans.

    A span's confidence is the mean probability of its tokens.  Raising the
    threshold never grows the covered character set.
    """
    if not (0.0 < threshold < 1.0):
        raise ContractViolation(f"threshold {threshold} outside (0, 1)")
    values = [1 if p >= threshold else 0 for p in prediction.probs]
    spans = []
    for i, j in binary_runs(values):
        start = prediction.offsets[i].char_start
        end = prediction.offsets[j - 1].char_end
        if end <= start:
            continue
        confidence = sum(prediction.probs[i:j]) / (j - i)
        spans.append(PredictedSpan(start=start, end=end, confidence=confidence))
    return spans


def save_model(model: TokenClassifier, model_dir: str | Path,
               backbone_id: str, max_len: int, seed: int,
               tokenizer_spec: str | None = None,
               threshold_default: float = DEFAULT_THRESHOLD,
               extra: dict[str, Any] | None = None) -> dict[str, Any]:
    """Write weights plus a manifest describing how inputs must be prepared."""
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, Any] = {
        "version": MANIFEST_VERSION,
        "backbone_id": backbone_id,
        "backbone_config": dict(getattr(model.backbone, "config", {})),
        "max_len": max_len,
        "label_map": LABEL_MAP,
        "threshold_default": threshold_default,
        "ignore_label": IGNORE_LABEL,
        "seed": seed,
        "tokenizer": tokenizer_spec,
    }
    if extra:
        manifest.update(extra)
    with open(model_dir / MANIFEST_FILE, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    torch.save(model.state_dict(), model_dir / WEIGHTS_FILE)
    return manifest


def load_model(model_dir: str | Path) -> tuple[TokenClassifier, dict[str, Any]]:
    """Rebuild the classifier described by a model directory's manifest."""
    model_dir = Path(model_dir)
    with open(model_dir / MANIFEST_FILE, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    backbone = build_backbone(manifest["backbone_id"], manifest.get("backbone_config", {}))
    model = TokenClassifier(backbone)
    state = torch.load(model_dir / WEIGHTS_FILE, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model, manifest


def token_f1(gold: Sequence[int], pred: Sequence[int]) -> float:
    """Plain F1 of the hallucinated class; convenience for smoke tests."""
    tp = sum(1 for g, p in zip(gold, pred) if g == 1 and p == 1)
    fp = sum(1 for g, p in zip(gold, pred) if g == 0 and p == 1)
    fn = sum(1 for g, p in zip(gold, pred) if g == 1 and p == 0)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)
