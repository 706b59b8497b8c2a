"""A tiny decoder-style vision-language model for extraction tests.

The architecture mirrors the structure extraction relies on: a patch
encoder producing image token embeddings, a byte-level text embedding, and
a causal transformer decoder whose last-layer hidden states (before any
logit head) are the extraction surface. A randomly initialized instance is
deterministic for a seed and serves CI; real checkpoints are loaded from
files saved by :func:`save_checkpoint`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn


@dataclass(frozen=True)
class ToyVLMConfig:
    d_model: int = 48
    n_heads: int = 4
    n_layers: int = 2
    image_size: int = 32
    patch_size: int = 8
    vocab_size: int = 256  # byte-level text tokens
    max_text_positions: int = 192

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2


class ToyVLM(nn.Module):
    def __init__(self, config: ToyVLMConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.patch_proj = nn.Conv2d(3, d, kernel_size=config.patch_size,
                                    stride=config.patch_size)
        self.image_pos = nn.Parameter(torch.zeros(config.n_patches, d))
        nn.init.normal_(self.image_pos, std=0.02)
        self.token_embed = nn.Embedding(config.vocab_size, d)
        self.token_pos = nn.Embedding(config.max_text_positions, d)
        self.layers = nn.ModuleList(
            nn.TransformerEncoderLayer(
                d_model=d, nhead=config.n_heads, dim_feedforward=4 * d,
                dropout=0.0, batch_first=True, norm_first=True,
            )
            for _ in range(config.n_layers)
        )
        self.final_norm = nn.LayerNorm(d)

    def tokenize(self, text: str) -> list[int]:
        """Byte-level tokenization; the serialized prompt is the UTF-8 text."""
        return list(text.encode("utf-8"))

    def encode_image(self, pixels: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) in [0, 1] -> (B, n_patches, d) image token embeddings."""
        patches = self.patch_proj(pixels)
        return patches.flatten(2).transpose(1, 2) + self.image_pos

    def hidden_states(self, pixels: torch.Tensor, token_ids: list[int] | None = None
                      ) -> torch.Tensor:
        """Last-layer hidden states over [image tokens; text tokens].

        No logit head is applied; rows correspond to sequence positions.
        """
        sequence = self.encode_image(pixels)
        if token_ids:
            ids = torch.as_tensor(token_ids, dtype=torch.long, device=sequence.device)
            positions = torch.arange(len(token_ids), device=sequence.device)
            text = self.token_embed(ids) + self.token_pos(positions)
            text = text.unsqueeze(0).expand(sequence.shape[0], -1, -1)
            sequence = torch.cat([sequence, text], dim=1)
        length = sequence.shape[1]
        causal = nn.Transformer.generate_square_subsequent_mask(
            length, device=sequence.device, dtype=sequence.dtype)
        hidden = sequence
        for layer in self.layers:
            hidden = layer(hidden, src_mask=causal)
        return self.final_norm(hidden)


def build_toy_model(seed: int, config: ToyVLMConfig | None = None) -> ToyVLM:
    config = config or ToyVLMConfig()
    torch.manual_seed(seed)
    model = ToyVLM(config)
    model.eval()
    return model


def save_checkpoint(model: ToyVLM, path) -> None:
    torch.save({"config": asdict(model.config), "state_dict": model.state_dict()}, path)


def load_checkpoint(path) -> ToyVLM:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    model = ToyVLM(ToyVLMConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
