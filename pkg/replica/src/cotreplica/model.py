"""Decoder-only transformer for in-context weight prediction with CoT.

Tokens are d-dimensional vectors: feature tokens x_i, label tokens (y_i
padded with zeros to dimension d), and thought tokens w_j (the running
weight estimates).  Each is lifted into the embedding space by a shared
learnable linear map plus a token-type embedding; the model output at the
final position, projected back to d dimensions by a learned read-out, is the
next weight estimate.  Chain-of-thought rollouts feed each estimate back in
as the next thought token, during training and at inference alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import torch
import torch.nn as nn

TYPE_X, TYPE_Y, TYPE_W = 0, 1, 2


@dataclass(frozen=True)
class ReplicaConfig:
    layers: int = 12
    heads: int = 8
    embed_dim: int = 256
    train_steps: int = 5000
    batch: int = 64
    n: int = 20
    d: int = 10
    k: int = 4
    seed: int = 0
    lr: float = 1e-3
    warmup: int = 100
    reduced: bool = False  # shrink to a 2-layer, 4-head, 64-dim model
    residual_readout: bool = True  # estimate = previous thought + learned update
    curriculum: bool = True  # ramp the context length up over early training
    supervise: str = "final"  # "final": loss on w_k only; "all": every step
    thought_init: str = "randomized"  # training-time w_0: "zero" | "randomized"

    def __post_init__(self) -> None:
        for f in fields(self):
            if f.name in ("reduced", "lr", "residual_readout", "curriculum", "supervise", "thought_init"):
                continue
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must divide evenly into heads")
        if self.supervise not in ("final", "all"):
            raise ValueError(f"supervise must be 'final' or 'all', got {self.supervise!r}")
        if self.thought_init not in ("zero", "randomized"):
            raise ValueError(f"thought_init must be 'zero' or 'randomized', got {self.thought_init!r}")

    def arch(self) -> tuple[int, int, int]:
        if self.reduced:
            return 2, 4, 64
        return self.layers, self.heads, self.embed_dim


class Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        t = h.shape[1]
        mask = torch.triu(torch.ones(t, t, dtype=torch.bool, device=h.device), diagonal=1)
        a = self.ln1(h)
        attn_out, _ = self.attn(a, a, a, attn_mask=mask, need_weights=False)
        h = h + attn_out
        return h + self.mlp(self.ln2(h))


class WeightPredictor(nn.Module):
    """Causal transformer mapping a token sequence to the next weight estimate.

    With residual_readout the prediction is (last thought token) + update,
    mirroring the residual update structure of the attention layer this model
    replicates; otherwise the read-out is direct.
    """

    def __init__(self, config: ReplicaConfig, max_len: int = 512):
        super().__init__()
        layers, heads, dim = config.arch()
        self.d = config.d
        self.residual_readout = config.residual_readout
        self.embed = nn.Linear(config.d, dim)
        self.type_embed = nn.Embedding(3, dim)
        self.pos_embed = nn.Embedding(max_len, dim)
        self.blocks = nn.ModuleList(Block(dim, heads) for _ in range(layers))
        self.ln_out = nn.LayerNorm(dim)
        self.readout = nn.Linear(dim, config.d)

    def forward(self, tokens: torch.Tensor, types: torch.Tensor) -> torch.Tensor:
        """tokens (b, t, d), types (t,) -> estimate at the last position (b, d)."""
        t = tokens.shape[1]
        pos = torch.arange(t, device=tokens.device)
        h = self.embed(tokens) + self.type_embed(types)[None] + self.pos_embed(pos)[None]
        for block in self.blocks:
            h = block(h)
        update = self.readout(self.ln_out(h[:, -1]))
        if self.residual_readout:
            return tokens[:, -1] + update
        return update


def prompt_tokens(xs: torch.Tensor, ys: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Interleave x and zero-padded y tokens: (b, 2n, d) plus the type ids."""
    b, n, d = xs.shape
    y_tok = torch.zeros(b, n, d, dtype=xs.dtype)
    y_tok[:, :, 0] = ys
    tokens = torch.stack([xs, y_tok], dim=2).reshape(b, 2 * n, d)
    types = torch.tensor([TYPE_X, TYPE_Y] * n)
    return tokens, types


def cot_rollout(model: WeightPredictor, tokens: torch.Tensor, types: torch.Tensor,
                k: int, w0: torch.Tensor | None = None) -> list[torch.Tensor]:
    """Append the starting thought token (zero unless given), then k
    model-generated estimates.

    Returns [w_hat_1, ..., w_hat_k]; gradients flow through the whole chain.
    """
    b, _, d = tokens.shape
    thought = torch.zeros(b, 1, d, dtype=tokens.dtype) if w0 is None else w0[:, None, :]
    seq = torch.cat([tokens, thought], dim=1)
    seq_types = torch.cat([types, torch.tensor([TYPE_W])])
    outs = []
    for _ in range(k):
        w_hat = model(seq, seq_types)
        outs.append(w_hat)
        seq = torch.cat([seq, w_hat[:, None, :]], dim=1)
        seq_types = torch.cat([seq_types, torch.tensor([TYPE_W])])
    return outs
