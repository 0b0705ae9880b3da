"""Inference-only Conv-TasNet and DPT-Net architectures.

Mask-based time-domain separation: a learned encoder, a separation
network that emits one mask per source over the encoded mixture, and a
learned decoder. Only the forward pass is implemented; weights come from
checkpoints. Configs default to the published 2-source / 16 kHz setups
and can be shrunk for smoke tests.
"""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class ConvTasNetConfig:
    num_sources: int = 2
    enc_filters: int = 512  # N
    enc_kernel: int = 32  # L (2 ms at 16 kHz)
    bottleneck: int = 128  # B
    conv_channels: int = 512  # H
    kernel_size: int = 3  # P
    num_blocks: int = 8  # X
    num_repeats: int = 3  # R
    skip_channels: int = 128  # Sc

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DPTNetConfig:
    num_sources: int = 2
    enc_filters: int = 64  # N
    enc_kernel: int = 16
    chunk_size: int = 100  # K
    num_layers: int = 6
    attention_heads: int = 4
    ffn_hidden: int = 128

    def to_dict(self):
        return asdict(self)


class GlobalLayerNorm(nn.Module):
    """Normalize over channel and time jointly (gLN)."""

    def __init__(self, channels, eps=1e-8):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(1, channels, 1))
        self.beta = nn.Parameter(torch.zeros(1, channels, 1))
        self.eps = eps

    def forward(self, x):
        mean = x.mean(dim=(1, 2), keepdim=True)
        var = ((x - mean) ** 2).mean(dim=(1, 2), keepdim=True)
        return self.gamma * (x - mean) / torch.sqrt(var + self.eps) + self.beta


class TemporalBlock(nn.Module):
    def __init__(self, cfg: ConvTasNetConfig, dilation: int):
        super().__init__()
        self.expand = nn.Conv1d(cfg.bottleneck, cfg.conv_channels, 1)
        self.prelu1 = nn.PReLU()
        self.norm1 = GlobalLayerNorm(cfg.conv_channels)
        pad = (cfg.kernel_size - 1) * dilation // 2
        self.depthwise = nn.Conv1d(
            cfg.conv_channels, cfg.conv_channels, cfg.kernel_size,
            dilation=dilation, padding=pad, groups=cfg.conv_channels,
        )
        self.prelu2 = nn.PReLU()
        self.norm2 = GlobalLayerNorm(cfg.conv_channels)
        self.skip = nn.Conv1d(cfg.conv_channels, cfg.skip_channels, 1)
        self.residual = nn.Conv1d(cfg.conv_channels, cfg.bottleneck, 1)

    def forward(self, x):
        y = self.norm1(self.prelu1(self.expand(x)))
        y = self.norm2(self.prelu2(self.depthwise(y)))
        return x + self.residual(y), self.skip(y)


class ConvTasNet(nn.Module):
    """Dilated temporal convolutional mask estimator over a learned filterbank."""

    architecture = "conv-tasnet"

    def __init__(self, config: ConvTasNetConfig | None = None):
        super().__init__()
        cfg = config or ConvTasNetConfig()
        self.cfg = cfg
        self.encoder = nn.Conv1d(1, cfg.enc_filters, cfg.enc_kernel,
                                 stride=cfg.enc_kernel // 2, bias=False)
        self.input_norm = GlobalLayerNorm(cfg.enc_filters)
        self.input_proj = nn.Conv1d(cfg.enc_filters, cfg.bottleneck, 1)
        self.blocks = nn.ModuleList(
            TemporalBlock(cfg, dilation=2**i)
            for _ in range(cfg.num_repeats)
            for i in range(cfg.num_blocks)
        )
        self.mask_prelu = nn.PReLU()
        self.mask_head = nn.Conv1d(cfg.skip_channels,
                                   cfg.num_sources * cfg.enc_filters, 1)
        self.decoder = nn.ConvTranspose1d(cfg.enc_filters, 1, cfg.enc_kernel,
                                          stride=cfg.enc_kernel // 2, bias=False)

    def forward(self, mixture: torch.Tensor) -> torch.Tensor:
        """(batch, samples) -> (batch, num_sources, samples)."""
        batch, length = mixture.shape
        stride = self.cfg.enc_kernel // 2
        pad = (-(length - self.cfg.enc_kernel)) % stride
        x = nn.functional.pad(mixture.unsqueeze(1), (0, pad + self.cfg.enc_kernel))
        encoded = torch.relu(self.encoder(x))  # (batch, N, frames)

        y = self.input_proj(self.input_norm(encoded))
        skip_total = torch.zeros(batch, self.cfg.skip_channels, encoded.shape[-1],
                                 device=encoded.device, dtype=encoded.dtype)
        for block in self.blocks:
            y, skip = block(y)
            skip_total = skip_total + skip
        masks = torch.sigmoid(self.mask_head(self.mask_prelu(skip_total)))
        masks = masks.view(batch, self.cfg.num_sources, self.cfg.enc_filters, -1)

        separated = masks * encoded.unsqueeze(1)
        flat = separated.reshape(batch * self.cfg.num_sources,
                                 self.cfg.enc_filters, -1)
        decoded = self.decoder(flat).squeeze(1)
        return decoded.view(batch, self.cfg.num_sources, -1)[:, :, :length]


class ImprovedTransformerLayer(nn.Module):
    """Self-attention plus an RNN feed-forward stage, both with residuals."""

    def __init__(self, d_model, heads, ffn_hidden):
        super().__init__()
        self.attention = nn.MultiheadAttention(d_model, heads, batch_first=True)
        self.norm1 = nn.LayerNorm(d_model)
        self.rnn = nn.LSTM(d_model, ffn_hidden, batch_first=True, bidirectional=True)
        self.ffn_out = nn.Linear(2 * ffn_hidden, d_model)
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, x):
        attended, _ = self.attention(x, x, x, need_weights=False)
        x = self.norm1(x + attended)
        hidden, _ = self.rnn(x)
        return self.norm2(x + self.ffn_out(torch.relu(hidden)))


class DPTNet(nn.Module):
    """Dual-path transformer mask estimator: alternating intra-chunk and
    inter-chunk attention over segmented encoder frames."""

    architecture = "dpt-net"

    def __init__(self, config: DPTNetConfig | None = None):
        super().__init__()
        cfg = config or DPTNetConfig()
        self.cfg = cfg
        self.encoder = nn.Conv1d(1, cfg.enc_filters, cfg.enc_kernel,
                                 stride=cfg.enc_kernel // 2, bias=False)
        self.intra = nn.ModuleList(
            ImprovedTransformerLayer(cfg.enc_filters, cfg.attention_heads, cfg.ffn_hidden)
            for _ in range(cfg.num_layers)
        )
        self.inter = nn.ModuleList(
            ImprovedTransformerLayer(cfg.enc_filters, cfg.attention_heads, cfg.ffn_hidden)
            for _ in range(cfg.num_layers)
        )
        self.mask_prelu = nn.PReLU()
        self.mask_head = nn.Conv1d(cfg.enc_filters,
                                   cfg.num_sources * cfg.enc_filters, 1)
        self.decoder = nn.ConvTranspose1d(cfg.enc_filters, 1, cfg.enc_kernel,
                                          stride=cfg.enc_kernel // 2, bias=False)

    def _segment(self, frames):
        """(batch, N, T) -> (batch, N, chunks, K) with 50% overlap."""
        k = self.cfg.chunk_size
        hop = k // 2
        batch, n, t = frames.shape
        pad = (-(t - k)) % hop if t >= k else k - t
        frames = nn.functional.pad(frames, (0, pad))
        chunks = frames.unfold(-1, k, hop)  # (batch, N, chunks, K)
        return chunks, frames.shape[-1]

    def _overlap_add(self, chunks, total):
        k = self.cfg.chunk_size
        hop = k // 2
        batch, n, num_chunks, _ = chunks.shape
        out = torch.zeros(batch, n, total, device=chunks.device, dtype=chunks.dtype)
        weight = torch.zeros(1, 1, total, device=chunks.device, dtype=chunks.dtype)
        for c in range(num_chunks):
            out[:, :, c * hop : c * hop + k] += chunks[:, :, c]
            weight[:, :, c * hop : c * hop + k] += 1.0
        return out / weight.clamp(min=1.0)

    def forward(self, mixture: torch.Tensor) -> torch.Tensor:
        """(batch, samples) -> (batch, num_sources, samples)."""
        batch, length = mixture.shape
        stride = self.cfg.enc_kernel // 2
        pad = (-(length - self.cfg.enc_kernel)) % stride
        x = nn.functional.pad(mixture.unsqueeze(1), (0, pad + self.cfg.enc_kernel))
        encoded = torch.relu(self.encoder(x))  # (batch, N, T)
        num_frames = encoded.shape[-1]

        chunks, padded_total = self._segment(encoded)
        batch_, n, num_chunks, k = chunks.shape
        y = chunks
        for intra, inter in zip(self.intra, self.inter):
            within = y.permute(0, 2, 3, 1).reshape(batch_ * num_chunks, k, n)
            within = intra(within)
            y = within.view(batch_, num_chunks, k, n).permute(0, 3, 1, 2)
            across = y.permute(0, 3, 2, 1).reshape(batch_ * k, num_chunks, n)
            across = inter(across)
            y = across.view(batch_, k, num_chunks, n).permute(0, 3, 2, 1)

        merged = self._overlap_add(y, padded_total)[:, :, :num_frames]
        masks = torch.sigmoid(self.mask_head(self.mask_prelu(merged)))
        masks = masks.view(batch, self.cfg.num_sources, self.cfg.enc_filters, -1)

        separated = masks * encoded.unsqueeze(1)
        flat = separated.reshape(batch * self.cfg.num_sources,
                                 self.cfg.enc_filters, -1)
        decoded = self.decoder(flat).squeeze(1)
        return decoded.view(batch, self.cfg.num_sources, -1)[:, :, :length]


ARCHITECTURES = {
    ConvTasNet.architecture: (ConvTasNet, ConvTasNetConfig),
    DPTNet.architecture: (DPTNet, DPTNetConfig),
}


def build_model(architecture: str, config: dict | None = None) -> nn.Module:
    if architecture not in ARCHITECTURES:
        raise ValueError(
            f"unknown architecture {architecture!r}; expected one of {sorted(ARCHITECTURES)}"
        )
    model_cls, config_cls = ARCHITECTURES[architecture]
    cfg = config_cls(**config) if config else config_cls()
    model = model_cls(cfg)
    model.eval()
    return model
