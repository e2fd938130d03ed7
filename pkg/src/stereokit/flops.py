"""Analytic per-layer FLOPs and activation-memory accounting.

Counting rules: one multiply-add = 2 FLOPs; conv MACs are
k^2 (or k^3) * C_in * C_out * output_elements; correlation MACs are
C * D * H * W per sample. Activation sizes use 8 bytes per element, the
precision this implementation computes in. Peak memory is the sequential
live-set bound: the largest (input + output) pair along the forward
schedule, which is exact for a chain and a documented lower bound when
skip connections extend lifetimes.

Two paths are reported: the combined-volume + 2D-aggregation pipeline this
package implements, and a reference pipeline that builds a 4D concatenation
volume at 1/4 resolution and regularizes it with a deep stack of 3D
convolutions (the design lineage the combined volume replaces).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidArgumentError
from .model import ATTENTION_INPUT_CHANNELS, ModelConfig


@dataclass
class LayerCost:
    name: str
    macs: int
    out_bytes: int
    in_bytes: int

    @property
    def flops(self) -> int:
        return 2 * self.macs


@dataclass
class CostReport:
    path: str
    resolution: tuple[int, int]  # (height, width)
    layers: list[LayerCost] = field(default_factory=list)
    wall_time_s: float | None = None

    def add(self, name, macs, in_elems, out_elems):
        self.layers.append(
            LayerCost(name, int(macs), int(out_elems) * 8, int(in_elems) * 8)
        )

    @property
    def total_macs(self) -> int:
        return sum(l.macs for l in self.layers)

    @property
    def total_flops(self) -> int:
        return 2 * self.total_macs

    @property
    def peak_activation_bytes(self) -> int:
        return max(l.in_bytes + l.out_bytes for l in self.layers)

    def summary(self) -> str:
        lines = [
            f"path: {self.path} @ {self.resolution[1]}x{self.resolution[0]}",
            f"  total GFLOPs: {self.total_flops / 1e9:.2f}",
            f"  peak activation memory: {self.peak_activation_bytes / 2**30:.3f} GiB",
        ]
        if self.wall_time_s is not None:
            lines.append(f"  measured wall time: {self.wall_time_s:.3f} s")
        return "\n".join(lines)


def _conv2d(report, name, c_in, c_out, k, h_in, w_in, h_out, w_out):
    report.add(
        name,
        k * k * c_in * c_out * h_out * w_out,
        c_in * h_in * w_in,
        c_out * h_out * w_out,
    )


def _conv3d(report, name, c_in, c_out, k, d, h, w):
    report.add(
        name, k**3 * c_in * c_out * d * h * w, c_in * d * h * w, c_out * d * h * w
    )


def _encoder(report: CostReport, cfg: ModelConfig, h: int, w: int):
    c1, c2, c3 = cfg.channels(64), cfg.channels(128), cfg.channels(256)
    for view in ("left", "right"):
        _conv2d(report, f"encoder.{view}.conv1", 3, c1, 7, h, w, h // 2, w // 2)
        _conv2d(report, f"encoder.{view}.conv1_1", c1, c1, 3,
                h // 2, w // 2, h // 2, w // 2)
        _conv2d(report, f"encoder.{view}.conv2", c1, c2, 5,
                h // 2, w // 2, h // 4, w // 4)
        _conv2d(report, f"encoder.{view}.conv2_1", c2, c2, 3,
                h // 4, w // 4, h // 4, w // 4)
        _conv2d(report, f"encoder.{view}.conv3", c2, c3, 3,
                h // 4, w // 4, h // 8, w // 8)
        _conv2d(report, f"encoder.{view}.conv3_1", c3, c3, 3,
                h // 8, w // 8, h // 8, w // 8)
    return c1, c2, c3


def flops_count(config: ModelConfig, resolution: tuple[int, int]) -> CostReport:
    """Per-layer cost of the combined-volume pipeline at ``resolution``."""
    h, w = resolution
    if h % 8 or w % 8:
        raise InvalidArgumentError("resolution must be divisible by 8")
    report = CostReport(path="combined-volume-2d", resolution=(h, w))
    c1, c2, c3 = _encoder(report, config, h, w)
    c0 = config.channels(32)
    d = config.disparity_levels
    h8, w8 = h // 8, w // 8

    report.add("correlation-volume", c3 * d * h8 * w8,
               2 * c3 * h8 * w8, d * h8 * w8)
    report.add("concat-volume", 0, 2 * c3 * h8 * w8, 2 * c3 * d * h8 * w8)
    half = max(1, c3 // 2)
    _conv3d(report, "squeeze.0", 2 * c3, c3, 3, d, h8, w8)
    _conv3d(report, "squeeze.1", c3, half, 3, d, h8, w8)
    _conv3d(report, "squeeze.2", half, 1, 3, d, h8, w8)

    vol_ch = 2 * d
    _conv2d(report, "head.agg1", vol_ch, c3, 3, h8, w8, h8, w8)
    _conv2d(report, "head.agg2", c3, c3, 3, h8, w8, h8, w8)
    _conv2d(report, "head.disp", c3, 1, 3, h8, w8, h8, w8)

    a = ATTENTION_INPUT_CHANNELS
    skip_ch = {2: c2, 1: c1, 0: 3}
    up_out = {2: c2, 1: c1, 0: c0}
    feat_ch = c3
    for s in (2, 1, 0):
        hs, ws = h // 2**s, w // 2**s
        report.add(f"stage{s}.warp", 2 * 3 * hs * ws, 3 * hs * ws + hs * ws,
                   3 * hs * ws)
        # deconv: every input element feeds k*k outputs
        report.add(
            f"stage{s}.deconv",
            16 * feat_ch * up_out[s] * (hs // 2) * (ws // 2),
            feat_ch * (hs // 2) * (ws // 2),
            up_out[s] * hs * ws,
        )
        _conv2d(report, f"stage{s}.attention.1x1a", a, a, 1, hs, ws, hs, ws)
        _conv2d(report, f"stage{s}.attention.3x3", a, a, 3, hs, ws, hs, ws)
        _conv2d(report, f"stage{s}.attention.1x1b", a, 1, 1, hs, ws, hs, ws)
        c_r = up_out[s] + skip_ch[s] + a
        _conv2d(report, f"stage{s}.hourglass.enc1", c_r, c_r, 3,
                hs, ws, hs // 2, ws // 2)
        _conv2d(report, f"stage{s}.hourglass.enc2", c_r, c_r, 3,
                hs // 2, ws // 2, hs // 4, ws // 4)
        report.add(f"stage{s}.hourglass.dec2",
                   16 * c_r * c_r * (hs // 4) * (ws // 4),
                   c_r * (hs // 4) * (ws // 4), c_r * (hs // 2) * (ws // 2))
        report.add(f"stage{s}.hourglass.dec1",
                   16 * c_r * c_r * (hs // 2) * (ws // 2),
                   c_r * (hs // 2) * (ws // 2), c_r * hs * ws)
        _conv2d(report, f"stage{s}.hourglass.head1", c_r, c_r, 3, hs, ws, hs, ws)
        _conv2d(report, f"stage{s}.hourglass.head2", c_r, 1, 3, hs, ws, hs, ws)
        feat_ch = c_r
    return report


REFERENCE_3D_LAYERS = 8


def reference_3d_flops_count(
    config: ModelConfig, resolution: tuple[int, int]
) -> CostReport:
    """Cost of the reference 4D-concat + 3D-conv pipeline.

    The reference builds its concatenation volume from 1/4-resolution
    features with max_disparity/4 levels and aggregates with an 8-layer 3D
    convolution stack, the standard shape of deep 3D regularizers.
    """
    h, w = resolution
    if h % 8 or w % 8:
        raise InvalidArgumentError("resolution must be divisible by 8")
    report = CostReport(path="reference-4d-concat-3d", resolution=(h, w))
    c1, c2, c3 = _encoder(report, config, h, w)
    h4, w4 = h // 4, w // 4
    d4 = config.max_disparity // 4
    cc = 2 * c2  # concatenated 1/4-scale features
    report.add("concat-volume", 0, 2 * c2 * h4 * w4, cc * d4 * h4 * w4)
    _conv3d(report, "agg3d.0", cc, c2, 3, d4, h4, w4)
    for i in range(1, REFERENCE_3D_LAYERS - 1):
        _conv3d(report, f"agg3d.{i}", c2, c2, 3, d4, h4, w4)
    _conv3d(report, f"agg3d.{REFERENCE_3D_LAYERS - 1}", c2, 1, 3, d4, h4, w4)
    # disparity regression over the full-resolution probability volume
    report.add("upsample-regress", config.max_disparity * h * w,
               d4 * h4 * w4, h * w)
    return report
