"""Network assembly: shared encoder, combined volume, coarse-to-fine decoder.

The encoder follows the classic correlation-network shape: three stride-2
stages (7x7, 5x5, 3x3 kernels, widths 64/128/256 scaled by the width
multiplier), each with one stride-1 refinement conv. Both views share the
same encoder parameters. Matching evidence is built at 1/8 resolution from
the conv3 features, aggregated by 2D convolutions into an initial disparity,
then refined by three attention-residual stages up to full resolution.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .attention import (
    ATTENTION_INPUT_CHANNELS,
    AttentionParams,
    HourglassParams,
    apply_attention,
    attention_vector,
    hourglass2d,
    make_attention_input,
)
from .cost_volume import combine, concat_volume, correlation_volume, squeeze_aggregate
from .errors import FormatError, InvalidArgumentError, NumericFailure
from .layers import Conv2dLayer, Conv3dLayer, Deconv2dLayer
from .ops import bilinear_upsample
from .tensor import (
    Tensor,
    concat,
    debug_checks_enabled,
    leaky_relu,
    mul,
    no_grad,
)
from .warp import ErrorMap, downsample_inputs, error_map, warp_right_to_left

FEATURE_STRIDE = 8


@dataclass(frozen=True)
class ModelConfig:
    max_disparity: int = 192
    width_multiplier: float = 0.25
    input_height: int = 64
    input_width: int = 128
    scales: int = 4
    seed: int = 0
    # Component toggles for the ablation variants.
    use_correlation: bool = True
    use_concat_volume: bool = True
    use_residual: bool = True
    use_attention: bool = True
    # Scales (0..2) whose refinement stage receives a real error map;
    # stages outside the set get a zero map of the same shape.
    error_map_scales: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if self.max_disparity <= 0 or self.max_disparity % FEATURE_STRIDE:
            raise InvalidArgumentError(
                f"max_disparity must be a positive multiple of {FEATURE_STRIDE}"
            )
        if self.input_height % FEATURE_STRIDE or self.input_width % FEATURE_STRIDE:
            raise InvalidArgumentError(
                f"input extents must be divisible by {FEATURE_STRIDE}"
            )
        if self.scales != 4:
            raise InvalidArgumentError("the pyramid is fixed at 4 scales")
        if not (self.use_correlation or self.use_concat_volume):
            raise InvalidArgumentError(
                "at least one cost volume must be enabled (no correspondence "
                "signal otherwise)"
            )
        if not 0 < self.width_multiplier <= 1:
            raise InvalidArgumentError("width_multiplier must be in (0, 1]")
        if any(s not in (0, 1, 2) for s in self.error_map_scales):
            raise InvalidArgumentError("error_map_scales entries must be in 0..2")

    @property
    def disparity_levels(self) -> int:
        return self.max_disparity // FEATURE_STRIDE

    def channels(self, base: int) -> int:
        return max(1, round(base * self.width_multiplier))

    def with_overrides(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)


@dataclass
class DisparityPyramid:
    """Per-scale outputs: index s holds the 1/2^s-resolution map in that
    scale's own pixel units."""

    disparities: list  # 4 Tensors, scales 0..3
    residuals: list  # 3 Tensors or None (scales 0..2)
    error_maps: list  # 3 ErrorMaps (scales 0..2)


class ModelParams:
    """All learnable tensors, grouped by pipeline stage."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        c1, c2, c3 = config.channels(64), config.channels(128), config.channels(256)
        c0 = config.channels(32)
        self.enc_widths = (c1, c2, c3)

        self.conv1 = Conv2dLayer(rng, 3, c1, 7, stride=2, padding=3)
        self.conv1_1 = Conv2dLayer(rng, c1, c1, 3, padding=1)
        self.conv2 = Conv2dLayer(rng, c1, c2, 5, stride=2, padding=2)
        self.conv2_1 = Conv2dLayer(rng, c2, c2, 3, padding=1)
        self.conv3 = Conv2dLayer(rng, c2, c3, 3, stride=2, padding=1)
        self.conv3_1 = Conv2dLayer(rng, c3, c3, 3, padding=1)

        d = config.disparity_levels
        if config.use_concat_volume:
            half = max(1, c3 // 2)
            self.squeeze = [
                Conv3dLayer(rng, 2 * c3, c3, 3, padding=1),
                Conv3dLayer(rng, c3, half, 3, padding=1),
                Conv3dLayer(rng, half, 1, 3, padding=1),
            ]
        else:
            self.squeeze = []
        vol_ch = d * (int(config.use_correlation) + int(config.use_concat_volume))
        self.agg1 = Conv2dLayer(rng, vol_ch, c3, 3, padding=1)
        self.agg2 = Conv2dLayer(rng, c3, c3, 3, padding=1)
        self.disp_head = Conv2dLayer(rng, c3, 1, 3, padding=1)

        a = ATTENTION_INPUT_CHANNELS
        skip_ch = {2: c2, 1: c1, 0: 3}
        up_out = {2: c2, 1: c1, 0: c0}
        self.stages = {}
        feat_ch = c3
        self.residual_channels = {}
        for s in (2, 1, 0):
            deconv = Deconv2dLayer(rng, feat_ch, up_out[s], 4, stride=2, padding=1)
            c_r = up_out[s] + skip_ch[s] + a
            attn = AttentionParams.create(rng, a) if config.use_attention else None
            hourglass = HourglassParams.create(rng, c_r)
            self.stages[s] = {"deconv": deconv, "attention": attn,
                              "hourglass": hourglass}
            self.residual_channels[s] = c_r
            feat_ch = c_r

    # -- parameter access ----------------------------------------------
    def named_tensors(self):
        """Deterministic (name, Tensor) iteration over every parameter."""
        encoder = [
            ("conv1", self.conv1), ("conv1_1", self.conv1_1),
            ("conv2", self.conv2), ("conv2_1", self.conv2_1),
            ("conv3", self.conv3), ("conv3_1", self.conv3_1),
        ]
        for name, layer in encoder:
            yield f"encoder.{name}.weight", layer.weight
            yield f"encoder.{name}.bias", layer.bias
        for i, layer in enumerate(self.squeeze):
            yield f"squeeze.{i}.weight", layer.weight
            yield f"squeeze.{i}.bias", layer.bias
        for name, layer in (("agg1", self.agg1), ("agg2", self.agg2),
                            ("disp_head", self.disp_head)):
            yield f"head.{name}.weight", layer.weight
            yield f"head.{name}.bias", layer.bias
        for s in (2, 1, 0):
            stage = self.stages[s]
            yield f"stage{s}.deconv.weight", stage["deconv"].weight
            yield f"stage{s}.deconv.bias", stage["deconv"].bias
            if stage["attention"] is not None:
                for lname, layer in stage["attention"].layers():
                    yield f"stage{s}.attention.{lname}.weight", layer.weight
                    yield f"stage{s}.attention.{lname}.bias", layer.bias
            for lname, layer in stage["hourglass"].layers():
                yield f"stage{s}.hourglass.{lname}.weight", layer.weight
                yield f"stage{s}.hourglass.{lname}.bias", layer.bias

    def parameter_count(self) -> int:
        return sum(t.size for _, t in self.named_tensors())

    def zero_residual_heads(self) -> None:
        """Zero the final conv of every refinement head (the initialized
        state; useful for structural tests after training)."""
        for s in (2, 1, 0):
            head = self.stages[s]["hourglass"].head2
            head.weight.data[...] = 0.0
            head.bias.data[...] = 0.0


def build(config: ModelConfig) -> ModelParams:
    """Deterministically initialize all parameters for ``config``."""
    return ModelParams(config)


def _stage_check(name: str, t: Tensor) -> Tensor:
    if debug_checks_enabled() and not np.all(np.isfinite(t.data)):
        raise NumericFailure(f"non-finite values after stage '{name}'")
    return t


def encode(params: ModelParams, image: Tensor):
    """Run the shared encoder; returns features at strides 2, 4, 8."""
    f1 = leaky_relu(params.conv1_1(leaky_relu(params.conv1(image))))
    f2 = leaky_relu(params.conv2_1(leaky_relu(params.conv2(f1))))
    f3 = leaky_relu(params.conv3_1(leaky_relu(params.conv3(f2))))
    return f1, f2, f3


def forward(params: ModelParams, left: Tensor, right: Tensor) -> DisparityPyramid:
    """Full forward pass on color-normalized stereo images."""
    cfg = params.config
    n, c, h, w = left.shape
    if left.shape != right.shape or c != 3:
        raise InvalidArgumentError("expected matching [N,3,H,W] image pairs")
    if (h, w) != (cfg.input_height, cfg.input_width):
        raise InvalidArgumentError(
            f"input extent {h}x{w} does not match config "
            f"{cfg.input_height}x{cfg.input_width}"
        )

    f1_l, f2_l, f3_l = encode(params, left)
    _, _, f3_r = encode(params, right)
    _stage_check("encoder", f3_l)

    d_levels = cfg.disparity_levels
    vols = []
    if cfg.use_correlation:
        vols.append(correlation_volume(f3_l, f3_r, d_levels))
    if cfg.use_concat_volume:
        cvol = concat_volume(f3_l, f3_r, d_levels)
        vols.append(squeeze_aggregate(cvol, params.squeeze))
    if len(vols) == 2:
        volume = combine(vols[0], vols[1]).data
    else:
        volume = vols[0].data
    _stage_check("cost-volume", volume)

    dec = leaky_relu(params.agg2(leaky_relu(params.agg1(volume))))
    d_coarse = params.disp_head(dec)
    _stage_check("initial-regression", d_coarse)

    disparities = [None, None, None, d_coarse]
    residuals = [None, None, None]
    error_maps = [None, None, None]
    feat, d_prev = dec, d_coarse
    for s in (2, 1, 0):
        stage = params.stages[s]
        hs, ws = h // 2**s, w // 2**s
        left_s = downsample_inputs(left, s)
        right_s = downsample_inputs(right, s)
        d_up = mul(bilinear_upsample(d_prev, hs, ws), 2.0)

        if s in cfg.error_map_scales:
            warped, mask = warp_right_to_left(right_s, d_up)
            emap = error_map(warped, left_s, mask, scale=s)
        else:
            emap = ErrorMap(
                data=Tensor(np.zeros((n, 3, hs, ws))),
                scale=s,
                valid_mask=Tensor(np.ones((n, 1, hs, ws))),
            )

        attn_in = make_attention_input(left_s, right_s, emap.data, d_up)
        upfeat = leaky_relu(stage["deconv"](feat))
        skip = {2: f2_l, 1: f1_l, 0: left}[s]
        f_r = concat([upfeat, skip, attn_in], axis=1)
        if cfg.use_attention:
            logits = attention_vector(attn_in, stage["attention"])
            f_ar = apply_attention(f_r, logits)
        else:
            f_ar = f_r
        r = hourglass2d(f_ar, stage["hourglass"])
        if cfg.use_residual:
            d_s = d_up + r
            residuals[s] = r
        else:
            d_s = r  # direct per-scale regression
            residuals[s] = None
        _stage_check(f"refinement-scale{s}", d_s)

        disparities[s] = d_s
        error_maps[s] = emap
        feat, d_prev = f_ar, d_s

    return DisparityPyramid(disparities, residuals, error_maps)


def infer(params: ModelParams, left: Tensor, right: Tensor) -> Tensor:
    """Forward without tape recording; returns the full-resolution map."""
    with no_grad():
        return forward(params, left, right).disparities[0]


# -- checkpoint format -------------------------------------------------
#
# magic "SKCKPT1\n", 8-byte little-endian header length, JSON header
# {"config": {...}, "tensors": [[name, [shape...]], ...]}, then the tensor
# payloads as little-endian float64 in header order.

_MAGIC = b"SKCKPT1\n"


def save_checkpoint(path, params: ModelParams) -> None:
    names = list(params.named_tensors())
    header = {
        "config": {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in vars(params.config).items()
        },
        "tensors": [[name, list(t.shape)] for name, t in names],
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, t in names:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen))
        cfg_dict = dict(header["config"])
        cfg_dict["error_map_scales"] = tuple(cfg_dict["error_map_scales"])
        config = ModelConfig(**cfg_dict)
        params = build(config)
        own = dict(params.named_tensors())
        stored = {name: tuple(shape) for name, shape in header["tensors"]}
        for name, t in own.items():
            if stored.get(name) != t.shape:
                raise FormatError(
                    f"{path}: tensor {name} has shape {stored.get(name)}, "
                    f"expected {t.shape}"
                )
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise FormatError(f"{path}: truncated payload for {name}")
            own[name].data[...] = np.frombuffer(buf, dtype="<f8").reshape(shape)
    return params
