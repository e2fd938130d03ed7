"""Component-ablation and error-map-scale comparison harnesses.

Each named variant toggles a subset of {correlation volume, squeezed
concatenation volume, residual refinement, attention gating}; all variants
train on the identical sample sequence, certified by the data-stream
checksum, so metric differences are attributable to the architecture alone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidArgumentError
from .model import ModelConfig
from .train import LossWeights, SCENEFLOW_WEIGHTS, train_model

# Ablation presets, in report row order. Keys: which cost volumes feed the
# initial regression, whether refinement stages add residuals to the
# upsampled estimate (vs regressing each scale directly), and whether the
# residual features are attention-gated.
VARIANTS = {
    "EDNet-NRS": dict(use_correlation=True, use_concat_volume=False,
                      use_residual=False, use_attention=False),
    "EDNet-NRCo": dict(use_correlation=False, use_concat_volume=True,
                       use_residual=False, use_attention=False),
    "EDNet-NR": dict(use_correlation=True, use_concat_volume=True,
                     use_residual=False, use_attention=False),
    "EDNet-NA": dict(use_correlation=True, use_concat_volume=True,
                     use_residual=True, use_attention=False),
    "EDNet-NS": dict(use_correlation=True, use_concat_volume=False,
                     use_residual=True, use_attention=True),
    "EDNet-F": dict(use_correlation=True, use_concat_volume=True,
                    use_residual=True, use_attention=True),
}


@dataclass
class AblationRow:
    name: str
    epe: float
    rate_1px: float
    rate_3px: float
    steps: int
    train_checksum: str


@dataclass
class AblationReport:
    rows: list

    def table(self) -> str:
        lines = [f"{'variant':<12} {'EPE':>7} {'>1px%':>7} {'>3px%':>7}"]
        for r in self.rows:
            lines.append(
                f"{r.name:<12} {r.epe:>7.3f} {r.rate_1px:>7.2f} {r.rate_3px:>7.2f}"
            )
        return "\n".join(lines)


def run_ablation(
    base_config: ModelConfig,
    variants=None,
    steps: int = 500,
    data_seed: int = 1234,
    train_samples: int = 2000,
    val_samples: int = 200,
    max_disparity_px: float = 16.0,
    base_lr: float = 1e-3,
    weights: LossWeights = SCENEFLOW_WEIGHTS,
    eval_subset: int = 32,
    progress=None,
) -> AblationReport:
    """Train every variant identically and tabulate EPE / >1px / >3px.

    All runs share data_seed, so the stream checksums must agree; a mismatch
    means the runs did not see the same data and the report is invalid.
    """
    names = list(VARIANTS) if variants is None else list(variants)
    unknown = [n for n in names if n not in VARIANTS]
    if unknown:
        raise InvalidArgumentError(f"unknown ablation variants: {unknown}")
    rows = []
    for name in names:
        config = base_config.with_overrides(**VARIANTS[name])
        result = train_model(
            config, steps=steps, base_lr=base_lr, weights=weights,
            data_seed=data_seed, train_samples=train_samples,
            val_samples=val_samples, max_disparity_px=max_disparity_px,
            eval_every=0, eval_subset=eval_subset,
        )
        rows.append(AblationRow(
            name=name,
            epe=result.val_metrics["epe"],
            rate_1px=result.val_metrics[">1px"],
            rate_3px=result.val_metrics[">3px"],
            steps=result.steps_run,
            train_checksum=result.train_checksum,
        ))
        if progress:
            progress(rows[-1])
    checksums = {r.train_checksum for r in rows}
    if len(checksums) != 1:
        raise InvalidArgumentError(
            "ablation runs consumed different sample sequences"
        )
    return AblationReport(rows=rows)


def compare_error_map_scales(
    base_config: ModelConfig,
    scale_sets=((), (0,), (0, 1), (0, 1, 2)),
    steps: int = 500,
    data_seed: int = 1234,
    **train_kwargs,
) -> dict:
    """Train one model per error-map scale set and collect loss curves.

    Returns {label: {"scales", "loss_curve", "epe", "checksum"}}; the label
    "n scales" counts how many refinement stages receive a real
    reconstruction-error map (the rest get zeros).
    """
    out = {}
    for scales in scale_sets:
        config = base_config.with_overrides(error_map_scales=tuple(scales))
        result = train_model(
            config, steps=steps, data_seed=data_seed, eval_every=0,
            **train_kwargs,
        )
        label = f"{len(scales)} scales" if len(scales) != 1 else "1 scale"
        out[label] = {
            "scales": tuple(scales),
            "loss_curve": [rec["loss"] for rec in result.history],
            "epe": result.val_metrics["epe"],
            "checksum": result.train_checksum,
        }
    return out
