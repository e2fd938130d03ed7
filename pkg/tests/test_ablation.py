import pytest

from stereokit.ablation import (
    VARIANTS,
    AblationReport,
    compare_error_map_scales,
    run_ablation,
)
from stereokit.errors import InvalidArgumentError
from stereokit.model import ModelConfig

TINY = ModelConfig(max_disparity=8, width_multiplier=0.25,
                   input_height=16, input_width=32, seed=2)

TINY_RUN = dict(steps=4, train_samples=6, val_samples=3,
                max_disparity_px=3.0, data_seed=77)


def test_variant_table_is_complete():
    assert list(VARIANTS) == ["EDNet-NRS", "EDNet-NRCo", "EDNet-NR",
                              "EDNet-NA", "EDNet-NS", "EDNet-F"]
    # every variant keeps at least one cost volume
    for toggles in VARIANTS.values():
        assert toggles["use_correlation"] or toggles["use_concat_volume"]


def test_run_ablation_rows_and_checksums():
    report = run_ablation(TINY, variants=["EDNet-NR", "EDNet-F"],
                          steps=4, train_samples=6, val_samples=3,
                          max_disparity_px=3.0, data_seed=77, eval_subset=3)
    assert isinstance(report, AblationReport)
    assert [r.name for r in report.rows] == ["EDNet-NR", "EDNet-F"]
    # identical sample sequence across variants, by construction
    assert report.rows[0].train_checksum == report.rows[1].train_checksum
    text = report.table()
    assert "EDNet-NR" in text and "EPE" in text


def test_run_ablation_rejects_unknown_variant():
    with pytest.raises(InvalidArgumentError):
        run_ablation(TINY, variants=["EDNet-XL"], steps=1)


def test_error_map_scale_comparison_structure():
    report = compare_error_map_scales(
        TINY, scale_sets=((), (0, 1, 2)), **TINY_RUN)
    assert set(report) == {"0 scales", "3 scales"}
    for entry in report.values():
        assert len(entry["loss_curve"]) == 4
        assert entry["epe"] >= 0
    assert (report["0 scales"]["checksum"]
            == report["3 scales"]["checksum"])
