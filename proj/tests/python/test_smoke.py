import json
import math
from pathlib import Path

import pytest

import tlbench

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

CAMPAIGN = """
defaults:
  seeds: [1, 50]
  model: {d_model: 8, n_heads: 2, encoder_layers: 1, decoder_layers: 1, ff_dim: 16, lookback: 24}
  train: {pretrain_lr: 3.0e-3, finetune_lr: 1.0e-3, batch_size: 16, max_epochs: 1,
          finetune_max_epochs: 1, max_batches_per_epoch: 3, max_eval_windows: 16}
datasets:
  - {id: A, sinusoid: {length: 480, seed: 1}}
  - {id: B, sinusoid: {length: 480, phase: 5.0, seed: 2}}
plans:
  - {name: base, strategy: S1, sources: [B], target: B}
  - {name: ft, strategy: S7, sources: [A], target: B}
"""


def test_metrics_match_python():
    p = [0.5, -1.0, 2.0]
    a = [0.0, 1.0, 2.5]
    assert tlbench.mae(p, a) == pytest.approx(sum(abs(x - y) for x, y in zip(p, a)) / 3)
    assert tlbench.mse(p, a) == pytest.approx(sum((x - y) ** 2 for x, y in zip(p, a)) / 3)
    assert tlbench.format_pct(tlbench.improvement_pct(0.305, 0.291)) == "+4.6%"
    assert tlbench.patch_count(96, 16, 8) == 11


def test_gradcheck_all_architectures():
    for arch in ("vanilla", "informer", "patchtst"):
        result = tlbench.gradcheck(arch)
        assert result["entries"] > 0
        assert result["worst_relative_error"] < 1e-4


def test_clean_csv_reports_removals(tmp_path):
    out = tlbench.clean_csv(FIXTURES / "messy_site.csv", tmp_path, max_zeros=50)
    assert out["dropped_sparse"] == ["sparse"]
    assert out["dropped_zero"] == ["flat"]
    assert out["interpolated_cells"] == 3
    assert (out["buildings"], out["rows"]) == (2, 200)
    sidecar = json.loads(Path(out["sidecar"]).read_text())
    assert sidecar["removed"]["zero"] == ["flat"]


def test_campaign_round_trip(tmp_path):
    config = tmp_path / "campaign.yaml"
    config.write_text(CAMPAIGN)
    assert [d.split()[0] for d in tlbench.plan_descriptors(config)] == ["base", "ft"]

    root = tmp_path / "out"
    first = tlbench.run_campaign(config, output_root=root, parallel=2)
    assert (first["plans"], first["trained"], first["failures"]) == (2, 4, 0)
    again = tlbench.run_campaign(config, output_root=root)
    assert (again["trained"], again["reused"]) == (0, 4)

    reports, warnings = tlbench.collect_reports(root)
    assert warnings == []
    assert {r["strategy"] for r in reports} == {"baseline", "S7"}
    for r in reports:
        assert r["mae"] == pytest.approx(sum(s[1] for s in r["seeds"]) / len(r["seeds"]))
        assert math.isfinite(r["mse"])


def test_errors_are_typed(tmp_path):
    with pytest.raises(tlbench.ConfigError, match="unknown dataset 'Missing'"):
        tlbench.run_campaign(FIXTURES / "bad_campaign.yaml", output_root=tmp_path)
    bad = tmp_path / "bad.yaml"
    bad.write_text(CAMPAIGN.replace("strategy: S7", "strategy: S9"))
    with pytest.raises(tlbench.ConfigError, match=r"plans\[1\]\.strategy"):
        tlbench.plan_descriptors(bad)
    with pytest.raises(tlbench.Error):
        tlbench.clean_csv(tmp_path / "missing.csv", tmp_path)
