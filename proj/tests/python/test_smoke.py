import json
import math
import os
from pathlib import Path

import pytest

import crdaudit

ROOT = Path(os.environ.get("CRD_SOURCE_DIR", Path(__file__).resolve().parents[2]))
DATA = ROOT / "data"


@pytest.fixture(scope="module")
def tax():
    return crdaudit.Taxonomy.load(DATA / "taxonomy.json")


def test_dpo_identity_and_gradient():
    r = crdaudit.dpo_loss(-3.0, -7.0, -3.0, -7.0, 0.1)
    assert abs(r["loss"] - math.log(2)) < 1e-12
    assert r["margin_prob"] == 0.5
    gw, gl = crdaudit.dpo_grad(-3.0, -7.0, -3.0, -7.0, 0.1)
    assert gw == pytest.approx(-0.05) and gl == pytest.approx(0.05)
    worked = crdaudit.dpo_loss(-9.0, -11.0, -10.0, -10.0)
    assert worked["loss"] == pytest.approx(0.598139, abs=5e-7)


def test_sft_and_errors():
    assert crdaudit.sft_loss([-math.log(100)] * 9) == pytest.approx(math.log(100), abs=1e-12)
    with pytest.raises(crdaudit.ValidationError):
        crdaudit.sft_loss([0.5])
    with pytest.raises(crdaudit.Error):
        crdaudit.batch_mean([])


def test_taxonomy(tax):
    assert len(tax.categories) == 9
    assert len(tax.fine_descriptors) == 30
    assert len(tax.apple_descriptors) == 12
    assert len(tax.expand("alcohol_tobacco_drugs")) == 6
    assert not tax.severity_supported("contests")


def test_parsing(tax):
    out = crdaudit.parse_generation("free text\nPRESENT: no")
    assert out["present"] is False and out["parse_path"] == "fallback"
    assert crdaudit.parse_generation("nothing") is None
    p = crdaudit.parse_prediction("PRESENT: yes SEVERITY: mild", tax, "realistic_violence")
    assert p == {"present": True, "severity": "mild", "unparsed": False}


def test_metrics(tax):
    labels = {f"a{i}": v for i, v in enumerate([True] * 4 + [False] * 6)}
    preds = {f"a{i}": v for i, v in enumerate([True] * 3 + [False] * 6 + [True])}
    m = crdaudit.binary_metrics(preds, labels)
    assert (m["tp"], m["fn"], m["tn"], m["fp"]) == (3, 1, 5, 1)
    assert m["r_pos"] == 0.75 and m["p_neg"] == pytest.approx(5 / 6)
    mc = crdaudit.multiclass_metrics({"x": (True, "mild")}, {"x": (True, "mild")}, tax, "realistic_violence")
    assert mc["p_mild"] == 1.0 and mc["p_strong"] is None
    with pytest.raises(crdaudit.ValidationError):
        crdaudit.multiclass_metrics({"x": True}, {"x": True}, tax, "real_gambling")
    avg = crdaudit.macro_average([0.2, None, 0.4])
    assert avg["mean"] == pytest.approx(0.3) and avg["excluded"] == 1
    assert crdaudit.round_half_up(51.045) == pytest.approx(51.05)


def test_run_stage(tmp_path):
    cfg = ROOT / "configs" / "mock_pipeline.json"
    with pytest.raises(crdaudit.PreconditionError):
        crdaudit.run_stage(cfg, "filter", {"output_dir": str(tmp_path)})
    s = crdaudit.run_stage(cfg, "ingest", {"output_dir": str(tmp_path)})
    assert s["counts"]["tasks"] == 180
    assert (tmp_path / "tasks.jsonl").exists()
    audit = crdaudit.run_stage(cfg, "audit", {"output_dir": str(tmp_path)})
    assert audit["counts"]["apps_flagged"] == 3
    report = json.loads((tmp_path / "audit_report.json").read_text())
    assert report["flagged_apps"] == ["app-003", "app-016", "app-026"]
