from __future__ import annotations

import json

import pytest

from geogap.cli import main, parse_config_file
from geogap.corpus import save_dataset
from geogap.embeddings import save_cache
from synthdata import clustered_corpus


@pytest.fixture
def workspace(tmp_path):
    """Dataset CSV + embedding cache + a small target slice on disk."""
    dataset, store = clustered_corpus(4, 3, 5, d=8, seed=1, spread=0.04)
    data = tmp_path / "corpus.csv"
    save_dataset(dataset, data)
    cache = tmp_path / "emb.bin"
    save_cache(cache, list(store.ids), store.submatrix(list(store.ids)))
    target_rows = [r for r in dataset.requirements if r.project_id == "proj0"]
    target = tmp_path / "target.csv"
    from geogap.corpus import Dataset
    save_dataset(Dataset(target_rows, dataset.taxonomy), target)
    return {"dir": tmp_path, "data": data, "cache": cache, "target": target,
            "dataset": dataset, "store": store}


def _build(ws, out_name="corpus.ggz", extra=()):
    out = ws["dir"] / out_name
    code = main(["build", "--data", str(ws["data"]), "--cache", str(ws["cache"]),
                 "--out", str(out), "--temperature", "0.05", "--k-s", "2",
                 "--seed", "3", *extra])
    return code, out


def test_build_writes_artifact(workspace, capsys):
    code, out = _build(workspace)
    assert code == 0
    assert out.exists()
    printed = capsys.readouterr().out
    assert "N=60 M=4 K_t=3 K_s=2" in printed


def test_build_is_deterministic(workspace):
    code1, out1 = _build(workspace, "a.ggz")
    code2, out2 = _build(workspace, "b.ggz")
    assert code1 == code2 == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_build_missing_embedding_names_id(workspace, capsys):
    dataset, store = workspace["dataset"], workspace["store"]
    short = workspace["dir"] / "short.bin"
    ids = list(store.ids)[:-1]
    save_cache(short, ids, store.submatrix(ids))
    code = main(["build", "--data", str(workspace["data"]), "--cache", str(short),
                 "--out", str(workspace["dir"] / "x.ggz"), "--temperature", "0.05"])
    assert code == 2
    assert store.ids[-1] in capsys.readouterr().err


def test_score_small_target_warns_but_reports(workspace, capsys):
    _, art = _build(workspace)
    report_path = workspace["dir"] / "report.json"
    code = main(["score", "--artifact", str(art), "--data", str(workspace["target"]),
                 "--cache", str(workspace["cache"]), "--out", str(report_path),
                 "--temperature", "0.05"])
    err = capsys.readouterr().err
    assert "unreliable below 50" in err
    assert report_path.exists()
    report = json.loads(report_path.read_text())
    assert len(report["ranking"]) == 3
    # target covers every type of a symmetric corpus: no gap above threshold
    assert code == 0


def test_score_large_target_has_no_size_warning(workspace, tmp_path, capsys):
    _, art = _build(workspace)
    # the 60-row corpus file itself is a >=50 target: no reliability warning
    code = main(["score", "--artifact", str(art), "--data", str(workspace["data"]),
                 "--cache", str(workspace["cache"]), "--out",
                 str(tmp_path / "r.json"), "--temperature", "0.05"])
    assert code in (0, 4)
    assert "unreliable" not in capsys.readouterr().err


def test_score_flags_gaps_with_exit_code_four(workspace, tmp_path):
    _, art = _build(workspace)
    # deplete type0 from the target entirely
    from geogap.corpus import Dataset, load_dataset, save_dataset
    target = load_dataset(workspace["target"])
    rows = [r for r in target.requirements if r.type_label != "type0"]
    depleted = tmp_path / "depleted.csv"
    save_dataset(Dataset(rows, target.taxonomy), depleted)
    code = main(["score", "--artifact", str(art), "--data", str(depleted),
                 "--cache", str(workspace["cache"]), "--out",
                 str(tmp_path / "r.json"), "--temperature", "0.05"])
    assert code == 4


def test_score_missing_artifact_exits_two(workspace, capsys):
    code = main(["score", "--artifact", str(workspace["dir"] / "nope.ggz"),
                 "--data", str(workspace["target"]),
                 "--cache", str(workspace["cache"])])
    assert code == 2


def test_score_mode_b_and_svg(workspace, tmp_path):
    _, art = _build(workspace)
    svg = tmp_path / "grid.svg"
    code = main(["score", "--artifact", str(art), "--data", str(workspace["target"]),
                 "--cache", str(workspace["cache"]), "--mode", "B", "--tau", "0.2",
                 "--out", str(tmp_path / "r.json"), "--svg", str(svg),
                 "--temperature", "0.05"])
    assert code in (0, 4)
    assert svg.read_text().startswith("<svg")
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["mode"] == "B"


def test_eval_type_level_outputs_and_determinism(workspace, tmp_path):
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    args = ["eval", "type-level", "--data", str(workspace["data"]),
            "--cache", str(workspace["cache"]), "--temperature", "0.05",
            "--k-s", "2", "--seed", "7", "--f", "1.0", "--n-targets", "1"]
    assert main(args + ["--out-dir", str(out1)]) == 0
    assert main(args + ["--out-dir", str(out2)]) == 0
    records1 = (out1 / "type_level.jsonl").read_text()
    assert records1 == (out2 / "type_level.jsonl").read_text()
    summary = json.loads((out1 / "type_level.summary.json").read_text())
    assert summary["n_folds"] == 4
    assert (out1 / "type_level.csv").exists()


def test_eval_baseline_on_identical_folds(workspace, tmp_path):
    out = tmp_path / "base"
    code = main(["eval", "baseline", "--name", "gt-count",
                 "--data", str(workspace["data"]), "--cache", str(workspace["cache"]),
                 "--temperature", "0.05", "--k-s", "2", "--seed", "7",
                 "--n-targets", "1", "--out-dir", str(out)])
    assert code == 0
    assert (out / "baseline_gt_count.summary.json").exists()


def test_eval_unknown_baseline_lists_names(workspace, capsys):
    code = main(["eval", "baseline", "--name", "bogus",
                 "--data", str(workspace["data"]), "--cache", str(workspace["cache"])])
    assert code == 1
    err = capsys.readouterr().err
    assert "mmd" in err and "tfidf-knn" in err


def test_unknown_experiment_is_usage_error(workspace, capsys):
    code = main(["eval", "no-such-thing", "--data", str(workspace["data"]),
                 "--cache", str(workspace["cache"])])
    assert code == 1


def test_help_is_available_everywhere(capsys):
    for args in (["--help"], ["build", "--help"], ["score", "--help"],
                 ["eval", "--help"]):
        assert main(args) == 0
        assert "usage" in capsys.readouterr().out.lower()


def test_config_file_merging(workspace, tmp_path, capsys):
    cfg = tmp_path / "geogap.toml"
    cfg.write_text('k = 1\nbeta = 0.9\ntemperature = 0.05\nk_s = 2\n'
                   '[aliases]\nT0 = "type0"\n', encoding="utf-8")
    parsed = parse_config_file(cfg)
    assert parsed["beta"] == 0.9
    assert parsed["aliases"]["T0"] == "type0"
    out = tmp_path / "cfg.ggz"
    code = main(["build", "--data", str(workspace["data"]),
                 "--cache", str(workspace["cache"]), "--config", str(cfg),
                 "--out", str(out), "--seed", "3"])
    assert code == 0


def test_preset_sets_fusion_weights(workspace, tmp_path):
    _, art = _build(workspace)
    out = tmp_path / "r.json"
    code = main(["score", "--artifact", str(art), "--data", str(workspace["target"]),
                 "--cache", str(workspace["cache"]), "--preset", "geogap-g",
                 "--out", str(out), "--temperature", "0.05"])
    assert code in (0, 4)
    report = json.loads(out.read_text())
    assert report["config"]["beta"] == 1.0
    assert report["config"]["gamma"] == 0.0
