import json

import pytest

from conftest import pool, traj
from uigaug.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, env_overrides, main
from uigaug.ingest import read_jsonl, write_jsonl
from uigaug.synth import SynthConfig, write_pens_files
from uigaug.uig import ProvenanceKind


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def ingested(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    raw = write_pens_files(SynthConfig(n_users=30, n_docs=120, seed=3), root / "raw")
    out = root / "pool"
    code = run("ingest", "--behaviors", raw["behaviors"], "--news", raw["news"], "--gold", raw["gold"], "--out-dir", out)
    assert code == EXIT_OK
    return out


def test_ingest_outputs_and_manifest(ingested):
    names = sorted(p.name for p in ingested.iterdir())
    assert names == ["docs.jsonl", "manifest.json", "summaries.jsonl", "trajectories.jsonl", "validation.json"]
    m = json.loads((ingested / "manifest.json").read_text())
    assert m["command"] == "ingest" and m["seed"] == 0 and len(m["inputs"]) == 3
    assert all(len(h) == 64 for h in m["inputs"].values())
    assert json.loads((ingested / "validation.json").read_text())["violations"] == []


def test_ingest_oai_and_missing_inputs(tmp_path, capsys):
    rows = [
        {"post": "P1", "rater": "r", "policy": "a", "summary_text": "x y", "confidence": 7, "title": "T1", "topic": "q"},
        {"post": "P2", "rater": "r", "policy": "a", "summary_text": "z w", "confidence": 6, "title": "T2", "topic": "q"},
    ]
    (tmp_path / "r.jsonl").write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    assert run("ingest", "--dataset-style", "oai", "--threshold", 6, "--ratings", tmp_path / "r.jsonl", "--out-dir", tmp_path / "o") == EXIT_OK
    labels = sorted(e["action"] for e in json.loads((tmp_path / "o" / "trajectories.jsonl").read_text())["events"])
    assert labels == ["click", "gensumm", "skip", "summgen"]
    assert run("ingest", "--behaviors", tmp_path / "r.jsonl", "--out-dir", tmp_path / "x") == EXIT_USAGE
    assert "doc table" in capsys.readouterr().err


def test_augment_seeded_twice_identical(ingested, tmp_path):
    args = ["augment", "--input", ingested, "--ds.gap", 25, "--ds.len", 150, "--smp.k", 10, "--smp.lambda", 0.3, "--smp.p", 0.8, "--seed", 7]
    assert run(*args, "--out-dir", tmp_path / "a") == EXIT_OK
    assert run(*args, "--out-dir", tmp_path / "b", "--jobs", 3) == EXIT_OK
    for name in ("trajectories.jsonl", "summaries.jsonl", "augment_report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    kinds = {t.provenance.kind for t in read_jsonl(tmp_path / "a").trajectories}
    assert ProvenanceKind.DSSMP in kinds


def test_no_smp_provenance(ingested, tmp_path):
    assert run("augment", "--input", ingested, "--no-smp", "--once", "--ds.len", 40, "--out-dir", tmp_path) == EXIT_OK
    pool_out = read_jsonl(tmp_path)
    assert {t.provenance.kind for t in pool_out.trajectories} == {ProvenanceKind.DS}


def test_config_errors_listed_together(ingested, tmp_path, capsys):
    code = run("augment", "--input", ingested, "--ds.m", 1, "--smp.p", 2, "--smp.k", 0, "--out-dir", tmp_path)
    err = capsys.readouterr().err
    assert code == EXIT_USAGE
    assert "ds.m" in err and "smp.p" in err and "smp.k" in err
    assert run("augment", "--input", ingested, "--bogus") == EXIT_USAGE
    assert run("augment", "--input", tmp_path / "nope", "--out-dir", tmp_path / "n") == EXIT_USAGE


def test_runtime_failure_exit_one(ingested, tmp_path):
    assert run("augment", "--input", ingested, "--ds.m", 500, "--no-smp", "--out-dir", tmp_path) == EXIT_RUNTIME


def test_settings_precedence(ingested, tmp_path, monkeypatch):
    cfg = tmp_path / "c.toml"
    cfg.write_text("seed = 4\n[ds]\ngap = 9\ntarget_len = 30\n")
    monkeypatch.setenv("UIGAUG_DS__GAP", "11")
    assert run("augment", "--input", ingested, "--config", cfg, "--no-smp", "--ds.len", 20, "--out-dir", tmp_path / "o") == EXIT_OK
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["config"]["seed"] == 4
    assert m["config"]["ds"]["gap"] == 11
    assert m["config"]["ds"]["target_len"] == 20
    assert env_overrides({"UIGAUG_SMP__LAMBDA": "0.5", "OTHER": "1"}) == {"smp": {"lambda": 0.5}}


def test_diversity_identical_topics(tmp_path):
    trs = [traj(f"u{i}", f"CLK:a{i} CLK:b{i} GSM:b{i} SMG:s{i} CLK:c{i} GSM:c{i} SMG:t{i}") for i in range(3)]
    docs = {f"{x}{i}": "same" for x in "abc" for i in range(3)}
    write_jsonl(pool(*trs, topics=docs), tmp_path / "p")
    assert run("diversity", "--input", tmp_path / "p", "--out-dir", tmp_path / "d") == EXIT_OK
    rep = json.loads((tmp_path / "d" / "diversity.json").read_text())
    assert rep["tp"] == 1.0 and rep["rtc"] == 0.0 and rep["degreed"] > 0
    assert (tmp_path / "d" / "diversity.csv").read_text().startswith("tp,rtc,degreed")


def test_score_flags_degenerate(tmp_path):
    rec = {
        "doc_id": "D",
        "users": ["a", "b", "c"],
        "gold": {"a": "one two three", "b": "four five six", "c": "seven eight nine"},
        "generated": {u: "same words here" for u in "abc"},
        "doc_title": "title",
        "doc_body": ["body text here."],
    }
    (tmp_path / "i.jsonl").write_text(json.dumps(rec) + "\n")
    assert run("score", "--instances", tmp_path / "i.jsonl", "--out-dir", tmp_path / "s") == EXIT_OK
    rep = json.loads((tmp_path / "s" / "perseval.json").read_text())
    assert rep["degenerate"] == ["D"] and rep["system_degress"] < 1e-6
    assert run("score", "--instances", tmp_path / "i.jsonl", "--alpha-exp", 2, "--out-dir", tmp_path / "t") == EXIT_USAGE


def test_rank_and_correlate(tmp_path):
    (tmp_path / "s.csv").write_text("user,doc,score,label\na,x,0.9,1\na,y,0.1,0\nb,x,0.2,1\nb,y,0.4,0\n")
    assert run("rank", "--scores", tmp_path / "s.csv", "--k", 1, 2, "--out-dir", tmp_path / "r") == EXIT_OK
    rep = json.loads((tmp_path / "r" / "rank.json").read_text())
    assert rep["auc"] == 0.5 and rep["mrr"] == 0.75 and set(rep["ndcg"]) == {"@1", "@2"}
    labels = [f"D{i}" for i in range(5)]
    (tmp_path / "div.json").write_text(json.dumps({"degreed": {l: i for i, l in enumerate(labels)}}))
    (tmp_path / "acc.json").write_text(json.dumps({l: i * i for i, l in enumerate(labels)}))
    assert run("correlate", "--diversity", tmp_path / "div.json", "--accuracy", tmp_path / "acc.json", "--out-dir", tmp_path / "c") == EXIT_OK
    rows = json.loads((tmp_path / "c" / "correlations.json").read_text())
    assert rows[0]["spearman"] == 1.0 and rows[0]["kendall"] == 1.0
    (tmp_path / "acc2.json").write_text(json.dumps({"D0": 1}))
    assert run("correlate", "--diversity", tmp_path / "div.json", "--accuracy", tmp_path / "acc2.json", "--out-dir", tmp_path / "c2") == EXIT_USAGE


def test_stability_pure_scaling(tmp_path):
    dirs = []
    for n in range(3):
        trs = [traj(f"u{i}", " ".join(f"CLK:d{n}{i}{k} GSM:d{n}{i}{k} SMG:s{n}{i}{k}" for k in range(2 + n))) for i in range(3)]
        write_jsonl(pool(*trs), tmp_path / f"p{n}")
        dirs.append(tmp_path / f"p{n}")
    (tmp_path / "acc.json").write_text(json.dumps({"p0": 0.3, "p1": 0.9, "p2": 0.5}))
    code = run("stability", "--inputs", *dirs, "--scale", 2.0, "--accuracy", tmp_path / "acc.json", "--out-dir", tmp_path / "s")
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "s" / "stability.json").read_text())
    assert rep["band"] == [1.0, 1.0] and rep["squeeze_pass"]
    assert rep["rank"]["identical_ranking"]
    for name in ("spearman", "kendall"):
        assert rep["correlations"][name]["F"] == rep["correlations"][name]["G"]
    assert rep["correlations"]["pearson"]["G"] == pytest.approx(rep["correlations"]["pearson"]["F"], abs=1e-9)
    assert run("stability", "--inputs", *dirs, "--scale", 0, "--out-dir", tmp_path / "z") == EXIT_USAGE


def test_shared_flags_before_or_after_command(ingested, tmp_path):
    assert run("--seed", 5, "--out-dir", tmp_path / "a", "augment", "--input", ingested, "--no-smp") == EXIT_OK
    assert run("augment", "--input", ingested, "--no-smp", "--seed", 5, "--out-dir", tmp_path / "b") == EXIT_OK
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 5
    assert (tmp_path / "a" / "trajectories.jsonl").read_bytes() == (tmp_path / "b" / "trajectories.jsonl").read_bytes()


def test_report_index(ingested, tmp_path):
    assert run("report", "--runs", ingested, "--out-dir", tmp_path) == EXIT_OK
    text = (tmp_path / "report.md").read_text()
    assert "command: `ingest`" in text
