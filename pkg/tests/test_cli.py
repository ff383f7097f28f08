import json

import numpy as np
import pytest

from locvlad.cli import main
from locvlad.embedding import encode_vlad, load_embeddings
from locvlad.evaluation import MetricsReport
from locvlad.features import FeatureSet, save_features
from locvlad.manifest import load_manifest
from locvlad.vocabulary import load_vocabulary

SYNTH = ["--classes", "4", "--db-per-class", "3", "--queries-per-class", "2", "--signature", "10", "--dim", "8",
         "--border-db", "4", "--border-query", "12", "--seed", "3"]


@pytest.fixture
def dataset(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "ds"), *SYNTH]) == 0
    return tmp_path / "ds" / "manifest.json"


def _vocab(tmp_path, manifest, k=4, sub="1.0"):
    out = tmp_path / f"v{k}_{sub}.vlvc"
    assert main(["build-vocab", "--manifest", str(manifest), "--k", str(k), "--subsample", sub, "--seed", "1", "--out", str(out)]) == 0
    return out


def test_synth_defaults(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "d")]) == 0
    m = load_manifest(tmp_path / "d" / "manifest.json")
    assert (len(m.images), len({e.cls for e in m.images})) == (100, 20)
    assert "100 database images" in capsys.readouterr().out


def test_synth_seed_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--seed", "7", "--classes", "3"]) == 0
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_build_vocab(tmp_path, dataset, capsys):
    out = _vocab(tmp_path, dataset, k=1)
    vocab = load_vocabulary(out)
    m = load_manifest(dataset)
    pool = np.concatenate([m.load(e).descriptors for e in m.images]).astype(np.float64)
    np.testing.assert_allclose(vocab.centroids[0], pool.mean(0), rtol=1e-6, atol=1e-6)
    assert "elapsed=" in capsys.readouterr().out
    again = _vocab(tmp_path, dataset, k=1)
    assert out.read_bytes() == again.read_bytes()


def test_build_vocab_train_size_scales(tmp_path, dataset):
    full = load_vocabulary(_vocab(tmp_path, dataset, 4, "1.0")).train_size
    fifth = load_vocabulary(_vocab(tmp_path, dataset, 4, "0.2")).train_size
    assert abs(full / 5 - fifth) <= 1


def test_build_vocab_too_few(tmp_path, dataset, capsys):
    assert main(["build-vocab", "--manifest", str(dataset), "--k", "100000", "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("locvlad: error:") and "\n" not in err


def _embed(tmp_path, manifest, vocab, role, *flags, name=None):
    out = tmp_path / (name or f"{role}.vlem")
    assert main(["embed", "--manifest", str(manifest), "--vocab", str(vocab), "--role", role, "--out", str(out), *flags]) == 0
    return out


def test_embed_policies(tmp_path, dataset):
    vocab = _vocab(tmp_path, dataset)
    plain = _embed(tmp_path, dataset, vocab, "query", name="q_plain.vlem").read_bytes()
    unit_crop = _embed(tmp_path, dataset, vocab, "query", "--locvlad", "--crop", "1.0", name="q_c1.vlem").read_bytes()
    loc = _embed(tmp_path, dataset, vocab, "query", "--locvlad", "--crop", "0.7", name="q_loc.vlem").read_bytes()
    assert plain == unit_crop
    assert plain != loc
    db_plain = _embed(tmp_path, dataset, vocab, "database", name="db_plain.vlem").read_bytes()
    db_flag = _embed(tmp_path, dataset, vocab, "database", "--locvlad", "--crop", "0.7", name="db_flag.vlem").read_bytes()
    db_both = _embed(tmp_path, dataset, vocab, "database", "--locvlad", "--crop", "0.7", "--locvlad-on-db", name="db_both.vlem").read_bytes()
    assert db_plain == db_flag
    assert db_plain != db_both


def test_embed_matches_library(tmp_path, dataset):
    vocab_path = _vocab(tmp_path, dataset)
    vocab = load_vocabulary(vocab_path)
    entries = load_embeddings(_embed(tmp_path, dataset, vocab_path, "database"), vocab.d)
    m = load_manifest(dataset)
    for (image_id, v), e in zip(entries, m.images):
        assert image_id == e.id
        want = encode_vlad(m.load(e), vocab).values.astype(np.float32)
        np.testing.assert_array_equal(v.values, want)


def test_embed_uses_cropped_file(tmp_path, dataset):
    vocab = _vocab(tmp_path, dataset)
    data = json.loads(dataset.read_text())
    q0 = data["queries"][0]
    fs = load_manifest(dataset).load(load_manifest(dataset).queries[0])
    save_features(fs.subset(np.arange(fs.m) < 3), dataset.parent / "crop0.vlfd")
    q0["cropped_features_path"] = "crop0.vlfd"
    edited = dataset.parent / "edited.json"
    edited.write_text(json.dumps(data))
    a = load_embeddings(_embed(tmp_path, edited, vocab, "query", "--locvlad", name="a.vlem"))
    b = load_embeddings(_embed(tmp_path, dataset, vocab, "query", "--locvlad", name="b.vlem"))
    assert not np.array_equal(a[0][1].values, b[0][1].values)
    np.testing.assert_array_equal(a[1][1].values, b[1][1].values)


def test_embed_missing_file_names_id(tmp_path, dataset, capsys):
    vocab = _vocab(tmp_path, dataset)
    m = load_manifest(dataset)
    (dataset.parent / m.images[2].features_path).unlink()
    rc = main(["embed", "--manifest", str(dataset), "--vocab", str(vocab), "--role", "database", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert m.images[2].id in capsys.readouterr().err


def test_embed_dimension_mismatch(tmp_path, dataset, capsys):
    vocab = _vocab(tmp_path, dataset)
    m = load_manifest(dataset)
    e = m.images[0]
    save_features(FeatureSet(e.id, 640, 480, np.ones((1, 4)), np.ones((1, 3))), dataset.parent / e.features_path)
    rc = main(["embed", "--manifest", str(dataset), "--vocab", str(vocab), "--role", "database", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "dimension" in capsys.readouterr().err


def test_query_self_match(tmp_path, dataset, capsys):
    vocab = _vocab(tmp_path, dataset)
    index = _embed(tmp_path, dataset, vocab, "database")
    m = load_manifest(dataset)
    capsys.readouterr()
    target = m.images[4]
    assert main(["query", "--index", str(index), "--vocab", str(vocab), "--features", str(dataset.parent / target.features_path), "--top", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == f"1 {target.id} 0.000000"
    assert len(lines) == 3
    rank, _, dist = lines[1].split()
    assert rank == "2" and len(dist.split(".")[1]) == 6


def test_query_top_clamped(tmp_path, dataset, capsys):
    vocab = _vocab(tmp_path, dataset)
    index = _embed(tmp_path, dataset, vocab, "database")
    m = load_manifest(dataset)
    capsys.readouterr()
    assert main(["query", "--index", str(index), "--vocab", str(vocab), "--features",
                 str(dataset.parent / m.queries[0].features_path), "--top", "500", "--locvlad", "--crop", "0.7"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == len(m.images)


def test_evaluate_writes_report(tmp_path, dataset, capsys):
    vocab = _vocab(tmp_path, dataset)
    index = _embed(tmp_path, dataset, vocab, "database")
    out = tmp_path / "report.json"
    assert main(["evaluate", "--manifest", str(dataset), "--index", str(index), "--vocab", str(vocab), "--out", str(out), "--verbose"]) == 0
    report = MetricsReport.load(out)
    assert set(json.loads(out.read_text())) == {"map", "top1", "recall5x", "per_query"}
    assert len(report.per_query) == 8
    assert MetricsReport.from_json(report.to_json()) == report
    printed = capsys.readouterr().out
    assert "mAP" in printed and report.per_query[0].query_id in printed


def test_evaluate_single_class(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "one"), "--classes", "1", "--dim", "4", "--signature", "6"]) == 0
    manifest = tmp_path / "one" / "manifest.json"
    vocab = _vocab(tmp_path, manifest, k=3)
    index = _embed(tmp_path, manifest, vocab, "database")
    out = tmp_path / "r.json"
    assert main(["evaluate", "--manifest", str(manifest), "--index", str(index), "--vocab", str(vocab), "--out", str(out)]) == 0
    report = MetricsReport.load(out)
    assert report.top1 == 1.0 and report.map_score == 1.0


def test_evaluate_unknown_query_class(tmp_path, dataset, capsys):
    vocab = _vocab(tmp_path, dataset)
    index = _embed(tmp_path, dataset, vocab, "database")
    data = json.loads(dataset.read_text())
    data["queries"][0]["class"] = "nowhere"
    edited = dataset.parent / "bad.json"
    edited.write_text(json.dumps(data))
    assert main(["evaluate", "--manifest", str(edited), "--index", str(index), "--vocab", str(vocab)]) == 1
    assert "nowhere" in capsys.readouterr().err


def test_ablation_command(tmp_path, capsys):
    out = tmp_path / "abl"
    assert main(["ablation", "--out", str(out), "--k", "4", "8", *SYNTH]) == 0
    for name in ("ablation.json", "ablation.tsv", "ablation_metrics.png", "vocab_time.png"):
        assert (out / name).stat().st_size > 0
    rows = (out / "ablation.tsv").read_text().splitlines()
    assert rows[0].split("\t")[:3] == ["k", "crop", "method"]
    assert len(rows) == 1 + 2 * 3
    payload = json.loads((out / "ablation.json").read_text())
    assert [r["k"] for r in payload["runs"]] == [4, 8]


def test_bad_manifest(tmp_path, capsys):
    bad = tmp_path / "m.json"
    bad.write_text("{")
    assert main(["build-vocab", "--manifest", str(bad), "--k", "2", "--out", str(tmp_path / "v")]) == 1
    assert main(["build-vocab", "--manifest", str(tmp_path / "absent.json"), "--k", "2", "--out", str(tmp_path / "v")]) == 1
