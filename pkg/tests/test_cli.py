import csv
import io
import json

import numpy as np
import pytest

from conftest import result
from seqvis.cli import main
from seqvis.masks import rle_encode
from seqvis.metrics import EvalReport, evaluate, instance_recall
from seqvis.report import format_table
from seqvis.sequence import Annotation, load_results
from seqvis.synth import LATE_ENTRY, ScenarioConfig, generate_dataset, load_dataset, save_dataset


def test_generate(tmp_path, capsys):
    out = tmp_path / "g" / "d.json"
    assert main(["generate", "--out", str(out), "--videos", "2", "--frames", "6", "--seed", "4"]) == 0
    ds = load_dataset(out)
    assert len(ds.videos) == 2 and ds.videos[0].num_frames == 6
    assert "wrote 2 videos" in capsys.readouterr().out


def test_run_oracle_writes_results_and_report(small_path, small_dataset, tmp_path, capsys):
    res, rep = tmp_path / "r.json", tmp_path / "rep.json"
    code = main(["run", "--dataset", str(small_path), "--out", str(res), "--report", str(rep)])
    assert code == 0
    report = EvalReport.load(rep)
    assert report.ap == 1.0 and report.j_mean == 1.0
    assert report.meta["key_frames"] == 4
    assert len(load_results(res)) == len(small_dataset.annotations)
    assert "J&F" in capsys.readouterr().out


def test_run_same_seed_identical_json(small_path, tmp_path):
    args = ["run", "--dataset", str(small_path), "--propagator", "translation", "--score-noise", "0.3"]
    assert main(args + ["--out", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.json"), "--workers", "3"]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_config_file_and_flag_precedence(small_path, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": str(small_path), "key_frames": 2, "theta": 0.7}))
    rep = tmp_path / "rep.json"
    assert main(["run", "--config", str(cfg), "--key-frames", "3", "--report", str(rep)]) == 0
    meta = EvalReport.load(rep).meta
    assert (meta["key_frames"], meta["theta"]) == (3, 0.7)


@pytest.mark.parametrize(
    "extra",
    [["--theta", "1.5"], ["--key-frames", "0"], ["--max-instances", "0"], ["--workers", "0"]],
)
def test_invalid_config_exit_2(small_path, extra, capsys):
    assert main(["run", "--dataset", str(small_path)] + extra) == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["run", "--config", str(cfg)]) == 2


def test_dataset_errors_exit_3(small_dataset, tmp_path):
    assert main(["run", "--dataset", str(tmp_path / "missing.json")]) == 3
    path = save_dataset(small_dataset, tmp_path / "d.json")
    (tmp_path / "frames" / f"{small_dataset.videos[0].id}.rgb").write_bytes(b"short")
    assert main(["run", "--dataset", str(path)]) == 3


def test_reduce_and_eval(small_path, tmp_path, capsys):
    raw = tmp_path / "raw.json"
    assert main(["run", "--dataset", str(small_path), "--out", str(raw), "--theta", "1.0"]) == 0
    reduced = tmp_path / "red.json"
    assert main(["reduce", str(raw), "--out", str(reduced), "--max-output", "1"]) == 0
    kept = load_results(reduced)
    assert len(kept) == len({r.video_id for r in kept}) == 3
    capsys.readouterr()
    assert main(["reduce", str(raw)]) == 0
    assert isinstance(json.loads(capsys.readouterr().out), list)
    rep = tmp_path / "e.json"
    assert main(["eval", "--dataset", str(small_path), "--results", str(raw), "--out", str(rep)]) == 0
    assert EvalReport.load(rep).ap == 1.0


def test_eval_unknown_video_exit_3(small_path, tmp_path):
    bad = tmp_path / "bad.json"
    seg = {"size": [64, 64], "counts": [4096]}
    bad.write_text(json.dumps([{"video_id": "nope", "key_frame": 0, "slot": 0, "category_id": 1, "score": 1.0, "segmentations": [seg] * 10}]))
    assert main(["eval", "--dataset", str(small_path), "--results", str(bad)]) == 3
    bad.write_text("{")
    assert main(["eval", "--dataset", str(small_path), "--results", str(bad)]) == 3


def _perfect_report(tmp_path):
    # one instance per category per video: every column, AR@1 included, reaches 1
    masks = []
    for cat in (1, 2):
        bits = np.zeros((16, 16), bool)
        bits[2 + 6 * cat:6 + 6 * cat, 3:9] = True
        masks.append((cat, (rle_encode(bits), rle_encode(np.roll(bits, 1, axis=1)))))
    anns = [Annotation(i + 1, "v", cat, m) for i, (cat, m) in enumerate(masks)]
    preds = [result(a.masks, score=1.0, category=a.category_id, slot=i) for i, a in enumerate(anns)]
    path = tmp_path / "perfect.json"
    evaluate(preds, anns).dump(path)
    return path


def test_report_tables(tmp_path, capsys):
    perfect = _perfect_report(tmp_path)
    empty = tmp_path / "empty.json"
    EvalReport().dump(empty)
    out_csv = tmp_path / "t.csv"
    assert main(["report", str(perfect), str(empty), "--csv", str(out_csv)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["Run", "AP", "AP@50", "AP@75", "AR@1", "AR@10", "J", "F", "J&F"]
    assert lines[2].split()[1:] == ["1.000"] * 8
    assert lines[3].split()[1:] == ["0.000"] * 8
    rows = list(csv.reader(io.StringIO(out_csv.read_text())))
    assert len(rows) == 3


def test_malformed_report_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"ap": "high"}))
    assert main(["report", str(bad)]) == 2
    bad.write_text("not json")
    assert main(["report", str(bad)]) == 2
    assert main(["report", str(tmp_path / "absent.json")]) == 2


def test_sweep_k_csv(small_path, tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert main(["run", "--dataset", str(small_path), "--sweep-k", "1,2,4,6,8", "--csv", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [r["key_frames"] for r in rows] == ["1", "2", "4", "6", "8"]
    assert [r["run"] for r in rows] == ["K=1", "K=2", "K=4", "K=6", "K=8"]
    assert "K=8" in capsys.readouterr().out


def test_k1_misses_late_instance(tmp_path):
    ds = generate_dataset(ScenarioConfig(video_count=2, frames_per_video=12, late_entry_probability=0.5, rng_seed=11))
    path = save_dataset(ds, tmp_path / "late.json")
    late = [a for a in ds.annotations if LATE_ENTRY in a.tags]
    assert late
    for k, want in ((1, 0.0), (4, 1.0)):
        res = tmp_path / f"k{k}.json"
        assert main(["run", "--dataset", str(path), "--key-frames", str(k), "--out", str(res)]) == 0
        preds = load_results(res, shape=(ds.height, ds.width))
        assert [instance_recall(preds, a) for a in late] == [want] * len(late)


def test_format_table_default_labels():
    text = format_table([EvalReport(meta={"key_frames": 2})])
    assert text.splitlines()[2].startswith("K=2")
