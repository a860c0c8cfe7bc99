import subprocess
import sys

import numpy as np
import pytest

from softtrack import formats
from softtrack.cli import main
from softtrack.geom import BoundingBox, Detection, MotionField
from softtrack.synth import SynthConfig, generate


def _synth(tmp_path, *extra):
    out = tmp_path / "scene"
    assert main(["synth", "--out-dir", str(out), "--seed", "3", "--frames", "20", *extra]) == 0
    return out


def test_track_then_eval_noiseless(tmp_path):
    d = _synth(tmp_path)
    assert main(["track", "--detections", str(d / "detections.txt"), "--embeddings", str(d / "embeddings.bin"),
                 "--out", str(tmp_path / "pred.txt")]) == 0
    assert main(["eval", "--pred", str(tmp_path / "pred.txt"), "--gt", str(d / "gt.txt"),
                 "--out", str(tmp_path / "r.txt")]) == 0
    r = formats.parse_report((tmp_path / "r.txt").read_text())
    assert r["idf1"] == 1.0 and r["id_switches"] == 0


def test_track_empty_detection_file(tmp_path):
    (tmp_path / "d.txt").write_text("# nothing\n")
    formats.write_embeddings(tmp_path / "e.bin", np.zeros((0, 4)))
    assert main(["track", "--detections", str(tmp_path / "d.txt"), "--embeddings", str(tmp_path / "e.bin"),
                 "--out", str(tmp_path / "t.txt")]) == 0
    assert formats.read_tracks(tmp_path / "t.txt") == {}


def test_track_truncated_embeddings_exit_3(tmp_path, capsys):
    d = _synth(tmp_path)
    data = (d / "embeddings.bin").read_bytes()
    (d / "embeddings.bin").write_bytes(data[:-8])
    code = main(["track", "--detections", str(d / "detections.txt"), "--embeddings", str(d / "embeddings.bin"),
                 "--out", str(tmp_path / "t.txt")])
    assert code == 3
    assert "embeddings.bin" in capsys.readouterr().err


def test_track_embedding_count_differs_exit_3(tmp_path):
    d = _synth(tmp_path)
    formats.write_embeddings(d / "embeddings.bin", np.ones((3, 16)))
    assert main(["track", "--detections", str(d / "detections.txt"), "--embeddings", str(d / "embeddings.bin"),
                 "--out", str(tmp_path / "t.txt")]) == 3


def test_track_parse_error_exit_2(tmp_path, capsys):
    (tmp_path / "d.txt").write_text("0,0,0,10,10,0.9,0\n0,0,0,10,oops,0.9,0\n")
    formats.write_embeddings(tmp_path / "e.bin", np.ones((2, 4)))
    code = main(["track", "--detections", str(tmp_path / "d.txt"), "--embeddings", str(tmp_path / "e.bin"),
                 "--out", str(tmp_path / "t.txt")])
    assert code == 2
    assert "d.txt:2:" in capsys.readouterr().err


def test_track_jobs_deterministic(tmp_path):
    dirs = [_synth(tmp_path / str(k), "--noise", "0.1", "--occlusions", "1") for k in range(2)]
    args = ["track", "--detections", *[str(d / "detections.txt") for d in dirs],
            "--embeddings", *[str(d / "embeddings.bin") for d in dirs]]
    assert main([*args, "--out", *[str(tmp_path / f"a{k}.txt") for k in range(2)]]) == 0
    assert main([*args, "--out", *[str(tmp_path / f"b{k}.txt") for k in range(2)], "--jobs", "2"]) == 0
    for k in range(2):
        assert (tmp_path / f"a{k}.txt").read_text() == (tmp_path / f"b{k}.txt").read_text()


def test_config_file_is_applied(tmp_path):
    d = _synth(tmp_path)
    (tmp_path / "c.cfg").write_text("matcher=hungarian\n")
    assert main(["--config", str(tmp_path / "c.cfg"), "track", "--detections", str(d / "detections.txt"),
                 "--embeddings", str(d / "embeddings.bin"), "--out", str(tmp_path / "t.txt")]) == 0
    (tmp_path / "bad.cfg").write_text("nope=1\n")
    assert main(["--config", str(tmp_path / "bad.cfg"), "selfcheck"]) == 2


def _pseudolabel(tmp_path, ref, tgt, motion):
    formats.write_detections(tmp_path / "ref.txt", ref)
    formats.write_detections(tmp_path / "tgt.txt", tgt)
    formats.write_grid(tmp_path / "m.grid", motion)
    code = main(["pseudolabel", "--ref", str(tmp_path / "ref.txt"), "--tgt", str(tmp_path / "tgt.txt"),
                 "--motion", str(tmp_path / "m.grid"), "--out", str(tmp_path / "l.txt")])
    report = formats.parse_report((tmp_path / "l.txt.report").read_text()) if code == 0 else None
    return code, formats.parse_labels((tmp_path / "l.txt").read_text()) if code == 0 else None, report


@pytest.mark.parametrize("seed", range(3))
def test_pseudolabel_synthetic_pair(tmp_path, seed):
    # synth confidences are 1.0, so every box passes the filter
    assert main(["synth", "--out-dir", str(tmp_path), "--seed", str(seed), "--objects", "5",
                 "--frames", "2", "--no-overlap"]) == 0
    assert main(["pseudolabel", "--ref", str(tmp_path / "ref.txt"), "--tgt", str(tmp_path / "tgt.txt"),
                 "--motion", str(tmp_path / "motion.grid"), "--out", str(tmp_path / "l.txt")]) == 0
    s = generate(SynthConfig(num_objects=5, num_frames=2, allow_overlap=False), seed)
    ids_a, ids_b = s.detections(0)[2], s.detections(1)[2]
    truth = sorted((i, ids_b.index(g)) for i, g in enumerate(ids_a) if g in ids_b)
    assert sorted(formats.parse_labels((tmp_path / "l.txt").read_text())) == truth


def _det(x1, y1, x2, y2, conf=0.95):
    return Detection(BoundingBox(x1, y1, x2, y2), conf)


def test_pseudolabel_empty_target(tmp_path):
    code, labels, report = _pseudolabel(tmp_path, [_det(0, 0, 20, 20)], [], MotionField.constant(50, 50, (0.0, 0.0)))
    assert code == 0 and labels == [] and report["pairs"] == 0


def test_pseudolabel_low_iou_in_sidecar(tmp_path):
    # 20x20 boxes offset by 18 px: IoU 40 / 760
    ref, tgt = [_det(0, 0, 20, 20)], [_det(18, 0, 38, 20)]
    code, labels, report = _pseudolabel(tmp_path, ref, tgt, MotionField.constant(50, 50, (0.0, 0.0)))
    assert code == 0 and labels == [] and report["discarded_low_iou"] == 1


def test_pseudolabel_indices_refer_to_file_records(tmp_path):
    # the low-confidence first record is filtered but still counts as index 0
    ref = [_det(0, 0, 20, 20, 0.5), _det(30, 0, 50, 20)]
    tgt = [_det(30, 0, 50, 20)]
    code, labels, report = _pseudolabel(tmp_path, ref, tgt, MotionField.constant(60, 30, (0.0, 0.0)))
    assert labels == [(1, 0)] and report["filtered_ref"] == 1


def _occlusion(tmp_path, left, right):
    formats.write_grid(tmp_path / "l.grid", left)
    formats.write_grid(tmp_path / "r.grid", right)
    code = main(["occlusion", "--left", str(tmp_path / "l.grid"), "--right", str(tmp_path / "r.grid"),
                 "--out-left", str(tmp_path / "ol.grid"), "--out-right", str(tmp_path / "or.grid")])
    if code:
        return code, None, None
    return code, formats.read_grid(tmp_path / "ol.grid").values[..., 0], formats.read_grid(tmp_path / "or.grid").values[..., 0]


def test_occlusion_identical_grids(tmp_path):
    g = np.zeros((4, 8))
    code, ol, orr = _occlusion(tmp_path, g, g)
    assert code == 0 and not ol.any() and not orr.any()


def test_occlusion_constant_shift(tmp_path):
    g = np.full((4, 8), 3.0)
    code, ol, orr = _occlusion(tmp_path, g, g)
    assert code == 0
    want_r = np.zeros((4, 8))
    want_r[:, :3] = 1
    np.testing.assert_array_equal(orr, want_r)
    np.testing.assert_array_equal(ol, want_r[:, ::-1])


def test_occlusion_mismatched_dimensions(tmp_path):
    code, _, _ = _occlusion(tmp_path, np.zeros((4, 8)), np.zeros((4, 9)))
    assert code == 2


def test_eval_pred_equals_gt_and_empty(tmp_path, capsys):
    tracks = {0: [(1, BoundingBox(0, 0, 5, 5))], 1: [(1, BoundingBox(1, 0, 6, 5))]}
    formats.write_tracks(tmp_path / "gt.txt", tracks)
    assert main(["eval", "--pred", str(tmp_path / "gt.txt"), "--gt", str(tmp_path / "gt.txt")]) == 0
    r = formats.parse_report(capsys.readouterr().out)
    assert r["idf1"] == 1.0 and r["id_switches"] == 0
    (tmp_path / "empty.txt").write_text("")
    assert main(["eval", "--pred", str(tmp_path / "empty.txt"), "--gt", str(tmp_path / "gt.txt")]) == 0
    assert formats.parse_report(capsys.readouterr().out)["idf1"] == 0.0


def test_eval_split_fixture(tmp_path, capsys):
    box = BoundingBox(0, 0, 8, 8)
    formats.write_tracks(tmp_path / "gt.txt", {f: [(1, box)] for f in range(10)})
    formats.write_tracks(tmp_path / "p.txt", {f: [(1 if f < 5 else 2, box)] for f in range(10)})
    assert main(["eval", "--pred", str(tmp_path / "p.txt"), "--gt", str(tmp_path / "gt.txt")]) == 0
    assert formats.parse_report(capsys.readouterr().out)["idf1"] == 0.5


def test_selfcheck_hungarian_passes(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("matcher=hungarian\n")
    assert main(["--config", str(tmp_path / "c.cfg"), "selfcheck"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 6


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "softtrack", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "pseudolabel" in r.stdout
