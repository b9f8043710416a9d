"""Command-line behaviour: exit codes, artifacts, determinism."""

import csv
import hashlib
import json
import os

import numpy as np
import pytest

from dcnet.cli import OUT_DIR_ENV, _quantize8, main
from dcnet.formats import read_pgm, read_ppm, read_tensor, write_tensor

TINY_TRAIN = ["--seed", "5", "--epochs", "2", "--batch-size", "4",
              "--spectral-channels", "2", "--levels", "1",
              "--patch-size", "16", "--patch-stride", "16", "--quiet"]


def _digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    synth = base / "synth"
    assert main(["synth", "--seed", "3", "--height", "32", "--width", "32",
                 "--out", str(synth)]) == 0
    scene = base / "scene"
    assert main(["degrade", "--truth", str(synth / "truth.pten"),
                 "--pan", str(synth / "pan.pten"), "--out", str(scene)]) == 0
    return scene


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, scene_dir):
    out = tmp_path_factory.mktemp("run")
    rc = main(["train", "--scene", str(scene_dir), "--out", str(out)]
              + TINY_TRAIN)
    assert rc == 0
    return out


class TestExitCodes:
    def test_usage_errors_exit_one(self):
        for argv in ([], ["bogus"], ["train", "--no-such-flag"],
                     ["ablate", "bogus-axis"]):
            with pytest.raises(SystemExit) as err:
                main(argv)
            assert err.value.code == 1

    def test_missing_input_file_exits_two(self, tmp_path):
        rc = main(["degrade", "--truth", str(tmp_path / "nope.pten"),
                   "--pan", str(tmp_path / "nope2.pten"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_missing_seed_exits_two(self, tmp_path, capsys):
        rc = main(["train", "--epochs", "1", "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "seed" in capsys.readouterr().err

    def test_band_mismatch_exits_two(self, scene_dir, run_dir, tmp_path):
        ms = read_tensor(scene_dir / "ms.pten")
        write_tensor(tmp_path / "ms6.pten", np.concatenate([ms, ms[:2]]))
        rc = main(["sharpen", "--checkpoint",
                   str(run_dir / "checkpoint_best.pten"),
                   "--pan", str(scene_dir / "pan.pten"),
                   "--ms", str(tmp_path / "ms6.pten"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_evaluate_without_mode_exits_two(self, scene_dir, tmp_path):
        rc = main(["evaluate", "--fused", str(scene_dir / "truth.pten"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2


class TestSynthDegrade:
    def test_degrade_is_idempotent(self, scene_dir, tmp_path):
        synth = scene_dir.parent / "synth"
        again = tmp_path / "scene2"
        assert main(["degrade", "--truth", str(synth / "truth.pten"),
                     "--pan", str(synth / "pan.pten"),
                     "--out", str(again)]) == 0
        for name in ("pan.pten", "ms.pten", "truth.pten", "pan.pgm",
                     "ms.ppm", "truth.ppm", "scene.json"):
            assert _digest(scene_dir / name) == _digest(again / name)

    def test_shapes_honor_ratio(self, scene_dir):
        pan = read_tensor(scene_dir / "pan.pten")
        ms = read_tensor(scene_dir / "ms.pten")
        truth = read_tensor(scene_dir / "truth.pten")
        assert pan.shape == (32, 32)
        assert ms.shape == (4, 8, 8)
        assert truth.shape == (4, 32, 32)

    def test_previews_match_quantized_tensors(self, scene_dir):
        meta = json.loads((scene_dir / "scene.json").read_text())
        vr = tuple(meta["value_range"])
        pan = read_tensor(scene_dir / "pan.pten")
        pgm, maxval = read_pgm(scene_dir / "pan.pgm")
        assert maxval == 255
        assert np.array_equal(pgm, _quantize8(pan, vr))
        ms = read_tensor(scene_dir / "ms.pten")
        ppm, _ = read_ppm(scene_dir / "ms.ppm")
        assert np.array_equal(ppm, _quantize8(ms[:3], vr))

    def test_out_dir_env_override(self, tmp_path, monkeypatch):
        target = tmp_path / "via-env"
        monkeypatch.setenv(OUT_DIR_ENV, str(target))
        assert main(["synth", "--seed", "1", "--height", "8",
                     "--width", "8"]) == 0
        assert (target / "truth.pten").exists()

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
        flagged = tmp_path / "flagged"
        assert main(["synth", "--seed", "1", "--height", "8", "--width", "8",
                     "--out", str(flagged)]) == 0
        assert (flagged / "truth.pten").exists()
        assert not (tmp_path / "env").exists()


class TestTrain:
    def test_artifacts_written(self, run_dir):
        for name in ("checkpoint_last.pten", "checkpoint_last.pten.json",
                     "checkpoint_best.pten", "checkpoint_best.pten.json",
                     "manifest.json"):
            assert (run_dir / name).exists(), name

    def test_manifest_structure(self, run_dir):
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["trained_epochs"] == 2
        assert len(manifest["epochs"]) == 2
        assert manifest["checkpoint"] == "checkpoint_best.pten"
        assert manifest["metrics"]["mean"]["qnr"] is not None
        assert len(manifest["config_hash"]) == 64

    def test_rerun_is_bit_identical(self, scene_dir, run_dir, tmp_path):
        again = tmp_path / "run2"
        assert main(["train", "--scene", str(scene_dir), "--out", str(again)]
                    + TINY_TRAIN) == 0
        assert _digest(run_dir / "manifest.json") \
            == _digest(again / "manifest.json")
        assert _digest(run_dir / "checkpoint_best.pten") \
            == _digest(again / "checkpoint_best.pten")

    def test_resume_continues_the_curve(self, scene_dir, tmp_path):
        full = tmp_path / "full"
        argv = ["train", "--scene", str(scene_dir)] + TINY_TRAIN
        assert main(argv + ["--epochs", "4", "--out", str(full)]) == 0

        half = tmp_path / "half"
        assert main(argv + ["--epochs", "2", "--out", str(half)]) == 0
        resumed = tmp_path / "resumed"
        assert main(argv + ["--epochs", "4", "--out", str(resumed),
                            "--resume",
                            str(half / "checkpoint_last.pten")]) == 0
        curve_full = json.loads((full / "manifest.json").read_text())["epochs"]
        curve_res = json.loads((resumed / "manifest.json").read_text())["epochs"]
        assert curve_res == curve_full

    def test_config_file_with_flag_precedence(self, scene_dir, tmp_path):
        cfg = tmp_path / "exp.json"
        cfg.write_text(json.dumps({
            "model": {"spectral_channels": 2, "levels": 1},
            "train": {"epochs": 9, "batch_size": 4, "seed": 5},
            "data": {"scene": str(scene_dir), "patch_size": 16,
                     "patch_stride": 16},
        }))
        out = tmp_path / "cfgrun"
        assert main(["train", "--config", str(cfg), "--epochs", "1",
                     "--out", str(out), "--quiet"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["trained_epochs"] == 1  # flag beat the file's 9

    def test_unknown_config_key_exits_two(self, scene_dir, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"trian": {"epochs": 1}}))
        rc = main(["train", "--config", str(cfg), "--seed", "1",
                   "--out", str(tmp_path / "o")])
        assert rc == 2


class TestSharpenEvaluate:
    def test_sharpen_writes_product_and_preview(self, scene_dir, run_dir,
                                                tmp_path):
        out = tmp_path / "sharp"
        assert main(["sharpen", "--checkpoint",
                     str(run_dir / "checkpoint_best.pten"),
                     "--pan", str(scene_dir / "pan.pten"),
                     "--ms", str(scene_dir / "ms.pten"),
                     "--out", str(out)]) == 0
        fused = read_tensor(out / "fused.pten")
        assert fused.shape == (4, 32, 32)
        ppm, _ = read_ppm(out / "fused.ppm")
        assert np.array_equal(ppm, _quantize8(fused[:3], (0.0, 2047.0)))

    def test_sharpen_is_deterministic(self, scene_dir, run_dir, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["sharpen", "--checkpoint",
                         str(run_dir / "checkpoint_best.pten"),
                         "--pan", str(scene_dir / "pan.pten"),
                         "--ms", str(scene_dir / "ms.pten"),
                         "--out", str(out)]) == 0
            outs.append(_digest(out / "fused.pten"))
        assert outs[0] == outs[1]

    def test_identity_evaluation_hits_ideal_values(self, scene_dir, tmp_path):
        out = tmp_path / "ideal"
        truth = str(scene_dir / "truth.pten")
        assert main(["evaluate", "--fused", truth, "--ref", truth,
                     "--window", "16", "--out", str(out)]) == 0
        row = json.loads((out / "report.json").read_text())[0]
        assert abs(row["sam_deg"]) < 1e-9
        assert abs(row["ergas"]) < 1e-9
        assert abs(row["uiqi"] - 1.0) < 1e-9
        assert abs(row["q2n"] - 1.0) < 1e-9
        assert abs(row["scc"] - 1.0) < 1e-9
        assert row["d_lambda"] is None

    def test_qnr_only_mode(self, scene_dir, tmp_path):
        out = tmp_path / "qnr"
        assert main(["evaluate", "--fused", str(scene_dir / "truth.pten"),
                     "--pan", str(scene_dir / "pan.pten"),
                     "--ms", str(scene_dir / "ms.pten"),
                     "--window", "8", "--out", str(out)]) == 0
        row = json.loads((out / "report.json").read_text())[0]
        assert row["qnr"] is not None and row["uiqi"] is None
        header = (out / "report.csv").read_text().splitlines()[0]
        assert header == "scene,q2n,uiqi,sam_deg,ergas,scc,d_lambda,d_s,qnr"

    def test_batch_mode_appends_mean_row(self, scene_dir, tmp_path):
        batch = tmp_path / "batch"
        for i, name in enumerate(("s1", "s2")):
            sub = batch / name
            sub.mkdir(parents=True)
            truth = read_tensor(scene_dir / "truth.pten")
            write_tensor(sub / "fused.pten", truth + 10.0 * i)
            write_tensor(sub / "truth.pten", truth)
        out = tmp_path / "batchrep"
        assert main(["evaluate", "--scenes", str(batch), "--window", "16",
                     "--out", str(out)]) == 0
        rows = json.loads((out / "report.json").read_text())
        assert [r["scene"] for r in rows] == ["s1", "s2", "mean"]
        for col in ("sam_deg", "uiqi", "scc"):
            assert rows[2][col] == pytest.approx(
                (rows[0][col] + rows[1][col]) / 2.0)

    def test_window_clamp_is_reported(self, scene_dir, tmp_path, capsys):
        out = tmp_path / "clamp"
        truth = str(scene_dir / "truth.pten")
        assert main(["evaluate", "--fused", truth, "--ref", truth,
                     "--window", "4096", "--out", str(out)]) == 0
        assert "clamped" in capsys.readouterr().err


@pytest.fixture()
def micro(scene_dir):
    return ["--scene", str(scene_dir), "--seed", "5", "--epochs", "1",
            "--batch-size", "4", "--spectral-channels", "2",
            "--patch-size", "16", "--patch-stride", "16", "--quiet",
            "--window", "8"]


class TestAblate:
    def _rows(self, out_dir, axis):
        with open(os.path.join(out_dir, f"ablation_{axis}.csv"),
                  encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))

    def test_backbone_axis_has_two_variants(self, micro, tmp_path):
        out = tmp_path / "bb"
        assert main(["ablate", "backbone", "--levels", "1",
                     "--out", str(out)] + micro) == 0
        rows = self._rows(out, "backbone")
        assert [r["variant"] for r in rows] == ["2d3d", "2d2d"]
        for row in rows:
            assert row["status"] == "ok"
            for col in ("q2n", "uiqi", "sam_deg", "ergas", "scc"):
                assert np.isfinite(float(row[col]))

    def test_fusion_levels_axis_matches_suffix_sets(self, micro, tmp_path):
        out = tmp_path / "fl"
        # four epochs: below that, an undertrained variant can clip to a
        # constant band, which the metrics legitimately refuse to score
        assert main(["ablate", "fusion_levels", "--levels", "4",
                     "--out", str(out)] + micro + ["--epochs", "4"]) == 0
        rows = self._rows(out, "fusion_levels")
        assert [r["variant"] for r in rows] \
            == ["{4}", "{3,4}", "{2,3,4}", "{1,2,3,4}"]
        assert all(r["status"] == "ok" for r in rows)

    def test_num_levels_axis_spans_one_through_six(self):
        from dcnet.cli import DEFAULT_CONFIG, _ablation_variants

        variants = _ablation_variants("num_levels", DEFAULT_CONFIG)
        assert [label for label, _ in variants] == [str(n) for n in
                                                    range(1, 7)]
        for label, overrides in variants:
            assert overrides["levels"] == int(label)
            assert overrides["fusion_levels"] is None

    def test_failed_variant_keeps_sweep_alive(self, micro, tmp_path,
                                              monkeypatch):
        import dcnet.cli as cli_mod

        calls = {"n": 0}
        real = cli_mod.train_model

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 1:
                raise cli_mod.NumericError("boom")
            return real(*args, **kwargs)

        monkeypatch.setattr(cli_mod, "train_model", flaky)
        out = tmp_path / "fail"
        assert main(["ablate", "backbone", "--levels", "1",
                     "--out", str(out)] + micro) == 0
        rows = self._rows(out, "backbone")
        assert rows[0]["status"].startswith("error: NumericError")
        assert rows[0]["q2n"] == ""
        assert rows[1]["status"] == "ok"
