import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from lsc_asr.audio_io import AudioBuffer, write_wav
from lsc_asr.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main
from lsc_asr.config import RunConfig, save_config, toy_config
from lsc_asr.toy import synthesize


def read_features(path):
    lines = path.read_text().splitlines()
    header = dict(kv.split("=") for kv in lines[0][2:].split())
    body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, int(header["C"]))
    return header, body


@pytest.fixture(scope="module")
def one_second(tmp_path_factory):
    path = tmp_path_factory.mktemp("wav") / "tone.wav"
    t = np.arange(16000) / 16000
    write_wav(path, AudioBuffer(0.3 * np.sin(2 * np.pi * 440 * t), 16000))
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train-toy", "--out", str(out), "--utterances", "3", "--epochs", "2", "--quiet",
                 "--lm", str(out / "lm.json")]) == EXIT_OK
    return out


class TestExtract:
    def test_one_second_shape(self, one_second, tmp_path, capsys):
        out = tmp_path / "f.csv"
        assert main(["extract", str(one_second), str(out)]) == EXIT_OK
        header, body = read_features(out)
        assert header["T"] == "98" and header["C"] == "256" and header["checkpoint"] == "none"
        assert body.shape == (98, 256)
        assert np.all(np.isfinite(body))
        assert "98 x 256" in capsys.readouterr().out

    def test_zero_audio_gives_zero_features(self, tmp_path):
        wav, out = tmp_path / "z.wav", tmp_path / "z.csv"
        write_wav(wav, AudioBuffer(np.zeros(4000), 16000))
        assert main(["extract", str(wav), str(out)]) == EXIT_OK
        _, body = read_features(out)
        assert body.shape[0] == 23 and not np.any(body)

    def test_deterministic(self, one_second, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["extract", str(one_second), str(a)])
        main(["extract", str(one_second), str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_binary_matches_csv(self, one_second, tmp_path):
        main(["extract", str(one_second), str(tmp_path / "f.csv")])
        main(["extract", str(one_second), str(tmp_path / "f.npy"), "--binary"])
        _, body = read_features(tmp_path / "f.csv")
        np.testing.assert_array_equal(np.load(tmp_path / "f.npy"), body)

    def test_checkpoint_hash_in_header(self, trained, tmp_path):
        wav = tmp_path / "u.wav"
        write_wav(wav, synthesize("ab", "abcd"))
        out = tmp_path / "f.csv"
        assert main(["extract", str(wav), str(out), "--checkpoint", str(trained / "checkpoint.json")]) == 0
        header, body = read_features(out)
        assert len(header["checkpoint"]) == 64 and body.shape[1] == 32

    def test_short_audio_gives_empty_body(self, tmp_path):
        wav, out = tmp_path / "s.wav", tmp_path / "s.csv"
        write_wav(wav, AudioBuffer(np.zeros(100), 16000))
        assert main(["extract", str(wav), str(out)]) == EXIT_OK
        assert read_features(out)[0]["T"] == "0"


class TestExitCodes:
    def test_bad_wav(self, tmp_path):
        bad = tmp_path / "bad.wav"
        bad.write_bytes(b"not a wav file at all")
        assert main(["extract", str(bad), str(tmp_path / "o.csv")]) == EXIT_DATA

    def test_missing_file(self, tmp_path):
        assert main(["extract", str(tmp_path / "nope.wav"), str(tmp_path / "o.csv")]) == EXIT_DATA

    def test_wrong_sample_rate(self, tmp_path):
        wav = tmp_path / "r.wav"
        write_wav(wav, AudioBuffer(np.zeros(8000), 8000))
        assert main(["extract", str(wav), str(tmp_path / "o.csv")]) == EXIT_DATA

    def test_bad_config(self, one_second, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"train": {"lam": 3}}))
        assert main(["extract", str(one_second), str(tmp_path / "o.csv"), "--config", str(cfg)]) == EXIT_CONFIG
        cfg.write_text(json.dumps({"trian": {}}))
        assert main(["params", "--config", str(cfg)]) == EXIT_CONFIG
        assert "'trian'" in capsys.readouterr().err

    def test_corrupt_checkpoint(self, tmp_path):
        ck = tmp_path / "ck.json"
        ck.write_text("{}")
        assert main(["params", "--checkpoint", str(ck)]) == EXIT_CONFIG

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence(self, tmp_path):
        assert main(["train-toy", "--out", str(tmp_path), "--utterances", "2", "--epochs", "3",
                     "--lr", "1e300", "--quiet"]) == EXIT_NUMERIC

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2


class TestParams:
    def test_reference_counts(self, capsys):
        assert main(["params"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "sinc.w1\t128\t128" in out
        assert "front-end total\t15616" in out
        assert "pointwise-omission saving\t196608" in out
        assert "dconv.0\t128\t128\t15\t1920\t245760\t16384" in out

    def test_totals_match_rows(self, capsys):
        main(["params"])
        lines = capsys.readouterr().out.splitlines()
        rows = [ln.split("\t") for ln in lines[1:] if ln.count("\t") == 4]
        front = sum(int(r[2]) for r in rows if r[4] == "front-end")
        back = sum(int(r[2]) for r in rows if r[4] == "back-end")
        assert f"front-end total\t{front}" in lines and f"back-end total\t{back}" in lines


class TestFilters:
    def test_outputs(self, tmp_path):
        cfg = tmp_path / "toy.json"
        save_config(cfg, toy_config())
        out = tmp_path / "f"
        assert main(["filters", "--config", str(cfg), "--out", str(out), "--plots", "3"]) == EXIT_OK
        rows = (out / "filters.csv").read_text().splitlines()
        assert rows[0].startswith("index,f1_hz") and len(rows) == 17
        svgs = sorted(p.name for p in out.glob("*.svg"))
        assert svgs == ["bounds.svg", "kernel_000.svg", "kernel_007.svg", "kernel_015.svg"]
        for name in svgs:
            assert ET.parse(out / name).getroot().tag.endswith("svg")

    def test_deterministic(self, tmp_path):
        for d in ("a", "b"):
            main(["filters", "--out", str(tmp_path / d), "--plots", "2"])
        for name in ("filters.csv", "bounds.svg"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestTrainDecode:
    def test_outputs(self, trained):
        rows = [json.loads(ln) for ln in (trained / "metrics.jsonl").read_text().splitlines()]
        assert [r["epoch"] for r in rows] == [1, 2]
        assert set(rows[0]) == {"epoch", "loss", "att_loss", "ctc_loss", "accuracy", "max_center_drift"}
        assert (trained / "checkpoint.json").exists() and (trained / "lm.json").exists()

    def test_metrics_deterministic(self, trained, tmp_path):
        assert main(["train-toy", "--out", str(tmp_path), "--utterances", "3", "--epochs", "2",
                     "--quiet"]) == EXIT_OK
        assert (tmp_path / "metrics.jsonl").read_bytes() == (trained / "metrics.jsonl").read_bytes()
        assert (tmp_path / "checkpoint.json").read_bytes() == (trained / "checkpoint.json").read_bytes()

    @pytest.mark.parametrize("extra", [[], ["--lm", "uniform"], ["--lm", "LM"], ["--lambda", "1.0"]])
    def test_decode_format(self, trained, tmp_path, capsys, extra):
        wav = tmp_path / "u.wav"
        write_wav(wav, synthesize("abc", "abcd", seed=5))
        extra = [str(trained / "lm.json") if e == "LM" else e for e in extra]
        capsys.readouterr()
        args = ["decode", str(wav), "--checkpoint", str(trained / "checkpoint.json"),
                "--n-best", "2", "--max-len", "6", *extra]
        assert main(args) == EXIT_OK
        first = capsys.readouterr().out
        lines = first.splitlines()
        assert lines[0].startswith("# wav")
        for rank, ln in enumerate(lines[1:], 1):
            f = ln.split("\t")
            assert f[0] == str(wav) and f[1] == str(rank) and set(f[2]) <= set("abcd")
            float(f[3]), float(f[4]), float(f[5]), float(f[6])
        if "--lm" not in extra:
            assert all(float(ln.split("\t")[6]) == 0.0 for ln in lines[1:])
        main(args)
        assert capsys.readouterr().out == first

    def test_decode_short_file(self, trained, tmp_path):
        wav = tmp_path / "s.wav"
        write_wav(wav, AudioBuffer(np.zeros(10), 16000))
        assert main(["decode", str(wav), "--checkpoint", str(trained / "checkpoint.json")]) == EXIT_DATA


class TestMisc:
    def test_augment_preview(self, one_second, tmp_path):
        cfg = tmp_path / "toy.json"
        save_config(cfg, toy_config())
        out = tmp_path / "p"
        assert main(["augment-preview", str(one_second), "--config", str(cfg), "--out", str(out)]) == 0
        before = np.loadtxt(out / "before.csv", delimiter=",")
        after = np.loadtxt(out / "after.csv", delimiter=",")
        assert before.shape == after.shape == (98, 32)
        assert not np.array_equal(before, after)

    def test_synth_corpus(self, tmp_path):
        assert main(["synth-corpus", "--out", str(tmp_path), "--utterances", "2"]) == EXIT_OK
        doc = json.loads((tmp_path / "corpus.json").read_text())
        assert len(doc["utterances"]) == 2 and (tmp_path / "utt001.wav").exists()

    def test_check_gradients(self, capsys):
        assert main(["check-gradients", "--instances", "1"]) == EXIT_OK
        assert "all passed" in capsys.readouterr().out

    def test_default_config_is_reference(self):
        assert RunConfig().frontend.output_dim == 256
