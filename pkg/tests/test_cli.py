import numpy as np
import pytest

from foa_attack.cli import main
from foa_attack.fileio import read_ppm, read_tensor, write_encoder, write_ppm
from foa_attack.sampledata import default_heldout, default_surrogates, make_image_pair


@pytest.fixture
def workspace(tmp_path):
    nat, tar = make_image_pair(7, 16, 16)
    nat_path, tar_path = tmp_path / "nat.ppm", tmp_path / "tar.ppm"
    write_ppm(nat_path, nat)
    write_ppm(tar_path, tar)
    enc_paths = []
    for i, spec in enumerate(default_surrogates()):
        small = spec
        path = tmp_path / f"enc{i}.foae"
        write_encoder(path, small)
        enc_paths.append(str(path))
    return tmp_path, str(nat_path), str(tar_path), ",".join(enc_paths)


def attack_args(nat, tar, encoders, out, **overrides):
    args = ["attack", "--nat", nat, "--tar", tar, "--encoders", encoders, "--out", out,
            "--iters", "3", "--clusters", "3", "--seed", "7"]
    for flag, value in overrides.items():
        args += [f"--{flag}", str(value)]
    return args


class TestAttackCommand:
    def test_missing_tar_exits_2_and_names_flag(self, workspace, capsys):
        tmp_path, nat, tar, encs = workspace
        with pytest.raises(SystemExit) as exc:
            main(["attack", "--nat", nat, "--encoders", encs,
                  "--out", str(tmp_path / "o.ppm")])
        assert exc.value.code == 2
        assert "--tar" in capsys.readouterr().err

    def test_zero_epsilon_exits_2(self, workspace, capsys):
        tmp_path, nat, tar, encs = workspace
        code = main(attack_args(nat, tar, encs, str(tmp_path / "o.ppm"), epsilon=0))
        assert code == 2
        assert "epsilon" in capsys.readouterr().err

    def test_writes_image_delta_and_metrics(self, workspace):
        tmp_path, nat, tar, encs = workspace
        out = tmp_path / "adv.ppm"
        code = main(attack_args(nat, tar, encs, str(out)))
        assert code == 0
        adv = read_ppm(out)
        assert adv.shape == (16, 16, 3)
        delta = read_tensor(out.with_suffix(".delta.foat"))
        assert delta.shape == (16, 16, 3)
        assert np.abs(delta).max() <= 16 / 255 + 1e-12
        metrics = (tmp_path / "adv.metrics.csv").read_text().splitlines()
        assert metrics[0] == "step,encoder,loss_coarse,loss_fine,loss_total,speed,weight,delta_linf"
        assert len(metrics) == 1 + 3 * 2  # header + steps * encoders

    def test_determinism_byte_identical(self, workspace):
        tmp_path, nat, tar, encs = workspace
        out1, out2 = tmp_path / "a1.ppm", tmp_path / "a2.ppm"
        assert main(attack_args(nat, tar, encs, str(out1))) == 0
        assert main(attack_args(nat, tar, encs, str(out2))) == 0
        assert out1.read_bytes() == out2.read_bytes()
        m1 = (tmp_path / "a1.metrics.csv").read_text()
        m2 = (tmp_path / "a2.metrics.csv").read_text()
        assert m1.replace("a1", "") == m2.replace("a2", "")

    def test_log_dir_redirects_metrics(self, workspace, monkeypatch):
        tmp_path, nat, tar, encs = workspace
        logs = tmp_path / "logs"
        monkeypatch.setenv("FOA_LOG_DIR", str(logs))
        out = tmp_path / "adv.ppm"
        assert main(attack_args(nat, tar, encs, str(out))) == 0
        assert (logs / "adv.metrics.csv").exists()
        assert not (tmp_path / "adv.metrics.csv").exists()


class TestEvalCommand:
    def test_adv_equals_target(self, tmp_path, capsys):
        adv_dir, tar_dir = tmp_path / "adv", tmp_path / "tar"
        adv_dir.mkdir(), tar_dir.mkdir()
        for seed in range(3):
            _, tar = make_image_pair(seed)
            write_ppm(adv_dir / f"img{seed}.ppm", tar)
            write_ppm(tar_dir / f"img{seed}.ppm", tar)
        enc_path = tmp_path / "he.foae"
        write_encoder(enc_path, default_heldout())
        out_csv = tmp_path / "report.csv"
        code = main(["eval", "--adv-dir", str(adv_dir), "--tar-dir", str(tar_dir),
                     "--heldout-encoder", str(enc_path), "--threshold", "0.5",
                     "--out", str(out_csv)])
        assert code == 0
        text = capsys.readouterr().out
        assert "success rate" in text and "1.00" in text
        assert out_csv.exists()

    def test_missing_pair_exits_2(self, tmp_path, capsys):
        adv_dir, tar_dir = tmp_path / "adv", tmp_path / "tar"
        adv_dir.mkdir(), tar_dir.mkdir()
        nat, _ = make_image_pair(0)
        write_ppm(adv_dir / "only.ppm", nat)
        enc_path = tmp_path / "he.foae"
        write_encoder(enc_path, default_heldout())
        code = main(["eval", "--adv-dir", str(adv_dir), "--tar-dir", str(tar_dir),
                     "--heldout-encoder", str(enc_path)])
        assert code == 2
        assert "only.ppm" in capsys.readouterr().err


class TestOracleCommand:
    def test_zero_trials_vacuous_pass(self, capsys):
        assert main(["oracle", "--suite", "ot", "--trials", "0"]) == 0
        assert "no trials" in capsys.readouterr().out

    def test_ot_suite_passes(self, capsys):
        assert main(["oracle", "--suite", "ot", "--trials", "5", "--seed", "3"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_adjoint_suite_passes(self, capsys):
        assert main(["oracle", "--suite", "adjoint", "--trials", "5", "--seed", "4"]) == 0
        assert "FAIL" not in capsys.readouterr().out
