"""The iotfleet command line: validate, run, features."""

import csv

import pytest

from iotfleet.cli import main

RUN_ARGS = ["--duration", "30", "--attack-delay", "10", "--time-scale", "0"]


@pytest.fixture()
def usecase_file(tmp_path, smarthome_xml):
    path = tmp_path / "case.xml"
    path.write_text(smarthome_xml)
    return path


class TestValidate:
    def test_clean_file(self, usecase_file, capsys):
        assert main(["validate", str(usecase_file)]) == 0
        out = capsys.readouterr().out
        assert "ok" in out and "smart-home" in out

    def test_violations_listed(self, tmp_path, smarthome_xml, capsys):
        path = tmp_path / "bad.xml"
        path.write_text(smarthome_xml.replace("192.168.2.2", "192.168.1.2"))
        assert main(["validate", str(path)]) == 1
        out = capsys.readouterr().out
        assert "violation" in out

    def test_parse_error(self, tmp_path, capsys):
        path = tmp_path / "broken.xml"
        path.write_text("<usecase")
        assert main(["validate", str(path)]) == 1
        assert "malformed" in capsys.readouterr().err

    def test_missing_file_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["validate", str(tmp_path / "absent.xml")])
        assert info.value.code == 2

    def test_help(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--help"])
        assert info.value.code == 0
        out = capsys.readouterr().out
        assert "validate" in out and "run" in out and "features" in out


class TestRun:
    def test_writes_all_artifacts(self, usecase_file, tmp_path, capsys):
        pcap = tmp_path / "out.pcap"
        flows = tmp_path / "flows.csv"
        figures = tmp_path / "figs"
        code = main(["run", str(usecase_file), *RUN_ARGS, "--seed", "5",
                     "--pcap", str(pcap), "--flows", str(flows),
                     "--figures", str(figures)])
        assert code == 0
        out = capsys.readouterr().out
        assert "records:" in out and "trace-digest:" in out

        assert pcap.read_bytes()[:4] == b"\xd4\xc3\xb2\xa1"
        with open(flows, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert {r["label"] for r in rows} == {"normal", "attack"}

        pngs = sorted(p.name for p in figures.glob("*.png"))
        assert pngs == ["device_activity.png", "flow_features.png", "timeline.png"]
        for p in figures.glob("*.png"):
            assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_same_seed_same_flows_file(self, usecase_file, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["run", str(usecase_file), *RUN_ARGS, "--seed", "9", "--flows", str(a)])
        main(["run", str(usecase_file), *RUN_ARGS, "--seed", "9", "--flows", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_invalid_use_case_fails(self, tmp_path, smarthome_xml, capsys):
        path = tmp_path / "bad.xml"
        path.write_text(smarthome_xml.replace("192.168.2.2", "192.168.1.2"))
        assert main(["run", str(path), *RUN_ARGS]) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_config_fails(self, usecase_file, capsys):
        code = main(["run", str(usecase_file), "--duration", "10",
                     "--attack-delay", "20", "--time-scale", "0"])
        assert code == 1
        assert "attack delay" in capsys.readouterr().err


class TestFeatures:
    def test_reproduces_run_flows(self, usecase_file, tmp_path, capsys):
        pcap = tmp_path / "out.pcap"
        direct = tmp_path / "direct.csv"
        main(["run", str(usecase_file), *RUN_ARGS,
              "--pcap", str(pcap), "--flows", str(direct)])

        refeat = tmp_path / "refeat.csv"
        assert main(["features", str(pcap), "--flows", str(refeat)]) == 0
        assert refeat.read_bytes() == direct.read_bytes()
        assert "rows" in capsys.readouterr().out

    def test_custom_attack_cidr_relabels(self, usecase_file, tmp_path):
        pcap = tmp_path / "out.pcap"
        main(["run", str(usecase_file), *RUN_ARGS, "--pcap", str(pcap)])
        flows = tmp_path / "f.csv"
        main(["features", str(pcap), "--flows", str(flows),
              "--attack-cidr", "10.9.0.0/16"])
        with open(flows, newline="") as fh:
            labels = {r["label"] for r in csv.DictReader(fh)}
        assert labels == {"normal"}

    def test_bad_cidr_is_usage_error(self, tmp_path):
        assert main(["features", str(tmp_path / "x.pcap"), "--flows",
                     str(tmp_path / "f.csv"), "--attack-cidr", "noise"]) == 2

    def test_unreadable_pcap_fails(self, tmp_path, capsys):
        missing = tmp_path / "absent.pcap"
        code = main(["features", str(missing), "--flows", str(tmp_path / "f.csv")])
        assert code == 1
        assert "cannot read" in capsys.readouterr().err
