import io
import json
import subprocess
import sys

import pytest

from conftest import DATA, FIXTURES
from toucan.bench import CSV_FIELDS, run_bench
from toucan.cli import main

GOLDEN_KEY = "aec8b14e15662eed80cb799c97d2ef6f3467e40d1cd1874eaf532bf2df462b65"


def run(argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


@pytest.fixture
def golden_keys(tmp_path):
    path = tmp_path / "keys.txt"
    path.write_text(f"100-1FF {GOLDEN_KEY[:32]} {GOLDEN_KEY[32:]}\n")
    return path


@pytest.fixture
def demo_keys_file():
    return DATA / "demo_keys.txt"


class TestWrapAnalyze:
    def test_golden_line(self, golden_keys):
        code, out = run(["wrap", "0102030405", "--id", "100", "--keys", golden_keys])
        assert code == 0
        assert out == "(0.000000) can0 100#8E51DC75F12D55DD\n"

    def test_zero_payload(self, golden_keys):
        code, out = run(["wrap", "00", "--id", "1ff", "--keys", golden_keys, "--timestamp", "2.5",
                         "--channel", "vcan0"])
        assert code == 0 and out.startswith("(2.500000) vcan0 1FF#")

    @pytest.mark.parametrize("payload", ["010203040506", "zz", "123"])
    def test_bad_payload(self, golden_keys, payload, capsys):
        code, _ = run(["wrap", payload, "--id", "100", "--keys", golden_keys])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_id(self, golden_keys):
        code, _ = run(["wrap", "01", "--id", "300", "--keys", golden_keys])
        assert code == 2

    def test_round_trip(self, tmp_path, demo_keys_file):
        lines = []
        for i, (ident, payload) in enumerate([("100", "0102030405"), ("250", "ff"), ("1ab", "00"),
                                              ("2ff", "deadbeef01")]):
            code, out = run(["wrap", payload, "--id", ident, "--keys", demo_keys_file, "--timestamp", i])
            assert code == 0
            lines.append(out)
        log = tmp_path / "cap.log"
        log.write_text("".join(lines))
        code, out = run(["analyze", log, "--keys", demo_keys_file])
        assert code == 0
        rows = out.splitlines()
        assert rows[0].endswith("accept(0102030405)")
        assert rows[1].endswith("accept(ff00000000)")
        assert rows[-1] == "# frames=4 accepted=4 rejected=0"

    def test_corrupted_digit_rejects(self, tmp_path, golden_keys):
        _, line = run(["wrap", "0102030405", "--id", "100", "--keys", golden_keys])
        good = line.strip()
        bad = good[:-1] + ("0" if good[-1] != "0" else "1")
        log = tmp_path / "cap.log"
        log.write_text(f"{good}\n{bad}\n")
        code, out = run(["analyze", log, "--keys", golden_keys])
        assert code == 0
        rows = out.splitlines()
        assert rows[0] == "1 100#8E51DC75F12D55DD accept(0102030405)"
        assert rows[1].endswith("reject(bad_tag)")
        assert rows[2] == "# frames=2 accepted=1 rejected=1 bad_tag=1"

    def test_analyze_reasons_and_json(self, tmp_path, golden_keys):
        log = tmp_path / "cap.log"
        log.write_text("(0.0) can0 100#0102\n(0.0) can0 050#0011223344556677\n")
        code, out = run(["analyze", log, "--keys", golden_keys, "--format", "json"])
        assert code == 0
        doc = json.loads(out)
        assert [f["reason"] for f in doc["frames"]] == ["bad_dlc", "no_key"]
        assert doc["summary"]["rejected"] == 2

    def test_empty_log(self, tmp_path, golden_keys):
        log = tmp_path / "empty.log"
        log.write_text("")
        code, out = run(["analyze", log, "--keys", golden_keys])
        assert code == 0
        assert out == "# frames=0 accepted=0 rejected=0\n"

    def test_parse_error_names_line(self, tmp_path, golden_keys, capsys):
        log = tmp_path / "cap.log"
        log.write_text("(0.0) can0 100#00\nnonsense\n")
        code, _ = run(["analyze", log, "--keys", golden_keys])
        assert code == 2
        assert "line 2" in capsys.readouterr().err

    def test_tag_bits_and_profile(self, tmp_path, golden_keys):
        for flags in (["--tag-bits", "16"], ["--profile", "cmac"], ["--profile", "cmac", "--tag-bits", "32"]):
            _, line = run(["wrap", "0102", "--id", "100", "--keys", golden_keys, *flags])
            log = tmp_path / "one.log"
            log.write_text(line)
            code, out = run(["analyze", log, "--keys", golden_keys, *flags])
            assert code == 0 and "accept(" in out.splitlines()[0]


class TestRun:
    def test_demo_matches_fixture(self, tmp_path):
        code, out = run(["run", DATA / "demo.json", "--out", tmp_path])
        assert code == 0
        expected = (FIXTURES / "demo_metrics.csv").read_text()
        assert out == expected
        assert (tmp_path / "metrics.csv").read_text() == expected
        events = (tmp_path / "events.jsonl").read_text().splitlines()
        assert len(events) > 0 and all(json.loads(e)["tick"] >= 0 for e in events)

    def test_json_format_and_seed(self):
        code, out = run(["run", DATA / "replay.json", "--format", "json", "--seed", "5"])
        assert code == 0
        assert json.loads(out)["replay_accepted"] == 1

    def test_missing_file(self, tmp_path, capsys):
        code, _ = run(["run", tmp_path / "nope.json"])
        assert code == 2
        assert "nope.json" in capsys.readouterr().err

    def test_invalid_json_names_line(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "nodes": [\n')
        code, _ = run(["run", path])
        assert code == 2
        assert "bad.json:3" in capsys.readouterr().err

    def test_bad_seed_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", str(DATA / "demo.json"), "--seed", "abc"])
        assert exc.value.code == 1

    def test_fault_exit_code(self, tmp_path):
        path = tmp_path / "clash.json"
        path.write_text(json.dumps({
            "keys_file": str(DATA / "demo_keys.txt"),
            "nodes": [{"name": "a", "tx_ids": ["0x100"]}, {"name": "b"}],
            "schedule": [{"tick": 0, "node": "a", "id": "0x100", "payload": "01"}],
            "attacker": [{"kind": "inject", "tick": 0, "id": "0x100", "data": "00"}],
        }))
        code, _ = run(["run", path, "--out", tmp_path / "out"])
        assert code == 3
        assert (tmp_path / "out" / "events.jsonl").exists()


class TestUsage:
    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["bench", "--iterations", "0"],
                                      ["bench", "--iterations", "x"], ["wrap", "01"],
                                      ["analyze", "x.log", "--keys", "k", "--tag-bits", "20"]])
    def test_usage_errors(self, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "toucan", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "bench" in proc.stdout


class TestVectors:
    def test_verify_bundled(self):
        code, out = run(["vectors", "verify", FIXTURES / "golden_vectors.txt"])
        assert code == 0
        assert out.strip().endswith("vectors ok") and out.split("/")[0] == out.split("/")[1].split()[0]

    def test_make_then_verify(self, tmp_path):
        code, out = run(["vectors", "make", "--count", "5", "--seed", "3"])
        assert code == 0 and len(out.splitlines()) == 5
        path = tmp_path / "v.txt"
        path.write_text(out)
        assert run(["vectors", "verify", path]) == (0, "5/5 vectors ok\n")

    def test_verify_detects_mismatch(self, tmp_path):
        line = (FIXTURES / "golden_vectors.txt").read_text().splitlines()[1]
        path = tmp_path / "v.txt"
        path.write_text(line[:-1] + ("0" if line[-1] != "0" else "1") + "\n")
        code, out = run(["vectors", "verify", path])
        assert code == 2 and out.startswith("FAIL line 1")


class TestBench:
    def test_two_rows_csv(self):
        code, out = run(["bench", "--iterations", "2000", "--format", "csv", "--no-pin"])
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == ",".join(CSV_FIELDS)
        assert [line.split(",")[0] for line in lines[1:]] == ["Chaskey-8", "AES-128-CTR"]
        assert all(line.split(",")[1] == "8" for line in lines[1:])

    def test_table_shows_board_reference(self, tmp_path):
        code, out = run(["bench", "--iterations", "1000", "--rounds", "12", "--no-pin",
                         "--output", tmp_path / "b.csv"])
        assert code == 0
        assert "Chaskey-12" in out and "11.65" in out and "11.90" in out and "STM32F407" in out
        assert "host:" in out
        assert (tmp_path / "b.csv").read_text().startswith("algorithm,")

    def test_json(self):
        code, out = run(["bench", "--iterations", "500", "--format", "json", "--no-pin"])
        doc = json.loads(out)
        assert code == 0 and len(doc["results"]) == 2
        assert doc["board_reference"]["mean_us"]["Chaskey"] == 11.90

    @pytest.mark.slow
    def test_doubling_iterations_keeps_means(self):
        # interleave sizes and keep the best of three so host drift hits both
        small, large = [], []
        for _ in range(3):
            small.append(run_bench(50_000, warmup=5000))
            large.append(run_bench(100_000, warmup=5000))
        for row in range(2):
            a = min(rep[row].mean_us for rep in small)
            b = min(rep[row].mean_us for rep in large)
            assert large[0][row].iterations == 2 * small[0][row].iterations
            assert abs(a - b) <= 0.2 * max(a, b), (small[0][row].algorithm, a, b)
