import json

import pytest

from mtdup.cli import build_parser, main
from mtdup.report import Report, emit_report, parse_report
from mtdup.repscan import expected_distribution, histogram_csv, RunLengthHistogram


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_theorem_output(capsys):
    code, out, _ = run(capsys, "theorem", "--s", "0", "--t", "1")
    assert code == 0
    assert out.strip() == "rank=33 expected=33 PASS"


def test_theorem_t5_flagged(capsys):
    code, out, _ = run(capsys, "theorem", "--s", "4", "--t", "5")
    assert code == 0
    assert "outside hypothesis" in out
    assert "rank=48" in out


def test_theorem_bad_range(capsys):
    code, _, err = run(capsys, "theorem", "--s", "3", "--t", "1")
    assert code == 2
    assert "s <= t" in err


def test_prob_output(capsys):
    code, out, _ = run(capsys, "prob", "--events", "1,2,3")
    assert code == 0
    assert "2^-38" in out
    assert "e-12" in out  # decimal rendering alongside the dyadic


def test_prob_conditional(capsys):
    code, out, _ = run(capsys, "prob", "--events", "4", "--given", "3")
    assert code == 0
    assert "2^-8" in out


@pytest.mark.slow
def test_prob_window_too_large(capsys):
    # Event 15 needs a window past the 623-word bound; the full expansion is exact but slow.
    code, _, err = run(capsys, "prob", "--events", "15")
    assert code == 2
    assert "exceeds" in err


def test_unknown_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["theorem", "--bogus"])
    assert exc.value.code == 2


def test_bad_event_list(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["prob", "--events", "1,x"])
    assert exc.value.code == 2


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert "FAIL" not in out


def test_lemmas_mt64_labels_expected_failures(capsys):
    code, out, _ = run(capsys, "lemmas", "--gen", "mt64")
    assert code == 0
    assert "FAIL (expected: C not sparse)" in out


def test_expected_command(capsys, tmp_path):
    code, out, _ = run(capsys, "expected", "--runs", "1000000", "--out", str(tmp_path / "e.json"))
    assert code == 0
    assert "222 zeros" in out
    rep = json.loads((tmp_path / "e.json").read_text())
    assert rep["results"]["tail_zeros"] == 222


def _uniform_csv(tmp_path):
    total = 10**9
    b = expected_distribution(total)
    lines = ["run_length,count,expected,ratio,z"]
    for r in (622, 623, 624, 1245, 1246, 1247, 2491, 2492, 2493):
        lines.append(f"{r},{round(b[r])},{float(round(b[r]))!r},1.0,0.0")
    path = tmp_path / "uniform.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_spike_uniform(capsys, tmp_path):
    code, out, _ = run(capsys, "spike", "--in", str(_uniform_csv(tmp_path)))
    assert code == 0
    rows = [line for line in out.splitlines() if line.startswith("r=")]
    assert len(rows) == 9
    assert all("ratio=1 " in line for line in rows)
    assert "EXCEEDS" not in out


def test_spike_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "spike", "--in", str(tmp_path / "nope.csv"))
    assert code == 2


def test_spike_malformed(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("run_length,count\n1,2\n")
    code, _, err = run(capsys, "spike", "--in", str(bad))
    assert code == 2
    assert "malformed" in err


def test_repscan_csv_reingest(capsys, tmp_path):
    out_csv = tmp_path / "h.csv"
    code, _, _ = run(capsys, "repscan", "--runs", "40", "--gen", "control", "--seed", "3", "--out", str(out_csv))
    assert code == 0
    text = out_csv.read_text()
    assert text.startswith("run_length,count,expected,ratio,z\n")
    assert "OVERFLOW" in text
    code, out, _ = run(capsys, "spike", "--in", str(out_csv))
    assert code == 0
    # Ratios recomputed from the CSV's own expected column match the file.
    from mtdup.repscan import read_histogram_csv
    table = read_histogram_csv(text)
    for line in text.splitlines()[1:-1]:
        r, count, exp, ratio, _ = line.split(",")
        assert float(ratio) == int(count) / float(exp)
        assert table.expected[int(r)] == float(exp)


def test_repscan_json_and_resume(capsys, tmp_path):
    ck = tmp_path / "ck.json"
    a = tmp_path / "a.json"
    run(capsys, "repscan", "--runs", "6", "--gen", "control", "--seed", "5",
        "--out", str(tmp_path / "first.json"), "--format", "json", "--checkpoint", str(ck))
    run(capsys, "repscan", "--runs", "4", "--gen", "control", "--seed", "5",
        "--resume", str(ck), "--out", str(a), "--format", "json")
    whole = tmp_path / "w.json"
    run(capsys, "repscan", "--runs", "10", "--gen", "control", "--seed", "5",
        "--out", str(whole), "--format", "json")
    ha = json.loads(a.read_text())["results"]["histogram"]
    hw = json.loads(whole.read_text())["results"]["histogram"]
    assert ha == hw


def test_long_gating(capsys):
    code, _, err = run(capsys, "repscan", "--runs", "2000000", "--gen", "control", "--seed", "1", "--out", "x.csv")
    assert code == 2
    assert "--long" in err
    code, _, err = run(capsys, "conditional", "--given", "0", "--check", "1", "--trials", "20000000", "--seed", "1")
    assert code == 2
    code, _, err = run(capsys, "planted", "--trials", "1e8", "--seed", "1")
    assert code == 2


def test_conditional_rare_needs_long(capsys):
    code, _, err = run(capsys, "conditional", "--given", "", "--check", "3", "--trials", "10", "--seed", "1")
    assert code == 2


def test_conditional_report_round_trip(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    monkeypatch.setenv("MTDUP_OUTPUT_DIR", str(tmp_path))
    code, out, _ = run(capsys, "conditional", "--given", "0", "--check", "1",
                       "--trials", "2000", "--seed", "9", "--out", "c.json")
    assert code == 0
    data = (tmp_path / "c.json").read_bytes()
    rep = parse_report(data)
    assert emit_report(rep) == data
    assert rep.exact_probabilities["expectation"] == "2^-1"
    assert rep.seeds == {"entropy": 9}
    assert set(json.loads(data)) == {
        "command", "params", "results", "exact_probabilities", "timestamps", "tool_version", "seeds"
    }
    # Byte-stable with a pinned timestamp.
    run(capsys, "conditional", "--given", "0", "--check", "1",
        "--trials", "2000", "--seed", "9", "--out", "c2.json")
    assert (tmp_path / "c2.json").read_bytes() == data


def test_planted_command(capsys):
    code, out, _ = run(capsys, "planted", "--trials", "2000", "--seed", "4")
    assert code == 0
    assert out.startswith("frequency(623)=")


def test_emit_report_csv_requires_table():
    with pytest.raises(ValueError):
        emit_report(Report("x", {}, {}), "csv")


def test_parser_lists_all_commands():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == {
        "lemmas", "theorem", "prob", "conditional", "repscan", "expected", "spike", "planted", "selftest"
    }
