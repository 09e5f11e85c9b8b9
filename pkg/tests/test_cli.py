import json

import pytest

from evacs_audit.cli import main
from evacs_audit.config import ConfigError, build_recovery, build_scenarios, parse_int, parse_range, read_sections
from evacs_audit.election import TruthLog

WINDOW = "0x3000000:0x3100000"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def generate(tmp_path, capsys, *extra):
    code, out, _ = run(capsys, "generate", "--out", tmp_path, "--meta-seed", 5, "--location", "Kippax",
                       "--seed-window", WINDOW, "--with-truth", *extra)
    assert code == 0
    return json.loads(out)


# --- config parsing -------------------------------------------------------------


@pytest.mark.parametrize("text, value", [("10", 10), ("0x10", 16), ("2^24", 2**24), ("2**5", 32), ("1_000", 1000)])
def test_parse_int(text, value):
    assert parse_int(text) == value


def test_parse_range():
    assert parse_range("0x10:2^8") == (16, 256)
    with pytest.raises(ConfigError):
        parse_range("12")


def test_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text(
        "[election-model]\nlocations = Dickson, Kippax\nelectorate = Yerrabi\ndays = 3\n"
        "votes_per_day = 10\n\n[election-model.Kippax]\nrestarts_per_day = 1,2,1\n\n"
        "[seed-recovery]\nseed_range = 0:2^20\nworker_count = 2\n"
    )
    sections = read_sections(ini)
    dickson, kippax = build_scenarios(sections)
    assert (dickson.name, dickson.batch_id, dickson.restarts_per_day) == ("Dickson", "YER01000", [1, 1, 1])
    assert (kippax.batch_id, kippax.restarts_per_day, kippax.votes_per_day) == ("YER02000", [1, 2, 1], [10] * 3)
    rec = build_recovery(sections, {"worker_count": 3})
    assert rec.seed_range == (0, 2**20) and rec.worker_count == 3


def test_config_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match="bogus"):
        build_recovery({"seed-recovery": {"bogus": "1"}})


# --- generate ---------------------------------------------------------------------


def test_generate_is_deterministic(tmp_path, capsys):
    generate(tmp_path / "a", capsys)
    generate(tmp_path / "b", capsys)
    assert (tmp_path / "a" / "Kippax.csv").read_bytes() == (tmp_path / "b" / "Kippax.csv").read_bytes()


def test_generate_truth_only_on_request(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "--out", tmp_path, "--meta-seed", 1)
    assert code == 0
    assert (tmp_path / "Belconnen.csv").exists()
    assert not (tmp_path / "Belconnen.truth.json").exists()


def test_generate_nineteen_days(tmp_path, capsys):
    generate(tmp_path, capsys, "--days", 19, "--votes", 10)
    truth = TruthLog.from_dict(json.loads((tmp_path / "Kippax.truth.json").read_text()))
    assert len(truth.starts) == 19


def test_generate_refuses_huge_batch(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--out", tmp_path, "--meta-seed", 1, "--votes", 1_000_000)
    assert code == 1 and "split the batch" in err


def test_meta_seed_logged_when_absent(tmp_path, capsys, caplog):
    code, out, _ = run(capsys, "generate", "--out", tmp_path, "--votes", 3)
    assert code == 0 and "system entropy" in caplog.text
    assert json.loads(out)["meta_seed"] >= 0


# --- recover / reorder ---------------------------------------------------------------


def test_recover_round_trip(tmp_path, capsys):
    generate(tmp_path, capsys, "--votes", 200, "--miss-rate", 0.02)
    code, out, _ = run(capsys, "recover", tmp_path / "Kippax.csv", "--seed-range", WINDOW, "--out", tmp_path)
    assert code == 0
    report = json.loads(out)["batches"][0]
    truth = TruthLog.from_dict(json.loads((tmp_path / "Kippax.truth.json").read_text()))
    assert report["seed"] == truth.seeds[0]
    assert report["order"] == truth.published_sequence()
    assert (tmp_path / "recovery.json").exists()

    code, out, _ = run(capsys, "reorder", tmp_path / "Kippax.csv", tmp_path / "recovery.json")
    assert code == 0
    listing = json.loads(out)
    assert [b["pindex"] for b in listing] == truth.published_sequence()
    assert [b["position"] for b in listing] == list(range(1, 201))


def test_recover_segments_flag(tmp_path, capsys):
    generate(tmp_path, capsys, "--days", 3, "--votes", 40)
    code, out, _ = run(capsys, "recover", tmp_path / "Kippax.csv", "--segments", "--seed-range", WINDOW,
                       "--format", "text")
    assert code == 0 and out.count("  seed ") == 3


def test_recover_not_found(tmp_path, capsys):
    generate(tmp_path, capsys, "--votes", 50)
    code, out, _ = run(capsys, "recover", tmp_path / "Kippax.csv", "--seed-range", "0:0x10000")
    assert code == 2 and json.loads(out)["batches"][0]["status"] == "not_found"


def test_recover_ambiguous(tmp_path, capsys):
    csv_path = tmp_path / "one.csv"
    # 548937 is the first draw of seed 0; other seeds in range produce it early too
    csv_path.write_text("electorate,batch,pindex,rank,party,candidate\nYerrabi,YER01000,548937,1,ALP,ALP1\n")
    code, out, _ = run(capsys, "recover", csv_path, "--seed-range", "0:2^20", "--miss-threshold", 64,
                       "--top-k", 4096)
    assert code == 3 and len(json.loads(out)["batches"][0]["seeds"]) >= 2


def test_recover_no_electronic_batches(tmp_path, capsys):
    csv_path = tmp_path / "paper_ballots.csv"
    csv_path.write_text("electorate,batch,pindex,rank,party,candidate\nYerrabi,YER01001,5,1,ALP,ALP1\n")
    code, out, _ = run(capsys, "recover", csv_path, "--format", "text")
    assert code == 2 and "no electronic batches" in out


def test_recover_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "recover", tmp_path / "nope.csv")
    assert code == 1 and "cannot read" in err


def test_recover_bad_csv(tmp_path, capsys):
    csv_path = tmp_path / "bad.csv"
    csv_path.write_text("electorate,batch,pindex,rank,party,candidate\nYerrabi,YER01000,abc,1,ALP,ALP1\n")
    code, _, err = run(capsys, "recover", csv_path)
    assert code == 1 and "line 2" in err


@pytest.mark.parametrize("argv", [["frobnicate"], ["recover"], ["bias", "--format", "xml"]])
def test_usage_error_exit_code(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


# --- bias, prng-dump --------------------------------------------------------------------


def test_bias_default_table(capsys):
    code, out, _ = run(capsys, "bias")
    rows = {r["electorate"]: r for r in json.loads(out)}
    assert code == 0
    assert rows["Brindabella"]["bias"] == "0/256"
    assert rows["Ginninderra"]["bias"] == "3/256" and len(rows["Ginninderra"]["favored"]) == 3
    assert rows["Yerrabi"]["bias"] == "4/256" and len(rows["Yerrabi"]["favored"]) == 4


def test_bias_columns_and_sweep(capsys):
    code, out, _ = run(capsys, "bias", "--columns", 1, "--columns", 10)
    rows = json.loads(out)
    assert code == 0 and rows[0]["bias"] == "0/256" and rows[1]["bias"] == "6/256"
    code, out, _ = run(capsys, "bias", "--sweep")
    assert code == 0 and json.loads(out) == {"checked": 256, "mismatches": []}


def test_bias_electorate_file(tmp_path, capsys):
    path = tmp_path / "e.json"
    path.write_text(json.dumps([{"name": "Tiny", "columns": 3}]))
    code, out, _ = run(capsys, "bias", "--electorates", path, "--format", "text")
    assert code == 0 and "Tiny" in out and "1/256" in out


def test_prng_dump(capsys):
    code, out, _ = run(capsys, "prng-dump", 1, "-k", 3)
    assert code == 0 and out.split()[0] == "1791095845" and len(out.split()) == 3


# --- tls, bench ------------------------------------------------------------------------


def test_tls_subcommands(tmp_path, capsys):
    code, _, _ = run(capsys, "tls", "corpus", "--out", tmp_path)
    assert code == 0
    code, out, _ = run(capsys, "tls", "matrix", "--out", tmp_path)
    assert code == 0 and json.loads(out)["conforms"] is True
    code, _, _ = run(capsys, "tls", "matrix", "--out", tmp_path, "--no-ca")
    assert code == 4
    code, out, _ = run(capsys, "tls", "lint", tmp_path / "tls-corpus" / "missing_hostname-cert.pem")
    assert code == 0 and json.loads(out)["hostname_present"] is False
    code, out, _ = run(capsys, "tls", "lint", tmp_path / "tls-corpus" / "valid-cert.pem")
    assert json.loads(out)["clean"] is True


def test_tls_matrix_without_corpus(tmp_path, capsys):
    code, _, err = run(capsys, "tls", "matrix", "--out", tmp_path)
    assert code == 1 and "tls corpus" in err


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", "--window-log2", 14, "--ballots", 100, "--meta-seed", 2)
    report = json.loads(out)
    assert code == 0 and report["seeds_per_second"] > 0
    assert report["seeds_scanned"] == 2**14 and report["hidden_seed_in_candidates"]
    assert report["extrapolated_full_scan_seconds"] == pytest.approx(
        report["window_seconds"] * 2**29 / 2**14, rel=0.01, abs=0.2)
