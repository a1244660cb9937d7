import csv
import io
import json
import math
import subprocess
import sys
from fractions import Fraction

import pytest

from auctionlab.cli import exact_decimal, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def write_json(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


ADDITIVE_PAIR = {"m": 2, "valuations": [{"kind": "xos", "clauses": [[3, 1]]},
                                        {"kind": "xos", "clauses": [[2, 2]]}]}


def test_exact_decimal_is_exact():
    assert exact_decimal(Fraction(1, 4)) == "0.25"
    assert exact_decimal(Fraction(3)) == "3.0"
    assert exact_decimal(Fraction(-1, 2)) == "-0.5"
    # floor of 1/3 at 64 bits has exactly 64 fractional digits
    assert len(exact_decimal(Fraction(1, 3)).split(".")[1]) == 64


def test_generate_family_fixture(capsys):
    code, out = run(capsys, "generate-family", "--fixture", "appendix-c")
    d = json.loads(out)
    assert code == 0 and d["twoSparse"] is True
    assert d["instantiated"] == [[[1, 2, 3, 4], [1, 2, 3, 4]], [[1, 2, 3, 4, 5], [1, 2, 3, 4, 6]]]


def test_generate_family_random(capsys, tmp_path):
    out_file = tmp_path / "fam.json"
    code, _ = run(capsys, "generate-family", "--m", "30", "--k", "3", "--ell", "2",
                  "--seed", "1", "--out", str(out_file))
    d = json.loads(out_file.read_text())
    assert code == 0 and d["verification"] == "independent: true (exhaustive)"
    assert d["family"]["m"] == 30 and d["attempts"] >= 1


def test_generate_family_gates(capsys):
    assert run(capsys, "generate-family", "--ell", "1", "--seed", "1")[0] == 2
    assert run(capsys, "generate-family", "--m", "30")[0] == 2  # no seed
    assert run(capsys, "generate-family", "--m", "30", "--seed", "1", "--budget-m", "10")[0] == 2


def test_generate_family_failure_exits_one(capsys):
    code, out = run(capsys, "generate-family", "--m", "2", "--k", "3", "--ell", "3",
                    "--seed", "4", "--retries", "2")
    assert code == 1 and json.loads(out)["independent"] is False


def test_ratio_tables_csv(capsys):
    code, out = run(capsys, "ratio-tables", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0][0] == "table"
    by_param = {(r[0], r[1]): r for r in rows[1:]}
    assert by_param[("sqrt3", "ell=100")][3].startswith("0.3848")
    assert by_param[("sqrt5", "m=1000")][3].startswith("0.828")
    assert by_param[("sqrt3", "limit")][3] == "0.366025"


def test_output_is_byte_identical(capsys, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        path = tmp_path / name
        run(capsys, "generate-family", "--m", "20", "--k", "2", "--ell", "2", "--seed", "9",
            "--out", str(path))
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    run(capsys, "ratio-tables", "--format", "csv", "--out", str(tmp_path / "c.csv"))
    run(capsys, "ratio-tables", "--format", "csv", "--out", str(tmp_path / "d.csv"))
    assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "d.csv").read_bytes()


def test_run_suite(capsys):
    code, out = run(capsys, "run-suite", "--seed", "0", "--only", "mechanisms")
    d = json.loads(out)
    assert code == 0 and d["passed"] and {c["module"] for c in d["checks"]} == {"mechanisms"}
    code, out = run(capsys, "run-suite", "--seed", "0", "--only", "core", "--inject-broken")
    d = json.loads(out)
    assert code == 1 and [c["detail"] for c in d["checks"] if not c["passed"]] == [
        "non-monotone fixture: v(1) > v(11)"]


def test_run_auction(capsys, tmp_path):
    prof = write_json(tmp_path, "p.json", ADDITIVE_PAIR)
    code, out = run(capsys, "run-auction", "--mech", "vcg", "--profile", prof)
    d = json.loads(out)
    assert code == 0 and d["allocation"] == [[1], [2]]
    assert d["payments"] == ["2/2^0", "1/2^0"]


def test_extract_menu(capsys, tmp_path):
    prof = write_json(tmp_path, "p.json", ADDITIVE_PAIR)
    code, out = run(capsys, "extract-menu", "--profile", prof, "--bidder", "0", "--canonical")
    d = json.loads(out)
    assert code == 0 and d["canonical"] is True
    prices = {tuple(e["bundle"]): e["price"] for e in d["entries"]}
    assert prices[()] == "0/2^0" and prices[(1,)] == "2/2^0" and prices[(1, 2)] == "4/2^0"
    assert run(capsys, "extract-menu", "--profile", prof, "--bidder", "5")[0] == 2


def test_domain_commands(capsys, tmp_path):
    dom = write_json(tmp_path, "d.json", {"m": 1, "domains": [
        [{"kind": "xos", "clauses": [[5]]}, {"kind": "xos", "clauses": [[4]]}],
        [{"kind": "xos", "clauses": [[3]]}]]})
    code, out = run(capsys, "check-truthful", "--mech", "vcg", "--domain", dom)
    assert code == 0 and json.loads(out)["truthful"]
    code, out = run(capsys, "check-truthful", "--mech", "gb1p", "--domain", dom)
    assert code == 1 and json.loads(out)["violations"][0]["gain"] == "1/2^0"
    code, out = run(capsys, "taxation-count", "--mech", "vcg", "--domain", dom)
    assert code == 0 and json.loads(out)["menusPerBidder"] == [1, 1]


def test_payment_bounds(capsys, tmp_path):
    v2 = write_json(tmp_path, "v.json", {"kind": "xos", "clauses": [[4, 6]]})
    code, out = run(capsys, "payment-bounds", "--valuation", v2, "--m", "2", "--S", "2",
                    "--alpha", "1/2", "--eps", "1/10")
    d = json.loads(out)
    assert code == 0 and d["upperExact"] == "161/10" and d["lowerExact"] == "9/10"
    code, out = run(capsys, "payment-bounds", "--valuation", v2, "--m", "2", "--S", "2",
                    "--eps", "1/1024", "--mech", "vcg")
    d = json.loads(out)
    assert code == 0 and d["sandwich"]["status"] == "pass" and d["sandwich"]["delta"] == "6"
    assert run(capsys, "payment-bounds", "--valuation", v2, "--m", "2", "--S", "2", "--alpha", "0")[0] == 2


def test_verify_dichotomy(capsys):
    code, out = run(capsys, "verify-dichotomy", "--ell", "100")
    d = json.loads(out)
    assert code == 0 and d["holds"] and abs(max(d["lowRatioApprox"], d["highRatioApprox"]) - 0.3848) < 1e-4
    assert run(capsys, "verify-dichotomy", "--ell", "2")[0] == 2


def test_transcript_commands(capsys, tmp_path):
    assert run(capsys, "check-rectangle", "--builtin", "full", "--K", "2")[0] == 0
    bad = write_json(tmp_path, "t.json", {"inputs": [1, 2],
                                          "map": [[0, 0, "A"], [1, 1, "A"], [0, 1, "B"], [1, 0, "C"]]})
    code, out = run(capsys, "check-rectangle", "--map", bad)
    assert code == 1
    assert run(capsys, "cover-check", "--builtin", "full", "--K", "3")[0] == 0
    assert run(capsys, "cover-check", "--builtin", "constant", "--K", "1")[0] == 1


def test_bound_calc(capsys):
    code, out = run(capsys, "bound-calc", "--K", "10")
    d = json.loads(out)["fourTupleBound"]
    assert code == 0 and d["bits"] == "76560905301892445120/2^64"
    code, out = run(capsys, "bound-calc", "--K", "1", "--k", "10", "--cc-sw", "2")
    assert json.loads(out)["countingBound"]["bits"] == pytest.approx(110 - 10 * math.log2(1028))


def test_bad_json_is_a_usage_error(capsys, tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert run(capsys, "run-auction", "--profile", str(p))[0] == 2
    assert run(capsys, "run-auction", "--profile", str(tmp_path / "missing.json"))[0] == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "auctionlab.cli", "bound-calc", "--K", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "fourTuple" in res.stdout
