"""Case file parsing and validation."""

import copy
import json

import pytest

from froemt.case import (
    CaseParseError,
    CaseValidationError,
    builtin_case_path,
    load_case,
    parse_case,
)


@pytest.fixture()
def raw():
    return json.loads(builtin_case_path("wscc9").read_text())


def test_shipped_case():
    case = load_case("wscc9")
    assert len(case.buses) == 9 and len(case.machines) == 3 and len(case.loads) == 3
    assert all(ld.k == 0.1 for ld in case.loads)
    (f,) = case.faults
    assert (f.bus, f.phases, f.r_fault, f.t_apply, f.t_clear) == ("9", ("B", "C"), 0.001, 0.1, 0.3)
    assert case.slack == "1" and case.base_mva == 100.0 and case.frequency == 60.0


def test_round_trip_through_dict_keeps_hash(raw):
    case = parse_case(raw)
    again = parse_case(json.loads(json.dumps(case.to_dict())))
    assert again == case and again.hash == case.hash


def test_hash_tracks_content():
    case = load_case("wscc9")
    assert case.with_allocation(0.0).hash != case.hash
    assert case.without_events().hash != case.hash


def test_unknown_bus_names_the_branch(raw):
    raw["branches"][3]["to"] = "42"
    with pytest.raises(CaseValidationError) as info:
        parse_case(raw)
    msg = str(info.value)
    assert "branches[3]" in msg and raw["branches"][3]["id"] in msg and "'42'" in msg


def test_duplicate_slack(raw):
    raw["slack"] = ["1", "2"]
    with pytest.raises(CaseValidationError, match="slack"):
        parse_case(raw)


def test_slack_without_machine(raw):
    raw["slack"] = "5"
    with pytest.raises(CaseValidationError, match="slack"):
        parse_case(raw)


def test_all_problems_reported_with_paths(raw):
    bad = copy.deepcopy(raw)
    bad["loads"][0]["k"] = 1.5
    bad["machines"][1]["params"]["x_d"] = 0.01
    bad["events"]["breakers"] = [{"branch": "nope", "t": 0.2, "action": "open"}]
    with pytest.raises(CaseValidationError) as info:
        parse_case(bad)
    paths = " ".join(info.value.problems)
    for p in ("loads[0].k", "machines[1].params", "events.breakers[0].branch"):
        assert p in paths


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("system"),
    lambda d: d["branches"][0].pop("x"),
    lambda d: d["events"]["faults"][0].update(t_clear=0.05),
    lambda d: d["events"]["breakers"].append({"t": 0.2}),
    lambda d: d.update(schema=99),
])
def test_malformed_cases(raw, mutate):
    mutate(raw)
    with pytest.raises(CaseValidationError):
        parse_case(raw)


def test_unreadable_and_undecodable(tmp_path):
    with pytest.raises(CaseParseError):
        load_case(tmp_path / "missing.json")
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(CaseParseError):
        load_case(p)
    p.write_text("[1, 2]")
    with pytest.raises(CaseParseError):
        load_case(p)
