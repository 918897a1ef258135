import json
import re

import pytest

from locfell.config import ConfigError, build_config, load_config, parse_config

GOOD = """{
 "seed": 5,
 "families": {
  "bm": {"kind": "diffusion", "dt": 0.001, "T": 1.0}
 },
 "experiments": [
  {"type": "pmp", "family": "bm",
   "functions": [{"name": "gaussian_bump", "center": 0, "width": 1}]}
 ]
}
"""


def error_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "exp.json")
    return str(info.value)


def line_of(message):
    m = re.match(r"exp\.json:(\d+): ", message)
    assert m, message
    return int(m.group(1))


def test_good_config_builds():
    cfg = build_config(parse_config(GOOD))
    assert cfg.seed == 5 and list(cfg.families) == ["bm"]
    assert cfg.families["bm"].sigma.name == "one"


def test_unknown_family_kind_points_at_its_line():
    msg = error_of(GOOD.replace('"kind": "diffusion"', '"kind": "levy"'))
    assert line_of(msg) == 4 and "kind" in msg


def test_unknown_key_is_rejected_with_line():
    msg = error_of(GOOD.replace('"family": "bm",', '"family": "bm", "colour": 3,'))
    assert line_of(msg) == 7 and "colour" in msg


def test_unknown_family_reference():
    msg = error_of(GOOD.replace('"family": "bm",', '"family": "ou",'))
    assert line_of(msg) == 7 and "unknown family 'ou'" in msg


def test_bad_function_name():
    msg = error_of(GOOD.replace('"gaussian_bump"', '"sinc"'))
    assert line_of(msg) == 8


def test_invalid_json_reports_its_line():
    msg = error_of(GOOD.replace('"seed": 5,', '"seed": 5,,'))
    assert line_of(msg) == 2


def test_reversed_interval_rejected():
    text = json.dumps({"families": {"bm": {"kind": "diffusion"}},
                       "experiments": [{"type": "martingale", "family": "bm", "N": 100,
                                        "functions": [{"name": "gaussian_bump"}],
                                        "opens": [[1, -1]], "times": [[0.1, 0.5]]}]}, indent=1)
    assert "lo < hi" in error_of(text)


def test_expect_field_is_validated():
    msg = error_of(GOOD.replace('"family": "bm",', '"family": "bm", "expect": "maybe",'))
    assert line_of(msg) == 7


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.json")
