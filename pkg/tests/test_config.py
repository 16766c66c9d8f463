from __future__ import annotations

import pytest

from cphs.config import parse_config
from cphs.domain import evaluate_specification, sample_design
from cphs.errors import ContractError

MINIMAL = """
[hunt]
a = 0
c = 1
b = 2
m = 2.5
[probit_target]
beta0 = 1
beta1 = -0.5
[scm]
intercept = 1
"""


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.max_iterations == 3 and cfg.epsilon == 0.01 and cfg.ive.alpha == 0.1
    assert sum(cfg.schedule.counts.values()) == 180


def test_case_study_file(case_config):
    assert case_config.hunt.c == 0.9
    assert ("work_lux", "switch_on") in case_config.causal.pilot_edges
    assert case_config.training.hidden == (16, 16)
    value = evaluate_specification(case_config.specification, sample_design(case_config.design, 0))
    assert value > 0


def test_planted_differs_by_one_edge(case_config, planted_config):
    assert set(case_config.causal.pilot_edges) - set(planted_config.causal.pilot_edges) == {("outdoor_lux", "switch_on")}


@pytest.mark.parametrize(
    "extra, message",
    [
        ("[loop]\nmax_iterations = 0\n", "max_iterations"),
        ("[loop]\nepsilon = -1\n", "epsilon"),
        ("[causal]\npilot_edges = a b\n", "edge"),
        ("[design.variables.x]\ndomain = cube 1\ndistribution = point 1\n", "domain"),
    ],
)
def test_invalid_values(extra, message):
    with pytest.raises(ContractError, match=message):
        parse_config(MINIMAL + extra)


def test_missing_sections_and_keys():
    with pytest.raises(ContractError, match="probit_target"):
        parse_config("[hunt]\na=0\nc=1\nb=1\nm=1\n[scm]\n")
    with pytest.raises(ContractError, match="'m'"):
        parse_config(MINIMAL.replace("m = 2.5", ""))
    with pytest.raises(ContractError, match="number"):
        parse_config(MINIMAL.replace("m = 2.5", "m = high"))


def test_with_seed(case_config):
    assert case_config.with_seed(9).seed == 9 and case_config.seed != 9
