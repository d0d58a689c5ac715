import time
from dataclasses import dataclass

import pytest

from lmpc_lab.lmpc import CampaignResult, LmpcProblem, run_until_convergence
from lmpc_lab.systems import AdaptiveDubinsInstance, ClqrInstance, DubinsInstance

_CRITERIA: dict = {}


@dataclass
class TimedCampaign:
    instance: object
    problem: LmpcProblem
    result: CampaignResult
    seconds: float

    @property
    def records(self):
        return self.result.records

    @property
    def final(self):
        return self.result.final


def run_timed(inst, **overrides) -> TimedCampaign:
    """Seed construction plus campaign, timed together."""
    t0 = time.perf_counter()
    ss = inst.initial_safe_set()
    prob = inst.problem(**overrides)
    res = run_until_convergence(prob, ss)
    return TimedCampaign(inst, prob, res, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def clqr_campaign():
    return run_timed(ClqrInstance())


@pytest.fixture(scope="session")
def clqr_unpruned():
    return run_timed(ClqrInstance(), restriction=False, bound_pruning=False)


@pytest.fixture(scope="session")
def clqr_relaxed():
    return run_timed(ClqrInstance(), mode="convex-relaxation")


@pytest.fixture(scope="session")
def dubins_campaign():
    return run_timed(DubinsInstance())


@pytest.fixture(scope="session")
def adaptive_campaign():
    return run_timed(AdaptiveDubinsInstance())


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "outcomes": []})
    if rep.when == "call":
        entry["outcomes"].append(rep.outcome)
    elif rep.failed or rep.skipped:
        entry["outcomes"].append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcomes = entry["outcomes"]
        verdict = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {entry['title']} "
                                    f"({outcomes.count('passed')}/{len(outcomes)} checks)")
