import pytest

from aqmlab.config import ScenarioConfig
from aqmlab.scenario import run_scenario

SAMPLE_TRACE_LINES = [
    "r 1.3556 3 2 ack 40 ----- 1 3.0 0.0 15 201",
    "+ 1.3556 2 0 ack 40 ----- 1 3.0 0.0 15 201",
    "- 1.3556 2 0 ack 40 ----- 1 3.0 0.0 15 201",
    "r 1.35576 0 2 tcp 1000 ----- 1 0.0 3.0 29 199",
    "+ 1.35576 2 3 tcp 1000 ----- 1 0.0 3.0 29 199",
    "d 1.35576 2 3 tcp 1000 ----- 1 0.0 3.0 29 199",
    "+ 1.356 1 2 cbr 1000 ----- 2 1.0 3.1 157 207",
    "- 1.356 1 2 cbr 1000 ----- 2 1.0 3.1 157 207",
]


class Recorder:
    def __init__(self):
        self.records = []

    def __call__(self, rec):
        self.records.append(rec)


_cache = {}


def traced_run(aqm, duration_s=20.0, seed=42, **overrides):
    """Short default-scenario run with every trace record kept in memory (cached per argument set)."""
    key = (aqm, duration_s, seed, tuple(sorted(overrides.items())))
    if key not in _cache:
        rec = Recorder()
        config = ScenarioConfig(aqm=aqm, duration_s=duration_s, seed=seed, **overrides)
        result = run_scenario(config, extra_sinks=[rec])
        _cache[key] = (result, rec.records)
    return _cache[key]


@pytest.fixture(params=["droptail", "red", "sfq", "rem"])
def any_aqm(request):
    return request.param


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def verdict(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
