import functools

import pytest

from searobust.sim import campaign, run

# acceptance results, filled in by test_acceptance and printed at the end
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def campaign_result(name: str, dt: float | None = None):
    sc = campaign(name)
    if dt is not None:
        from dataclasses import replace

        sc = replace(sc, dt=dt)
    return run(sc)


@pytest.fixture
def record():
    def _record(key: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[key] = (bool(ok), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
