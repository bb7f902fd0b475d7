from __future__ import annotations

from functools import lru_cache

import pytest

from conoco.harness import Strategy, preset, run_replications


@lru_cache(maxsize=None)
def cached_replications(preset_name: str, strategy: str = "conoco", n: int = 40,
                        wrong_key: bool = False, master_seed: int = 0):
    """Replication sets are expensive; share them across test modules."""
    return run_replications(preset(preset_name), Strategy(strategy), n, master_seed,
                            wrong_key=wrong_key)


@pytest.fixture(scope="session")
def replications():
    return cached_replications


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
