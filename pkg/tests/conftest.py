from __future__ import annotations

import random
from contextlib import contextmanager

import pytest

from rankgate.caches import SessionCache
from rankgate.executor import Executor
from rankgate.model import CATEGORICAL, NUMERIC_CONTINUOUS, AttributeSchema, Tuple
from rankgate.source import SystemRanking, TopKSimulator

# Acceptance tests append "Cn PASS/FAIL ..." lines here; the summary hook
# prints them at the end of the run so the verdict survives output capture.
ACCEPTANCE_LINES: list[str] = []


@contextmanager
def criterion(tag: str, label: str):
    """Wrap one acceptance criterion; records its verdict for the summary."""
    try:
        yield
    except BaseException:
        ACCEPTANCE_LINES.append(f"{tag} FAIL {label}")
        raise
    ACCEPTANCE_LINES.append(f"{tag} PASS {label}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def build_source(values_by_attr: dict[str, list[float]], k: int = 3,
                 system_weights: dict[str, float] | None = None,
                 source_id: str = "unit",
                 domain: tuple[float, float] = (0.0, 10.0)) -> TopKSimulator:
    """Small numeric simulator from parallel value lists, domain [0, 10]."""
    attrs = sorted(values_by_attr)
    n = len(values_by_attr[attrs[0]])
    schemas = {a: AttributeSchema(a, NUMERIC_CONTINUOUS, domain[0], domain[1])
               for a in attrs}
    rows = [Tuple(f"t{i:03d}", {a: float(values_by_attr[a][i]) for a in attrs})
            for i in range(n)]
    ranking = SystemRanking.linear(system_weights or {attrs[0]: 1.0})
    return TopKSimulator(source_id, source_id, schemas, rows, k, ranking)


def fresh_executor(sim: TopKSimulator, session_id: str = "s0"):
    cache = SessionCache(session_id)
    return Executor(sim, cache.meter, session_cache=cache), cache


@pytest.fixture
def tiny_sim() -> TopKSimulator:
    return build_source({"x": [3.0, 7.0, 7.0, 9.0]}, k=3)


def mixed_source(n: int = 300, k: int = 5, seed: int = 11,
                 cluster: int = 35, cluster_value: float = 4.44,
                 source_id: str = "mixed") -> TopKSimulator:
    """Messier fixture source: two numeric attributes with value ties and a
    sizable equal-value cluster on x, plus a categorical color column. The
    system order disagrees with any single-attribute user order."""
    rng = random.Random(seed)
    schemas = {
        "x": AttributeSchema("x", NUMERIC_CONTINUOUS, 0.0, 10.0),
        "y": AttributeSchema("y", NUMERIC_CONTINUOUS, 0.0, 10.0),
        "color": AttributeSchema("color", CATEGORICAL,
                                 categories=("red", "blue", "green")),
    }
    rows = []
    for i in range(n):
        x = cluster_value if i < cluster else round(rng.uniform(0, 10), 2)
        rows.append(Tuple(f"t{i:04d}", {
            "x": x,
            "y": round(rng.uniform(0, 10), 2),
            "color": rng.choice(schemas["color"].categories),
        }))
    rng.shuffle(rows)
    ranking = SystemRanking.linear({"x": -0.7, "y": 0.3})
    return TopKSimulator(source_id, source_id, schemas, rows, k, ranking)
