import pytest

from expanderlab.graph_core import build_configuration_graph

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one acceptance verdict; printed at the end of the run."""
    def _record(number: int, ok: bool, detail: str) -> None:
        _CRITERIA[number] = (ok, detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}")


@pytest.fixture(scope="session")
def default_topo():
    """The 1000-router, 64-uplink fabric used throughout the evaluation."""
    return build_configuration_graph(1000, 64, seed=1)


@pytest.fixture(scope="session")
def small_topo():
    return build_configuration_graph(200, 16, seed=7)


RING_EDGES = """
t v1  t v2  t v3  t v4
v1 w1  v1 w2  v1 w8  v2 w3  v2 w4  v3 w5  v3 w6  v3 r8  v4 w7  v4 w8  v4 r12
w1 r1  w1 r14  w1 r15  w2 r1  w2 r2  w3 r3  w3 r4  w4 r4  w4 r5  w4 w5
w5 r6  w5 r7  w6 r8  w6 r9  w6 r11  w7 r10  w7 r11  w8 r12  w8 r13  w8 r14
v2 o1  r6 o1  o1 o2  r2 o2  r3 o2  r7 o3  r8 o3
"""


@pytest.fixture(scope="session")
def ring_example():
    """Small hand-drawn fabric with one waypoint level around destination ``t``.

    Returns the topology, a name -> id map and a score function that makes
    each ``v`` node pick exactly the two ``w`` nodes drawn as its selections.
    """
    import numpy as np

    from expanderlab.graph_core import Topology

    names = ["t"] + [f"v{i}" for i in range(1, 5)] + [f"w{i}" for i in range(1, 9)] \
        + [f"r{i}" for i in range(1, 16)] + [f"o{i}" for i in range(1, 4)]
    ids = {name: i for i, name in enumerate(names)}
    toks = RING_EDGES.split()
    edges = [(ids[a], ids[b]) for a, b in zip(toks[::2], toks[1::2])]
    deg = np.bincount(np.array(edges).ravel(), minlength=len(names))
    topo = Topology(n=len(names), d=int(deg.max()), edges=np.array(edges), simple=True)

    picks = {"v1": ("w1", "w2"), "v2": ("w3", "w4"), "v3": ("w5", "w6"), "v4": ("w7", "w8")}
    wanted = {(ids[v], ids[w]) for v, ws in picks.items() for w in ws}

    def score(owner, cand):
        return np.array([0.0 if (o, c) in wanted else 1.0 for o, c in zip(owner.tolist(), cand.tolist())])

    return topo, ids, score
