from __future__ import annotations

import pytest

from uigaug.embed import embed_uig, hashing_embedder
from uigaug.synth import SynthConfig, make_uig
from uigaug.uig import Action, DocRecord, Event, NodeId, SummaryRecord, Trajectory, Uig

_ACTIONS = {"CLK": Action.CLICK, "SKP": Action.SKIP, "GSM": Action.GEN_SUMM, "SMG": Action.SUMM_GEN}


def traj(user: str, labels: str | list[str]) -> Trajectory:
    """Build a trajectory from labels like "CLK:MT SKP:PR GSM:MT SMG:s1"."""
    if isinstance(labels, str):
        labels = labels.split()
    events = []
    for lab in labels:
        tag, node = lab.split(":", 1)
        action = _ACTIONS[tag]
        nid = NodeId.summary(node) if action is Action.SUMM_GEN else NodeId.doc(node)
        events.append(Event(0, nid, action))
    return Trajectory.from_events(user, events)


def pool(*trajs: Trajectory, topics: dict[str, str] | None = None, body: int = 2) -> Uig:
    """Wrap trajectories with auto-generated doc and summary records."""
    docs, sums = {}, {}
    for tr in trajs:
        for i, ev in enumerate(tr.events):
            if ev.action is Action.SUMM_GEN:
                src = tr.events[i - 1].node.id
                sums[ev.node.id] = SummaryRecord(ev.node.id, f"summary {ev.node.id} of {src}", src, tr.user)
            else:
                d = ev.node.id
                topic = (topics or {}).get(d, f"topic-{d}")
                docs[d] = DocRecord(d, f"title {d}", tuple(f"{d} sentence {k}." for k in range(body)), topic)
    return Uig(tuple(trajs), docs, sums)


ALICE = "CLK:MT CLK:YR SKP:PR CLK:GW SKP:TA SKP:CR CLK:MB SKP:DK CLK:WC"
ALICE_DS = "CLK:MT CLK:YR SKP:PR CLK:CS CLK:BI SKP:CR CLK:MB CLK:SH SKP:MO".split()


@pytest.fixture
def alice_bob_joe() -> list[Trajectory]:
    return [traj("alice", ALICE), traj("bob", "CLK:CS CLK:BI"), traj("joe", "CLK:SH SKP:MO")]


@pytest.fixture(scope="session")
def small_pool() -> Uig:
    return make_uig(SynthConfig(n_users=40, n_docs=150, seed=11))


@pytest.fixture(scope="session")
def small_store(small_pool):
    return embed_uig(small_pool, hashing_embedder(32), 32)


# ---------------------------------------------------- acceptance summary lines

_ACCEPTANCE: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        if rep.skipped and hasattr(rep, "wasxfail"):
            status = "FAIL (expected)"
        elif rep.skipped:
            status = "SKIP"
        else:
            status = "PASS" if rep.passed else "FAIL"
        _ACCEPTANCE.append((marker.args[0], status))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in sorted(_ACCEPTANCE, key=lambda x: (int(x[0].split()[0].lstrip("AC").rstrip("abc")), x[0])):
        terminalreporter.write_line(f"{status:16s} {label}")
