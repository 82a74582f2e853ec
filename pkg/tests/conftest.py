"""Shared fixtures, plus a registry of every uncertain trajectory built during the run.

Each ``UncertainTrajectory`` constructed anywhere in the suite is checked
for flow conservation and, when acyclic, for path-likelihood normalization.
Those produced by the sampler (they carry its attempt count) are marked
``inferred``; hand-built ones in unit tests need not conserve flow. The
acceptance module runs last and asserts over every inferred entry.
"""

from __future__ import annotations

from collections import defaultdict

import pytest

from infertra import fixtures
from infertra.uncertain import UncertainTrajectory

PATH_LIMIT = 20_000
REGISTRY = []
_init = UncertainTrajectory.__init__


def likelihood_total(u):
    """``(sum of trajectory_likelihood over source->dest paths, method)``.

    Paths are enumerated when there are at most ``PATH_LIMIT``; larger
    acyclic graphs use the same sum computed by dynamic programming.
    """
    try:
        return sum(u.trajectory_likelihood(p) for p in u.paths(limit=PATH_LIMIT)), "enumerated"
    except RuntimeError:
        pass
    dst = u.network.dst
    memo = {u.dest: 1.0}

    def total(v):
        if v not in memo:
            memo[v] = sum(u._step_ratio(e) * total(int(dst[e])) for e in u.out_edges(v))
        return memo[v]

    return total(u.source), "dp"


def _record(u):
    rec = {"repr": repr(u), "imbalance": u.flow_imbalance(), "acyclic": u.is_acyclic(),
           "inferred": "attempts" in (u.stats or {})}
    if rec["acyclic"]:
        rec["likelihood_total"], rec["method"] = likelihood_total(u)
    REGISTRY.append(rec)


def _tracked_init(self, *args, **kwargs):
    _init(self, *args, **kwargs)
    _record(self)


UncertainTrajectory.__init__ = _tracked_init


def pytest_collection_modifyitems(config, items):
    last = [it for it in items if it.module.__name__.endswith("test_acceptance")]
    rest = [it for it in items if not it.module.__name__.endswith("test_acceptance")]
    items[:] = rest + last


def registry_summary():
    out = defaultdict(int)
    for r in REGISTRY:
        if not r["inferred"]:
            continue
        out["total"] += 1
        out["acyclic"] += r["acyclic"]
        out[r.get("method", "cyclic")] += 1
    return dict(out)


@pytest.fixture(scope="session")
def d4():
    return fixtures.load_fixture("d4")


@pytest.fixture(scope="session")
def branching():
    return fixtures.load_fixture("branching")


@pytest.fixture(scope="session")
def bimodal():
    return fixtures.load_fixture("bimodal")


@pytest.fixture(scope="session")
def d4_model(d4):
    from infertra import NetworkMobilityModel

    net, db, _ = d4
    return NetworkMobilityModel(net, order=1).fit(db)


@pytest.fixture(scope="session")
def d4_u(d4, d4_model):
    from infertra import Observation, RwrConfig, infer

    net = d4[0]
    obs = Observation((net.node_of("a"), net.node_of("d")), (28800, 28920))
    return infer(d4_model, obs, RwrConfig(seed=0, min_samples=20_000))


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if not item.module.__name__.endswith("test_acceptance"):
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        detail = dict(item.user_properties).get("measured", "")
        ACCEPTANCE[item.name] = ("PASS" if rep.outcome == "passed" else "FAIL", doc, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(ACCEPTANCE):
        status, doc, detail = ACCEPTANCE[name]
        line = f"{status}  {doc}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
