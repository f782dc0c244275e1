from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from covloc.instance import GeneratorConfig, Instance, generate

DATA = Path(__file__).parent / "data"


def make_instance(*, o, c, f, e, p, y0, a, b, g, h, prob) -> Instance:
    """Instance from plain nested lists (shapes as in the package docs)."""
    return Instance(o=np.asarray(o, float), c=np.asarray(c, float).reshape(len(o), -1),
                    f=np.asarray(f, float), e=e, p=p, y0=y0, a=np.asarray(a), b=np.asarray(b),
                    g=g, h=h, prob=prob)


def single_cell(K_costs=(), Kp_costs=(), *, prob=1.0, b=None, p=None, o=1.0, f=1.0, e=1, a=1):
    """One location, one demand point, one period, one scenario."""
    b = len(Kp_costs) if b is None else b
    p = b + len(K_costs) if p is None else p
    return make_instance(o=[[o]], c=[[]], f=[[f]], e=[e], p=[p], y0=[0], a=[[[[a]]]], b=[[[b]]],
                         g=[[[tuple(K_costs)]]], h=[[[tuple(Kp_costs)]]], prob=[prob])


def tiny_instances(count: int, seed0: int = 0):
    """Small generated instances covering every n in {2,3}, T in {1,2}, S in {1,2}."""
    shapes = [(n, T, S) for n in (2, 3) for T in (1, 2) for S in (1, 2)]
    out = []
    for k in range(count):
        n, T, S = shapes[k % len(shapes)]
        out.append(generate(GeneratorConfig(n=n, T=T, S=S, seed=seed0 + k)))
    return out


@pytest.fixture
def tiny_2x2():
    from covloc.instance import read_instance

    return read_instance(DATA / "tiny_2x2.inst.json")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[num])
