import random

import pytest

import locklab.sat
from locklab import cnf
from locklab import netlist as nl
from locklab.sat import SolveStatus


@pytest.fixture(autouse=True)
def _always_check_models(monkeypatch):
    monkeypatch.setattr(locklab.sat, "CHECK_MODELS", True)


def miter_status(c_a, c_b, budget=None):
    """SAT iff the two circuits (same input/output names) differ on some input."""
    f, vm_a = cnf.encode(c_a, label="a")
    shared = {n: vm_a.var(n) for n in c_a.inputs}
    f, vm_b = cnf.encode(c_b, f, label="b", shared=shared)
    diffs = []
    for o in c_a.outputs:
        d = f.new_var()
        cnf._xor2(f, d, vm_a.lit(o), vm_b.lit(o))
        diffs.append(d)
    f.add_clause(diffs)
    return cnf.solve(f, budget=budget).status


def equivalent(c_a, c_b):
    return miter_status(c_a, c_b) is SolveStatus.UNSAT


@pytest.fixture(scope="session")
def c17():
    return nl.from_lib("c17")


@pytest.fixture(scope="session")
def r432():
    return nl.from_lib("r432")


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def ref_eval(c, net, assignment, memo=None):
    """Reference simulator: memoized recursion from the net downward.

    Deliberately independent of the library's topological sweep so the two
    can cross-check each other.
    """
    if memo is None:
        memo = {}
    if net in memo:
        return memo[net]
    kind, fanins = c.gates[net]
    K = nl.GateKind
    if kind is K.INPUT:
        v = assignment[net]
    elif kind is K.CONST0:
        v = False
    elif kind is K.CONST1:
        v = True
    else:
        vals = [ref_eval(c, f, assignment, memo) for f in fanins]
        if kind is K.AND:
            v = all(vals)
        elif kind is K.NAND:
            v = not all(vals)
        elif kind is K.OR:
            v = any(vals)
        elif kind is K.NOR:
            v = not any(vals)
        elif kind is K.XOR:
            v = bool(sum(vals) & 1)
        elif kind is K.XNOR:
            v = not (sum(vals) & 1)
        elif kind is K.NOT:
            v = not vals[0]
        elif kind is K.BUF:
            v = vals[0]
        elif kind is K.MUX2:
            v = vals[2] if vals[0] else vals[1]
        else:
            raise AssertionError(kind)
    memo[net] = v
    return v


def ref_simulate(c, x):
    assignment = dict(zip(c.inputs, x))
    memo = {}
    return tuple(ref_eval(c, o, assignment, memo) for o in c.outputs)
