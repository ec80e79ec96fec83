"""Oracle-guided miter attack, acyclic key conditions, and structural key models.

The attack keeps one growing clause database: a two-key miter over the locked
circuit plus one pair of input-output constraint copies per learned
distinguishing input. Constant folding of the fixed inputs keeps those copies
small. Termination means the remaining key space is functionally uniform, so
any consistent key is exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from random import Random
from time import monotonic
from typing import Callable, Iterable, Iterator

import networkx as nx

from . import cnf
from .locks import LockedCircuit, LockKind
from .netlist import BitVector, Circuit, CyclicCircuitError, GateKind, is_acyclic, simulate
from .sat import Solver, SolveStatus


class AttackError(Exception):
    pass


@dataclass(frozen=True)
class IoPair:
    x: BitVector
    y: BitVector


@dataclass
class TraceEntry:
    elapsed_s: float
    pair: IoPair
    key: BitVector | None = None


class AttackOutcome(Enum):
    TERMINATED = "TERMINATED"
    TIMEOUT = "TIMEOUT"


@dataclass
class AttackTrace:
    iterations: list[TraceEntry] = field(default_factory=list)
    outcome: AttackOutcome = AttackOutcome.TIMEOUT
    final_key: BitVector | None = None

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


class Oracle:
    """Black-box input-to-output evaluator; counts its queries.

    Backed either by the original circuit in process or by a replayed IO log.
    It never sees, let alone reveals, a key.
    """

    def __init__(self, fn: Callable[[BitVector], BitVector], n_inputs: int, n_outputs: int):
        self._fn = fn
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.calls = 0

    @classmethod
    def from_circuit(cls, c: Circuit) -> "Oracle":
        return cls(lambda x: simulate(c, x), c.n_inputs, c.n_outputs)

    @classmethod
    def from_replay(cls, pairs: Iterable[IoPair]) -> "Oracle":
        table = {p.x.bits: p.y for p in pairs}
        if not table:
            raise AttackError("empty replay log")
        some = next(iter(table))

        def fn(x: BitVector) -> BitVector:
            try:
                return table[x.bits]
            except KeyError:
                raise AttackError(f"replay log has no entry for input {x.to_hex()}") from None

        n_out = next(iter(table.values())).width
        return cls(fn, len(some), n_out)

    def __call__(self, x: BitVector) -> BitVector:
        self.calls += 1
        return self._fn(x)


def _map_key_conditions(
    clauses: list[list[int]], key_vars: list[int]
) -> Iterator[list[int]]:
    for clause in clauses:
        out = []
        for lit in clause:
            idx = abs(lit) - 1
            if idx >= len(key_vars):
                raise AttackError(f"key condition references key_{idx}, width {len(key_vars)}")
            out.append(key_vars[idx] if lit > 0 else -key_vars[idx])
        yield out


class _MiterState:
    """The attack's growing formula plus bookkeeping to read models back."""

    def __init__(self, cl: LockedCircuit, key_conditions):
        self.cl = cl
        self.cyclic = not is_acyclic(cl.circuit)
        if self.cyclic and key_conditions is None:
            raise CyclicCircuitError(
                "locked circuit is cyclic; conjoin cycsat_conditions() first"
            )
        c = cl.circuit
        self.f = cnf.CnfFormula()
        self.f, self.vm_a = cnf.encode(c, self.f, label="k0", allow_cyclic=self.cyclic)
        shared = {n: self.vm_a.var(n) for n in cl.data_inputs}
        self.f, self.vm_b = cnf.encode(
            c, self.f, label="k1", shared=shared, allow_cyclic=self.cyclic
        )
        self.keys_a = [self.vm_a.var(k) for k in cl.key_inputs]
        self.keys_b = [self.vm_b.var(k) for k in cl.key_inputs]
        diffs = []
        for o in c.outputs:
            d = self.f.new_var()
            cnf._xor2(self.f, d, self.vm_a.lit(o), self.vm_b.lit(o))
            diffs.append(d)
        self.diff = self.f.new_var()
        self.f.add_clause([-self.diff] + diffs)
        if key_conditions:
            for side in (self.keys_a, self.keys_b):
                for clause in _map_key_conditions(key_conditions, side):
                    self.f.add_clause(clause)
        self.solver = Solver(self.f.num_vars, self.f.clauses)
        self._n_clauses = len(self.f.clauses)

    def _sync(self) -> None:
        while self.solver.nvars < self.f.num_vars:
            self.solver.new_var()
        for clause in self.f.clauses[self._n_clauses :]:
            self.solver.add_clause(clause)
        self._n_clauses = len(self.f.clauses)

    def add_io_constraint(self, pair: IoPair) -> None:
        c = self.cl.circuit
        bind = dict(zip(self.cl.data_inputs, pair.x))
        for key_vars in (self.keys_a, self.keys_b):
            shared = dict(zip(self.cl.key_inputs, key_vars))
            _, vm = cnf.encode(
                c, self.f, shared=shared, bind=bind, allow_cyclic=self.cyclic
            )
            for o, y_bit in zip(c.outputs, pair.y):
                folded = vm.const(o)
                if folded is not None:
                    if folded != y_bit:
                        raise AttackError(
                            "oracle response contradicts key-independent output"
                        )
                    continue
                self.f.add_clause([vm.lit(o, y_bit)])
        self._sync()

    def solve_miter(self, budget):
        return self.solver.solve([self.diff], budget)

    def solve_any_key(self, budget):
        return self.solver.solve([], budget)

    def key_of(self, model) -> BitVector:
        return BitVector.from_bits(model[v] for v in self.keys_a)

    def input_of(self, model) -> BitVector:
        return BitVector.from_bits(
            self.vm_a.value_in(model, n) for n in self.cl.data_inputs
        )


def miter_attack(
    cl: LockedCircuit,
    oracle: Oracle,
    timeout: float | None = None,
    trace_keys: bool = False,
    key_conditions: list[list[int]] | None = None,
) -> AttackTrace:
    """Run the three-step oracle-guided attack until the miter is unsatisfiable.

    Each iteration finds an input on which two consistent keys disagree, asks
    the oracle for the true output, and constrains both key copies with the
    learned pair. With ``trace_keys`` an extra solver call per iteration
    records a key satisfying everything learned so far. On timeout (checked
    between iterations and inside every solver call) the partial trace is
    returned with outcome ``TIMEOUT``.
    """
    if oracle.n_inputs != len(cl.data_inputs):
        raise AttackError("oracle input width does not match locked circuit")
    state = _MiterState(cl, key_conditions)
    start = monotonic()
    deadline = start + timeout if timeout is not None else None
    trace = AttackTrace()
    last_elapsed = 0.0

    def remaining():
        return None if deadline is None else deadline - monotonic()

    while True:
        budget = remaining()
        if budget is not None and budget <= 0:
            return trace
        res = state.solve_miter(budget)
        if res.status is SolveStatus.TIMEOUT:
            return trace
        if res.status is SolveStatus.UNSAT:
            budget = remaining()
            if budget is not None and budget <= 0:
                return trace
            final = state.solve_any_key(budget)
            if final.status is SolveStatus.TIMEOUT:
                return trace
            if final.status is SolveStatus.UNSAT:
                raise AttackError("accumulated IO constraints are unsatisfiable")
            trace.outcome = AttackOutcome.TERMINATED
            trace.final_key = state.key_of(final.model)
            return trace

        x = state.input_of(res.model)
        y = oracle(x)
        pair = IoPair(x, y)
        state.add_io_constraint(pair)

        key = None
        if trace_keys:
            budget = remaining()
            if budget is not None and budget <= 0:
                return trace
            keyed = state.solve_any_key(budget)
            if keyed.status is SolveStatus.TIMEOUT:
                return trace
            if keyed.status is SolveStatus.UNSAT:
                raise AttackError("accumulated IO constraints are unsatisfiable")
            key = state.key_of(keyed.model)
        last_elapsed = max(monotonic() - start, last_elapsed + 1e-9)
        trace.iterations.append(TraceEntry(last_elapsed, pair, key))


def extract_key(pairs: Iterable[IoPair], cl: LockedCircuit) -> BitVector:
    """Any key consistent with every stored IO pair.

    After the miter goes unsatisfiable all such keys are functionally
    equivalent, so the solver's first model is as good as any. An
    unsatisfiable constraint set indicates an internal inconsistency.
    """
    cyclic = not is_acyclic(cl.circuit)
    f = cnf.CnfFormula()
    key_vars = [f.new_var() for _ in cl.key_inputs]
    shared = dict(zip(cl.key_inputs, key_vars))
    for pair in pairs:
        bind = dict(zip(cl.data_inputs, pair.x))
        _, vm = cnf.encode(cl.circuit, f, shared=shared, bind=bind, allow_cyclic=cyclic)
        for o, y_bit in zip(cl.circuit.outputs, pair.y):
            folded = vm.const(o)
            if folded is not None:
                if folded != y_bit:
                    raise AttackError("IO pair contradicts key-independent output")
                continue
            f.add_clause([vm.lit(o, y_bit)])
    res = cnf.solve(f)
    if res.status is not SolveStatus.SAT:
        raise AttackError("IO constraint set unsatisfiable: inconsistent pairs")
    return BitVector.from_bits(res.model[v] for v in key_vars)


def cycsat_conditions(cl: LockedCircuit, max_cycles: int = 10_000) -> list[list[int]]:
    """Clauses over key bits forbidding selections that close structural cycles.

    Literal ``i+1`` stands for ``key_i`` true. Every simple cycle through
    key-controlled MUX data edges yields one clause blocking the selection
    pattern that realizes it; conjoined onto an attack, every satisfying key
    then drives an acyclic effective circuit.
    """
    if cl.lock_kind is not LockKind.CYCLIC_MUX:
        raise AttackError("acyclic key conditions apply to cyclic MUX locks")
    c = cl.circuit
    key_index = {net: i for i, net in enumerate(cl.key_inputs)}
    g = nx.DiGraph()
    g.add_nodes_from(c.gates)
    for net, (_, fanins) in c.gates.items():
        for f_net in fanins:
            g.add_edge(f_net, net)

    clauses: set[frozenset[int]] = set()
    n_seen = 0
    for cycle in nx.simple_cycles(g):
        n_seen += 1
        if n_seen > max_cycles:
            raise AttackError(
                f"more than {max_cycles} structural cycles; reduce the number of "
                "cyclic lock sites"
            )
        enabling: list[int] = []
        blockable = False
        for u, v in zip(cycle, cycle[1:] + cycle[:1]):
            kind, fanins = c.gates[v]
            if kind is not GateKind.MUX2 or fanins[0] not in key_index:
                continue
            sel_idx = key_index[fanins[0]]
            _, d0, d1 = fanins
            if u == d0 and u == d1:
                continue  # edge live under both selections; not blockable here
            if u == d1:
                enabling.append(sel_idx + 1)  # key bit true enables this edge
                blockable = True
            elif u == d0:
                enabling.append(-(sel_idx + 1))
                blockable = True
        if not blockable:
            raise AttackError("structural cycle without any key-controlled edge")
        clauses.add(frozenset(-lit for lit in enabling))
    return [sorted(cl_, key=abs) for cl_ in sorted(clauses, key=lambda s: sorted(s, key=abs))]


# -- key-space samplers --------------------------------------------------------


def biased_key_sampler(k_c: BitVector, p: float, seed: int = 0) -> Iterator[BitVector]:
    """Keys whose bits independently agree with ``k_c`` with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    rng = Random(seed)
    while True:
        yield BitVector.from_bits(
            bit if rng.random() < p else not bit for bit in k_c
        )


def uniform_key_sampler(width: int, seed: int = 0) -> Iterator[BitVector]:
    """Uniform random keys of the given width."""
    rng = Random(seed)
    while True:
        yield BitVector.random(rng, width)


def exhaustive_keys(width: int) -> Iterator[BitVector]:
    """All ``2**width`` keys in numeric order."""
    for v in range(1 << width):
        yield BitVector.from_int(v, width)


# -- trace and replay files ------------------------------------------------------


def write_trace_csv(trace: AttackTrace, fp) -> None:
    """CSV with one row per iteration and an outcome footer row."""
    own = isinstance(fp, (str,)) or hasattr(fp, "__fspath__")
    handle = open(fp, "w", newline="") if own else fp
    try:
        w = csv.writer(handle)
        w.writerow(["iter", "elapsed_s", "x_hex", "y_hex", "key_hex"])
        for i, entry in enumerate(trace.iterations):
            w.writerow(
                [
                    i,
                    f"{entry.elapsed_s:.6f}",
                    entry.pair.x.to_hex(),
                    entry.pair.y.to_hex(),
                    entry.key.to_hex() if entry.key is not None else "",
                ]
            )
        w.writerow(
            [
                trace.outcome.value,
                trace.final_key.to_hex() if trace.final_key is not None else "",
            ]
        )
    finally:
        if own:
            handle.close()


def trace_csv_text(trace: AttackTrace) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    return buf.getvalue()


def read_replay_csv(fp, n_inputs: int, n_outputs: int) -> list[IoPair]:
    """Recover the IO pairs from a trace CSV for oracle replay."""
    own = isinstance(fp, (str,)) or hasattr(fp, "__fspath__")
    handle = open(fp, newline="") if own else fp
    try:
        rows = list(csv.reader(handle))
    finally:
        if own:
            handle.close()
    pairs = []
    for row in rows[1:]:
        if len(row) != 5:
            break  # outcome footer
        pairs.append(
            IoPair(
                BitVector.from_hex(row[2], n_inputs),
                BitVector.from_hex(row[3], n_outputs),
            )
        )
    return pairs
