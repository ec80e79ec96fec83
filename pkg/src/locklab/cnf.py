"""Circuit-to-CNF encoding, XOR constraints, projected model enumeration, DIMACS IO."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from time import monotonic
from typing import Iterable, Sequence

from .netlist import Circuit, CyclicCircuitError, GateKind
from .sat import Solver, SolveResult, SolveStatus


@dataclass
class CnfFormula:
    """Clause database plus a record of the XOR constraints folded into it.

    XOR constraints are expanded to clauses when added (chunked through
    auxiliary variables), so ``clauses`` is always the complete formula; the
    ``xor_constraints`` list keeps the original (variables, parity) pairs for
    auditing and debug-mode model checks.
    """

    num_vars: int = 0
    clauses: list[list[int]] = field(default_factory=list)
    xor_constraints: list[tuple[tuple[int, ...], bool]] = field(default_factory=list)

    def new_var(self) -> int:
        self.num_vars += 1
        return self.num_vars

    def add_clause(self, lits: Iterable[int]) -> None:
        clause = list(lits)
        for lit in clause:
            if lit == 0 or abs(lit) > self.num_vars:
                raise ValueError(f"literal {lit} out of range")
        self.clauses.append(clause)

    def add_xor(self, variables: Iterable[int], parity: bool, chunk: int = 6) -> None:
        """Constrain the XOR of ``variables`` to ``parity``.

        Constraints wider than ``chunk`` are split through fresh auxiliary
        variables so each expanded block stays at ``chunk`` literals
        (at most ``2**(chunk-1)`` clauses per block).
        """
        vs = sorted(set(variables))
        if not vs:
            raise ValueError("empty XOR constraint")
        if chunk < 2:
            raise ValueError("chunk must be >= 2")
        for v in vs:
            if v < 1 or v > self.num_vars:
                raise ValueError(f"variable {v} out of range")
        self.xor_constraints.append((tuple(vs), bool(parity)))
        prev: int | None = None
        remaining = vs
        while True:
            have = 1 if prev is not None else 0
            if len(remaining) + have <= chunk:
                block = ([prev] if prev is not None else []) + remaining
                self._expand_xor_block(block, bool(parity))
                return
            take = chunk - have - 1
            aux = self.new_var()
            block = ([prev] if prev is not None else []) + remaining[:take] + [aux]
            self._expand_xor_block(block, False)
            prev = aux
            remaining = remaining[take:]

    def _expand_xor_block(self, block: list[int], parity: bool) -> None:
        for bits in product((False, True), repeat=len(block)):
            if (sum(bits) & 1) == parity:
                continue
            self.add_clause(-v if b else v for v, b in zip(block, bits))

    def copy(self) -> "CnfFormula":
        return CnfFormula(
            self.num_vars,
            [list(c) for c in self.clauses],
            list(self.xor_constraints),
        )


class VarMap:
    """Net-to-literal mapping for one encoded circuit copy.

    In a plain encoding every net owns a fresh positive variable. When a copy
    is encoded with constant bindings, constant folding may map a net to a
    negated literal or to a Python bool; use :meth:`value_in` to read nets
    back out of a model uniformly.
    """

    def __init__(self, label: str = ""):
        self.label = label
        self._map: dict[str, int | bool] = {}

    def __contains__(self, net: str) -> bool:
        return net in self._map

    def lit(self, net: str, value: bool = True) -> int:
        r = self._map[net]
        if isinstance(r, bool):
            raise KeyError(f"net {net!r} folded to constant {r}")
        return r if value else -r

    def var(self, net: str) -> int:
        return abs(self.lit(net))

    def const(self, net: str) -> bool | None:
        r = self._map[net]
        return r if isinstance(r, bool) else None

    def value_in(self, model: dict[int, bool], net: str) -> bool:
        r = self._map[net]
        if isinstance(r, bool):
            return r
        return model[r] if r > 0 else not model[-r]

    def nets(self):
        return self._map.keys()


def _gate_clauses(kind: GateKind, y: int, fanins: Sequence[int], f: CnfFormula) -> None:
    """Append the Tseitin biconditional for one gate over existing literals."""
    if kind is GateKind.BUF:
        f.add_clause([-y, fanins[0]])
        f.add_clause([y, -fanins[0]])
    elif kind is GateKind.NOT:
        f.add_clause([-y, -fanins[0]])
        f.add_clause([y, fanins[0]])
    elif kind is GateKind.AND:
        for a in fanins:
            f.add_clause([-y, a])
        f.add_clause([y] + [-a for a in fanins])
    elif kind is GateKind.NAND:
        for a in fanins:
            f.add_clause([y, a])
        f.add_clause([-y] + [-a for a in fanins])
    elif kind is GateKind.OR:
        for a in fanins:
            f.add_clause([y, -a])
        f.add_clause([-y] + list(fanins))
    elif kind is GateKind.NOR:
        for a in fanins:
            f.add_clause([-y, -a])
        f.add_clause([y] + list(fanins))
    elif kind in (GateKind.XOR, GateKind.XNOR):
        acc = fanins[0]
        for a in fanins[1:-1]:
            t = f.new_var()
            _xor2(f, t, acc, a)
            acc = t
        if kind is GateKind.XOR:
            _xor2(f, y, acc, fanins[-1])
        else:
            _xor2(f, -y, acc, fanins[-1])
    elif kind is GateKind.MUX2:
        s, d0, d1 = fanins
        f.add_clause([-s, -d1, y])
        f.add_clause([-s, d1, -y])
        f.add_clause([s, -d0, y])
        f.add_clause([s, d0, -y])
        f.add_clause([-d0, -d1, y])
        f.add_clause([d0, d1, -y])
    elif kind is GateKind.CONST0:
        f.add_clause([-y])
    elif kind is GateKind.CONST1:
        f.add_clause([y])
    else:
        raise ValueError(f"cannot encode {kind}")


def _xor2(f: CnfFormula, y: int, a: int, b: int) -> None:
    f.add_clause([-y, a, b])
    f.add_clause([-y, -a, -b])
    f.add_clause([y, -a, b])
    f.add_clause([y, a, -b])


def encode(
    c: Circuit,
    formula: CnfFormula | None = None,
    label: str = "",
    shared: dict[str, int] | None = None,
    bind: dict[str, bool] | None = None,
    allow_cyclic: bool = False,
) -> tuple[CnfFormula, VarMap]:
    """Tseitin-encode a circuit copy into ``formula`` (or a fresh one).

    ``shared`` ties the named nets to pre-existing variables, typically the
    common inputs of a miter. Without ``bind``, every other net receives one
    fresh variable. ``bind`` fixes nets (usually inputs) to constants and
    enables constant folding: downstream nets may collapse onto constants or
    existing literals instead of fresh variables, which keeps repeated
    constraint copies small.

    Returns the formula and the net-to-literal map for this copy.
    """
    shared = shared or {}
    bind = bind or {}
    if shared.keys() & bind.keys():
        raise ValueError("net both shared and bound")
    f = formula if formula is not None else CnfFormula()
    vm = VarMap(label)
    fold = bool(bind)

    for net, var in shared.items():
        if net not in c.gates:
            raise ValueError(f"shared net {net!r} not in circuit")
        if var < 1 or var > f.num_vars:
            raise ValueError(f"shared variable {var} out of range")
        vm._map[net] = var
    for net, value in bind.items():
        if net not in c.gates:
            raise ValueError(f"bound net {net!r} not in circuit")
        vm._map[net] = bool(value)

    cyclic = False
    try:
        order = c.topological_order()
    except CyclicCircuitError:
        if not allow_cyclic:
            raise
        order = tuple(c.inputs) + tuple(n for n in c.gates if n not in c.inputs)
        cyclic = True
        fold = False

    true_lit: list[int | None] = [None]

    def const_lit(value: bool) -> int:
        if true_lit[0] is None:
            t = f.new_var()
            f.add_clause([t])
            true_lit[0] = t
        return true_lit[0] if value else -true_lit[0]

    if cyclic:
        # per-gate biconditionals reference fan-ins in arbitrary order, so
        # give every unmapped net its variable up front
        for net in order:
            if net not in vm._map:
                vm._map[net] = f.new_var()

    for net in order:
        if net in vm._map:
            kind, fanins = c.gates[net]
            if kind is GateKind.INPUT or net in bind:
                continue
            # shared or pre-assigned net: constrain its variable to the gate
            ins = [_as_lit(vm._map[x], const_lit) for x in fanins]
            _gate_clauses(kind, vm.lit(net), ins, f)
            continue
        kind, fanins = c.gates[net]
        if kind is GateKind.INPUT:
            vm._map[net] = f.new_var()
            continue
        if not fold:
            y = f.new_var()
            vm._map[net] = y
            ins = [_as_lit(vm._map[x], const_lit) for x in fanins]
            _gate_clauses(kind, y, ins, f)
            continue
        vm._map[net] = _folded_gate(f, kind, [vm._map[x] for x in fanins], const_lit)
    return f, vm


def _as_lit(r: int | bool, const_lit) -> int:
    return const_lit(r) if isinstance(r, bool) else r


def _folded_gate(f: CnfFormula, kind: GateKind, ins: list[int | bool], const_lit):
    K = GateKind
    if kind is K.CONST0:
        return False
    if kind is K.CONST1:
        return True
    if kind is K.BUF:
        return ins[0]
    if kind is K.NOT:
        r = ins[0]
        return (not r) if isinstance(r, bool) else -r

    if kind in (K.AND, K.NAND, K.OR, K.NOR):
        invert_out = kind in (K.NAND, K.NOR)
        absorbing = False if kind in (K.AND, K.NAND) else True
        lits = []
        for r in ins:
            if isinstance(r, bool):
                if r == absorbing:
                    return absorbing != invert_out
                continue  # identity element, drop
            lits.append(r)
        if not lits:
            return (not absorbing) != invert_out
        if len(lits) == 1:
            return -lits[0] if invert_out else lits[0]
        y = f.new_var()
        base = {K.NAND: K.AND, K.NOR: K.OR}.get(kind, kind)
        _gate_clauses(base, y, lits, f)
        return -y if invert_out else y

    if kind in (K.XOR, K.XNOR):
        parity = kind is K.XNOR  # accumulated constant term
        lits = []
        for r in ins:
            if isinstance(r, bool):
                parity ^= r
            else:
                lits.append(r)
        if not lits:
            return parity
        acc = lits[0]
        for a in lits[1:]:
            t = f.new_var()
            _xor2(f, t, acc, a)
            acc = t
        return -acc if parity else acc

    if kind is K.MUX2:
        s, d0, d1 = ins
        if isinstance(s, bool):
            return d1 if s else d0
        if isinstance(d0, bool) and isinstance(d1, bool):
            if d0 == d1:
                return d0
            return s if d1 else -s
        if not isinstance(d0, bool) and not isinstance(d1, bool) and d0 == d1:
            return d0
        y = f.new_var()
        lits = [s, _as_lit(d0, const_lit), _as_lit(d1, const_lit)]
        _gate_clauses(K.MUX2, y, lits, f)
        return y

    raise ValueError(f"cannot encode {kind}")


def solve(
    f: CnfFormula,
    assumptions: Sequence[int] = (),
    budget: float | None = None,
    seed: int = 0,
) -> SolveResult:
    """Decide ``f`` under assumption literals within an optional time budget."""
    result = Solver(f.num_vars, f.clauses, seed=seed).solve(assumptions, budget)
    if result.status is SolveStatus.SAT:
        _check_xors(f, result.model)
    return result


def _check_xors(f: CnfFormula, model: dict[int, bool]) -> None:
    from . import sat as _sat

    if not _sat.CHECK_MODELS:
        return
    for vs, parity in f.xor_constraints:
        if (sum(model[v] for v in vs) & 1) != parity:
            raise AssertionError(f"model violates xor constraint {vs} = {parity}")


@dataclass
class EnumerationResult:
    solutions: list[dict[int, bool]]
    exceeded: bool
    timed_out: bool = False


def enumerate_projected(
    f: CnfFormula,
    projection: Iterable[int],
    limit: int,
    budget: float | None = None,
) -> EnumerationResult:
    """Enumerate distinct solutions projected onto the given variables.

    Blocking clauses are added to a private solver only, so the formula is
    untouched. ``exceeded`` reports whether a ``limit+1``-th projected
    solution exists; on timeout the partial list is returned flagged.
    """
    proj = sorted(set(projection))
    if limit < 1:
        raise ValueError("limit must be >= 1")
    for v in proj:
        if v < 1 or v > f.num_vars:
            raise ValueError(f"projection variable {v} out of range")
    deadline = monotonic() + budget if budget is not None else None
    solver = Solver(f.num_vars, f.clauses)
    found: list[dict[int, bool]] = []
    while True:
        remaining = None
        if deadline is not None:
            remaining = deadline - monotonic()
            if remaining <= 0:
                return EnumerationResult(found, False, timed_out=True)
        res = solver.solve(budget=remaining)
        if res.status is SolveStatus.TIMEOUT:
            return EnumerationResult(found, False, timed_out=True)
        if res.status is SolveStatus.UNSAT:
            return EnumerationResult(found, False)
        _check_xors(f, res.model)
        cell = {v: res.model[v] for v in proj}
        if len(found) == limit:
            return EnumerationResult(found, True)
        found.append(cell)
        solver.add_clause([-v if cell[v] else v for v in proj])


def emit_dimacs(f: CnfFormula) -> str:
    """Standard DIMACS CNF text; XOR constraints are already CNF-expanded."""
    lines = [f"p cnf {f.num_vars} {len(f.clauses)}"]
    for c in f.clauses:
        lines.append(" ".join(str(l) for l in c) + " 0")
    return "\n".join(lines) + "\n"


def parse_dimacs_model(text: str) -> dict[int, bool]:
    """Read a model from solver output: ``v`` lines or bare literals ending in 0."""
    model: dict[int, bool] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith(("c", "s")):
            continue
        if line.startswith("v"):
            line = line[1:]
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                continue
            model[abs(lit)] = lit > 0
    return model
