"""CDCL SAT solver: two-watched-literal propagation, VSIDS, Luby restarts, assumptions.

The solver is deterministic for a fixed clause/assumption sequence. Assumptions
are handled minisat-style, as forced decisions on the first levels of the
search, so one growing clause database can be queried repeatedly without
mutation. A solve call either completes or returns ``TIMEOUT`` once its time
budget runs out; the solver stays usable afterwards.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from time import monotonic

# When set, every SAT result is re-verified against the full clause database
# before being returned. Test builds switch this on.
CHECK_MODELS = False

_RESCALE = 1e100


class SolveStatus(Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    TIMEOUT = "TIMEOUT"


@dataclass
class SolveResult:
    status: SolveStatus
    model: dict[int, bool] | None = None

    def __bool__(self) -> bool:
        return self.status is SolveStatus.SAT


def luby(x: int) -> int:
    """x-th element (0-based) of the Luby restart sequence 1,1,2,1,1,2,4,..."""
    size, seq = 1, 0
    while size < x + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != x:
        size = (size - 1) // 2
        seq -= 1
        x %= size
    return 1 << seq


class Solver:
    """Incremental CDCL solver over integer literals (DIMACS convention)."""

    def __init__(self, num_vars: int = 0, clauses=(), seed: int = 0):
        self.nvars = 0
        self.ok = True
        self.assign: list[int] = [0]  # 1 true, -1 false, 0 unassigned; index 0 unused
        self.level: list[int] = [0]
        self.reason: list[list | None] = [None]
        self.phase: list[bool] = [False]
        self.activity: list[float] = [0.0]
        self.watches: dict[int, list] = {}
        self.clauses: list[list[int]] = []
        self.learnts: list[list[int]] = []
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.var_inc = 1.0
        self.var_decay = 1.0 / 0.95
        self.heap: list[tuple[float, int]] = []
        self.max_learnts = 4000.0
        self.seed = seed
        self.conflicts = 0
        self.decisions = 0
        self.propagations = 0
        self._seen = bytearray(1)
        while self.nvars < num_vars:
            self.new_var()
        for c in clauses:
            self.add_clause(c)

    # -- variables / clauses ------------------------------------------------

    def new_var(self) -> int:
        self.nvars += 1
        v = self.nvars
        self.assign.append(0)
        self.level.append(0)
        self.reason.append(None)
        self.phase.append(False)
        self.activity.append(0.0)
        self._seen.append(0)
        self.watches[v] = []
        self.watches[-v] = []
        heapq.heappush(self.heap, (0.0, v))
        return v

    def _value(self, lit: int) -> int:
        return self.assign[lit] if lit > 0 else -self.assign[-lit]

    def add_clause(self, lits) -> bool:
        """Add a clause; returns False if the database became unsatisfiable."""
        if not self.ok:
            return False
        if self.trail_lim:
            self._backjump(0)
        out: list[int] = []
        seen = set()
        for lit in lits:
            v = abs(lit)
            if v == 0 or v > self.nvars:
                raise ValueError(f"literal {lit} out of range (nvars={self.nvars})")
            if -lit in seen:
                return True  # tautology
            if lit in seen:
                continue
            val = self._value(lit)
            if val == 1 and self.level[v] == 0:
                return True  # satisfied at root
            if val == -1 and self.level[v] == 0:
                continue  # permanently false literal
            seen.add(lit)
            out.append(lit)
        if not out:
            self.ok = False
            return False
        if len(out) == 1:
            lit = out[0]
            if self._value(lit) == -1:
                self.ok = False
                return False
            if self._value(lit) == 0:
                self._enqueue(lit, None)
            if self._propagate() is not None:
                self.ok = False
                return False
            return True
        self.clauses.append(out)
        self.watches[out[0]].append(out)
        self.watches[out[1]].append(out)
        return True

    # -- trail --------------------------------------------------------------

    def _enqueue(self, lit: int, reason) -> None:
        v = abs(lit)
        self.assign[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _backjump(self, target_level: int) -> None:
        if len(self.trail_lim) <= target_level:
            return
        limit = self.trail_lim[target_level]
        for i in range(len(self.trail) - 1, limit - 1, -1):
            lit = self.trail[i]
            v = abs(lit)
            self.phase[v] = lit > 0
            self.assign[v] = 0
            self.reason[v] = None
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[limit:]
        del self.trail_lim[target_level:]
        self.qhead = len(self.trail)

    # -- propagation ---------------------------------------------------------

    def _propagate(self):
        assign = self.assign
        watches = self.watches
        while self.qhead < len(self.trail):
            p = self.trail[self.qhead]
            self.qhead += 1
            self.propagations += 1
            neg = -p
            ws = watches[neg]
            i = 0
            j = 0
            n = len(ws)
            while i < n:
                c = ws[i]
                i += 1
                if c[0] == neg:
                    c[0] = c[1]
                    c[1] = neg
                first = c[0]
                fval = assign[first] if first > 0 else -assign[-first]
                if fval == 1:
                    ws[j] = c
                    j += 1
                    continue
                found = False
                for k in range(2, len(c)):
                    lk = c[k]
                    if (assign[lk] if lk > 0 else -assign[-lk]) != -1:
                        c[1] = lk
                        c[k] = neg
                        watches[lk].append(c)
                        found = True
                        break
                if found:
                    continue
                ws[j] = c
                j += 1
                if fval == -1:
                    # conflict: keep the unexamined tail of the watch list
                    while i < n:
                        ws[j] = ws[i]
                        j += 1
                        i += 1
                    del ws[j:]
                    self.qhead = len(self.trail)
                    return c
                self._enqueue(first, c)
            del ws[j:]
        return None

    # -- conflict analysis ----------------------------------------------------

    def _bump(self, v: int) -> None:
        act = self.activity[v] + self.var_inc
        self.activity[v] = act
        if act > _RESCALE:
            inv = 1.0 / _RESCALE
            for u in range(1, self.nvars + 1):
                self.activity[u] *= inv
            self.var_inc *= inv

    def _analyze(self, confl):
        seen = self._seen
        level = self.level
        reason = self.reason
        trail = self.trail
        current = len(self.trail_lim)
        learnt: list[int] = [0]
        to_clear: list[int] = []
        path = 0
        p = 0
        index = len(trail)
        c = confl
        while True:
            start = 1 if p else 0
            for q in c[start:]:
                v = abs(q)
                if not seen[v] and level[v] > 0:
                    seen[v] = 1
                    to_clear.append(v)
                    self._bump(v)
                    if level[v] >= current:
                        path += 1
                    else:
                        learnt.append(q)
            while True:
                index -= 1
                p = trail[index]
                if seen[abs(p)]:
                    break
            path -= 1
            seen[abs(p)] = 0
            if path == 0:
                break
            c = reason[abs(p)]
        learnt[0] = -p

        # drop literals implied by the rest of the clause (basic minimization)
        kept = [learnt[0]]
        for q in learnt[1:]:
            r = reason[abs(q)]
            if r is None:
                kept.append(q)
                continue
            for lq in r:
                v = abs(lq)
                if not seen[v] and level[v] > 0:
                    kept.append(q)
                    break
        for v in to_clear:
            seen[v] = 0
        learnt = kept

        if len(learnt) == 1:
            return learnt, 0
        # watch a literal from the backjump level at position 1
        max_i = 1
        for i in range(2, len(learnt)):
            if level[abs(learnt[i])] > level[abs(learnt[max_i])]:
                max_i = i
        learnt[1], learnt[max_i] = learnt[max_i], learnt[1]
        return learnt, level[abs(learnt[1])]

    # -- learned-clause database ----------------------------------------------

    def _reduce_db(self) -> None:
        keep, sacrificial = [], []
        for c in self.learnts:
            if len(c) <= 2 or self.reason[abs(c[0])] is c:
                keep.append(c)
            else:
                sacrificial.append(c)
        sacrificial.sort(key=len)
        half = len(sacrificial) // 2
        keep.extend(sacrificial[:half])
        self.learnts = keep
        self.max_learnts *= 1.2
        for lit in self.watches:
            self.watches[lit] = []
        for c in self.clauses:
            self.watches[c[0]].append(c)
            self.watches[c[1]].append(c)
        for c in self.learnts:
            self.watches[c[0]].append(c)
            self.watches[c[1]].append(c)

    # -- search -----------------------------------------------------------------

    def _decide(self) -> bool:
        heap = self.heap
        assign = self.assign
        while heap:
            act, v = heapq.heappop(heap)
            if assign[v] == 0:
                self.decisions += 1
                self.trail_lim.append(len(self.trail))
                self._enqueue(v if self.phase[v] else -v, None)
                return True
        return False

    def solve(self, assumptions=(), budget: float | None = None) -> SolveResult:
        """Decide satisfiability under the given assumption literals.

        ``budget`` is a wall-clock limit in seconds; when exhausted the result
        status is ``TIMEOUT`` (never an exception).
        """
        if not self.ok:
            return SolveResult(SolveStatus.UNSAT)
        deadline = monotonic() + budget if budget is not None else None
        self._backjump(0)
        if self._propagate() is not None:
            self.ok = False
            return SolveResult(SolveStatus.UNSAT)
        assumptions = list(assumptions)
        n_assumps = len(assumptions)
        restart_count = 0
        conflict_budget = luby(0) * 100

        while True:
            confl = self._propagate()
            if confl is not None:
                self.conflicts += 1
                conflict_budget -= 1
                if not self.trail_lim:
                    self.ok = False
                    return SolveResult(SolveStatus.UNSAT)
                learnt, back = self._analyze(confl)
                self._backjump(back)
                if len(learnt) == 1:
                    if self._value(learnt[0]) == -1:
                        self.ok = False
                        return SolveResult(SolveStatus.UNSAT)
                    if self._value(learnt[0]) == 0:
                        self._enqueue(learnt[0], None)
                else:
                    self.learnts.append(learnt)
                    self.watches[learnt[0]].append(learnt)
                    self.watches[learnt[1]].append(learnt)
                    self._enqueue(learnt[0], learnt)
                self.var_inc *= self.var_decay
                if self.var_inc > _RESCALE:
                    inv = 1.0 / _RESCALE
                    for u in range(1, self.nvars + 1):
                        self.activity[u] *= inv
                    self.var_inc *= inv
                if (
                    deadline is not None
                    and self.conflicts % 256 == 0
                    and monotonic() > deadline
                ):
                    self._backjump(0)
                    return SolveResult(SolveStatus.TIMEOUT)
                continue

            if deadline is not None and monotonic() > deadline:
                self._backjump(0)
                return SolveResult(SolveStatus.TIMEOUT)

            if len(self.learnts) > self.max_learnts:
                self._reduce_db()

            if conflict_budget <= 0:
                restart_count += 1
                conflict_budget = luby(restart_count) * 100
                self._backjump(0)
                continue

            if len(self.trail_lim) < n_assumps:
                a = assumptions[len(self.trail_lim)]
                if abs(a) > self.nvars or a == 0:
                    raise ValueError(f"assumption {a} out of range")
                val = self._value(a)
                if val == 1:
                    self.trail_lim.append(len(self.trail))  # empty level keeps indices aligned
                elif val == -1:
                    self._backjump(0)
                    return SolveResult(SolveStatus.UNSAT)
                else:
                    self.trail_lim.append(len(self.trail))
                    self._enqueue(a, None)
                continue

            if len(self.trail) == self.nvars:
                model = {v: self.assign[v] > 0 for v in range(1, self.nvars + 1)}
                self._backjump(0)
                if CHECK_MODELS:
                    self._check_model(model)
                return SolveResult(SolveStatus.SAT, model)

            if not self._decide():
                # heap exhausted by stale entries; rebuild
                self.heap = [(-self.activity[v], v) for v in range(1, self.nvars + 1) if self.assign[v] == 0]
                heapq.heapify(self.heap)
                if not self.heap and len(self.trail) < self.nvars:
                    raise AssertionError("lost track of unassigned variables")

    def _check_model(self, model: dict[int, bool]) -> None:
        for c in self.clauses:
            if not any(model[abs(l)] == (l > 0) for l in c):
                raise AssertionError(f"model violates clause {c}")


def solve_clauses(num_vars: int, clauses, assumptions=(), budget=None, seed=0) -> SolveResult:
    """One-shot convenience wrapper around :class:`Solver`."""
    return Solver(num_vars, clauses, seed=seed).solve(assumptions, budget)
