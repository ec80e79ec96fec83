"""Combinational circuit model: BENCH parsing, simulation, structural analysis."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from random import Random
from typing import Iterable, Iterator, Sequence

import numpy as np

NAME_RE = re.compile(r"[A-Za-z0-9_.\[\]]+")

_WORD_BITS = 64


class NetlistError(Exception):
    """Malformed or inconsistent circuit structure."""


class CyclicCircuitError(NetlistError):
    """Raised when an operation requires an acyclic circuit."""


class BenchParseError(NetlistError):
    """BENCH text that does not follow the grammar."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class GateKind(Enum):
    INPUT = "INPUT"
    AND = "AND"
    NAND = "NAND"
    OR = "OR"
    NOR = "NOR"
    XOR = "XOR"
    XNOR = "XNOR"
    NOT = "NOT"
    BUF = "BUF"
    MUX2 = "MUX2"
    CONST0 = "CONST0"
    CONST1 = "CONST1"


# exact fan-in count, or None for "two or more"
_ARITY = {
    GateKind.INPUT: 0,
    GateKind.CONST0: 0,
    GateKind.CONST1: 0,
    GateKind.NOT: 1,
    GateKind.BUF: 1,
    GateKind.MUX2: 3,
}

_PSEUDO_GATES = frozenset({GateKind.INPUT, GateKind.CONST0, GateKind.CONST1})


@dataclass(frozen=True)
class BitVector:
    """Fixed-width ordered bit sequence; bit i is the integer's bit i (LSB first)."""

    bits: tuple[bool, ...]

    @property
    def width(self) -> int:
        return len(self.bits)

    @classmethod
    def from_bits(cls, bits: Iterable[bool]) -> "BitVector":
        return cls(tuple(bool(b) for b in bits))

    @classmethod
    def from_int(cls, value: int, width: int) -> "BitVector":
        if value < 0 or value >= 1 << width:
            raise ValueError(f"value {value} does not fit in {width} bits")
        return cls(tuple(bool((value >> i) & 1) for i in range(width)))

    @classmethod
    def from_hex(cls, text: str, width: int) -> "BitVector":
        return cls.from_int(int(text, 16), width)

    @classmethod
    def random(cls, rng: Random, width: int) -> "BitVector":
        return cls.from_int(rng.getrandbits(width) if width else 0, width)

    def to_int(self) -> int:
        return sum(1 << i for i, b in enumerate(self.bits) if b)

    def to_hex(self) -> str:
        digits = max(1, (self.width + 3) // 4)
        return format(self.to_int(), f"0{digits}x")

    def hamming(self, other: "BitVector") -> int:
        if self.width != other.width:
            raise ValueError("width mismatch")
        return sum(a != b for a, b in zip(self.bits, other.bits))

    def __len__(self) -> int:
        return len(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def __iter__(self) -> Iterator[bool]:
        return iter(self.bits)


class Circuit:
    """Directed gate graph with named nets.

    Nets are identified by name; ``gates`` maps every net (including primary
    inputs) to a ``(GateKind, fanin-name tuple)`` pair. Primary input and
    output order is preserved from construction. Circuits are treated as
    immutable once built: all transforms return fresh instances.
    """

    __slots__ = ("name", "inputs", "outputs", "gates", "_topo")

    def __init__(
        self,
        name: str,
        inputs: Sequence[str],
        outputs: Sequence[str],
        gates: dict[str, tuple[GateKind, tuple[str, ...]]],
    ):
        self.name = name
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)
        self.gates = dict(gates)
        self._topo = None
        self._validate()

    def _validate(self):
        if len(set(self.inputs)) != len(self.inputs):
            raise NetlistError("duplicate primary input")
        if len(set(self.outputs)) != len(self.outputs):
            raise NetlistError("duplicate primary output")
        for net, (kind, fanins) in self.gates.items():
            if not NAME_RE.fullmatch(net):
                raise NetlistError(f"illegal net name {net!r}")
            want = _ARITY.get(kind)
            if want is None:
                if len(fanins) < 2:
                    raise NetlistError(f"{net}: {kind.value} needs >= 2 fan-ins")
            elif len(fanins) != want:
                raise NetlistError(
                    f"{net}: {kind.value} needs {want} fan-ins, got {len(fanins)}"
                )
            for f in fanins:
                if f not in self.gates:
                    raise NetlistError(f"{net}: undefined fan-in {f!r}")
        for net in self.inputs:
            if net not in self.gates or self.gates[net][0] is not GateKind.INPUT:
                raise NetlistError(f"primary input {net!r} has no INPUT gate")
        for net, (kind, _) in self.gates.items():
            if kind is GateKind.INPUT and net not in self.inputs:
                raise NetlistError(f"INPUT gate {net!r} missing from input list")
        for net in self.outputs:
            if net not in self.gates:
                raise NetlistError(f"undefined output net {net!r}")

    def kind(self, net: str) -> GateKind:
        return self.gates[net][0]

    def fanins(self, net: str) -> tuple[str, ...]:
        return self.gates[net][1]

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)

    def topological_order(self) -> tuple[str, ...]:
        """All nets ordered so every gate follows its fan-ins; raises on cycles."""
        if self._topo is not None:
            return self._topo
        order: list[str] = []
        state: dict[str, int] = {}  # 1 = on stack, 2 = done
        for root in self.gates:
            if state.get(root):
                continue
            stack = [(root, iter(self.gates[root][1]))]
            state[root] = 1
            while stack:
                net, it = stack[-1]
                advanced = False
                for f in it:
                    s = state.get(f)
                    if s == 1:
                        raise CyclicCircuitError(f"cycle through net {f!r}")
                    if s is None:
                        state[f] = 1
                        stack.append((f, iter(self.gates[f][1])))
                        advanced = True
                        break
                if not advanced:
                    state[net] = 2
                    order.append(net)
                    stack.pop()
        self._topo = tuple(order)
        return self._topo

    def __repr__(self):
        return (
            f"Circuit({self.name!r}, {self.n_inputs} in, {self.n_outputs} out, "
            f"{len(self.gates) - self.n_inputs} gates)"
        )


def is_acyclic(c: Circuit) -> bool:
    """True when the gate graph contains no directed cycle."""
    try:
        c.topological_order()
    except CyclicCircuitError:
        return False
    return True


def fanin_cone(c: Circuit, net: str) -> set[str]:
    """All nets the given net transitively depends on, the net included."""
    if net not in c.gates:
        raise NetlistError(f"unknown net {net!r}")
    seen = {net}
    stack = [net]
    while stack:
        for f in c.gates[stack.pop()][1]:
            if f not in seen:
                seen.add(f)
                stack.append(f)
    return seen


def fanout_cone(c: Circuit, net: str) -> set[str]:
    """All nets that transitively depend on the given net, the net included."""
    if net not in c.gates:
        raise NetlistError(f"unknown net {net!r}")
    consumers: dict[str, list[str]] = {n: [] for n in c.gates}
    for g, (_, fanins) in c.gates.items():
        for f in fanins:
            consumers[f].append(g)
    seen = {net}
    stack = [net]
    while stack:
        for g in consumers[stack.pop()]:
            if g not in seen:
                seen.add(g)
                stack.append(g)
    return seen


def structural_stats(c: Circuit) -> tuple[int, int]:
    """Return ``(gate_count, depth)`` for overhead bookkeeping.

    The gate count excludes INPUT and CONST pseudo-gates. Depth is the longest
    path from any primary input to any primary output, counted in gates.
    """
    gate_count = sum(1 for kind, _ in c.gates.values() if kind not in _PSEUDO_GATES)
    depth = {}
    for net in c.topological_order():
        kind, fanins = c.gates[net]
        if kind in _PSEUDO_GATES:
            depth[net] = 0
        else:
            depth[net] = 1 + max(depth[f] for f in fanins)
    max_depth = max((depth[o] for o in c.outputs), default=0)
    return gate_count, max_depth


# ---------------------------------------------------------------------------
# BENCH format


_BENCH_KINDS = {
    "AND": GateKind.AND,
    "NAND": GateKind.NAND,
    "OR": GateKind.OR,
    "NOR": GateKind.NOR,
    "XOR": GateKind.XOR,
    "XNOR": GateKind.XNOR,
    "NOT": GateKind.NOT,
    "BUF": GateKind.BUF,
    "BUFF": GateKind.BUF,
    "MUX": GateKind.MUX2,
    "CONST0": GateKind.CONST0,
    "CONST1": GateKind.CONST1,
}

_IO_LINE_RE = re.compile(r"(INPUT|OUTPUT)\s*\(\s*([A-Za-z0-9_.\[\]]+)\s*\)\s*$", re.I)
_GATE_LINE_RE = re.compile(
    r"([A-Za-z0-9_.\[\]]+)\s*=\s*([A-Za-z0-9]+)\s*\(\s*([^()]*)\s*\)\s*$"
)


def parse_bench(text: str, name: str = "bench") -> Circuit:
    """Parse BENCH-format text into a :class:`Circuit`.

    Accepted lines: ``INPUT(net)``, ``OUTPUT(net)``, ``net = KIND(a, b, ...)``,
    ``#`` comments, and blank lines. ``BUFF`` normalizes to BUF and ``MUX`` to
    the 3-fan-in MUX2 with ``(select, data0, data1)`` operand order.

    Raises
    ------
    BenchParseError
        On grammar violations, duplicate definitions, or references to
        undefined nets, with the offending line number.
    """
    inputs: list[str] = []
    outputs: list[str] = []
    gates: dict[str, tuple[GateKind, tuple[str, ...]]] = {}
    def_line: dict[str, int] = {}
    use_line: dict[str, int] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _IO_LINE_RE.match(line)
        if m:
            what, net = m.group(1).upper(), m.group(2)
            if what == "INPUT":
                if net in gates:
                    raise BenchParseError(f"duplicate definition of {net!r}", line_no)
                gates[net] = (GateKind.INPUT, ())
                inputs.append(net)
                def_line[net] = line_no
            else:
                if net in outputs:
                    raise BenchParseError(f"duplicate OUTPUT({net})", line_no)
                outputs.append(net)
                use_line.setdefault(net, line_no)
            continue
        m = _GATE_LINE_RE.match(line)
        if m:
            net, kind_txt, args_txt = m.groups()
            kind = _BENCH_KINDS.get(kind_txt.upper())
            if kind is None:
                raise BenchParseError(f"unknown gate kind {kind_txt!r}", line_no)
            if net in gates:
                raise BenchParseError(f"duplicate definition of {net!r}", line_no)
            args = tuple(a.strip() for a in args_txt.split(",")) if args_txt.strip() else ()
            for a in args:
                if not NAME_RE.fullmatch(a):
                    raise BenchParseError(f"bad operand {a!r}", line_no)
                use_line.setdefault(a, line_no)
            want = _ARITY.get(kind)
            if want is not None and len(args) != want:
                raise BenchParseError(
                    f"{kind_txt.upper()} takes {want} operands, got {len(args)}", line_no
                )
            if want is None and len(args) < 2:
                raise BenchParseError(f"{kind_txt.upper()} takes >= 2 operands", line_no)
            gates[net] = (kind, args)
            def_line[net] = line_no
            continue
        raise BenchParseError(f"unrecognized line {line.strip()!r}", line_no)

    for net, line_no in use_line.items():
        if net not in gates:
            raise BenchParseError(f"undefined net {net!r}", line_no)
    try:
        return Circuit(name, inputs, outputs, gates)
    except NetlistError as exc:
        raise BenchParseError(str(exc)) from exc


_EMIT_KIND = {GateKind.MUX2: "MUX", GateKind.BUF: "BUF"}


def serialize_bench(c: Circuit, header: str | None = None) -> str:
    """Serialize to BENCH text; parses back to an identical gate map."""
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"INPUT({n})" for n in c.inputs)
    lines.extend(f"OUTPUT({n})" for n in c.outputs)
    for net, (kind, fanins) in c.gates.items():
        if kind is GateKind.INPUT:
            continue
        kind_txt = _EMIT_KIND.get(kind, kind.value)
        lines.append(f"{net} = {kind_txt}({', '.join(fanins)})")
    return "\n".join(lines) + "\n"


def from_lib(name: str) -> Circuit:
    """Load a bundled benchmark netlist by name (``c17``, ``r432``)."""
    ref = resources.files("locklab").joinpath(f"netlists/{name}.bench")
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise NetlistError(f"no bundled netlist named {name!r}") from None
    return parse_bench(text, name=name)


# ---------------------------------------------------------------------------
# Simulation


def _eval_gate(kind: GateKind, vals: tuple[bool, ...]) -> bool:
    if kind is GateKind.AND:
        return all(vals)
    if kind is GateKind.NAND:
        return not all(vals)
    if kind is GateKind.OR:
        return any(vals)
    if kind is GateKind.NOR:
        return not any(vals)
    if kind is GateKind.XOR:
        return sum(vals) % 2 == 1
    if kind is GateKind.XNOR:
        return sum(vals) % 2 == 0
    if kind is GateKind.NOT:
        return not vals[0]
    if kind is GateKind.BUF:
        return vals[0]
    if kind is GateKind.MUX2:
        sel, d0, d1 = vals
        return d1 if sel else d0
    if kind is GateKind.CONST0:
        return False
    if kind is GateKind.CONST1:
        return True
    raise NetlistError(f"cannot evaluate {kind}")


def simulate(c: Circuit, x: BitVector) -> BitVector:
    """Evaluate the circuit on one input pattern by topological sweep.

    ``x`` assigns ``c.inputs`` in order; the result covers ``c.outputs`` in
    order. Requires an acyclic circuit.
    """
    if x.width != c.n_inputs:
        raise NetlistError(f"input width {x.width}, circuit has {c.n_inputs} inputs")
    values: dict[str, bool] = dict(zip(c.inputs, x.bits))
    for net in c.topological_order():
        kind, fanins = c.gates[net]
        if kind is GateKind.INPUT:
            continue
        values[net] = _eval_gate(kind, tuple(values[f] for f in fanins))
    return BitVector.from_bits(values[o] for o in c.outputs)


def pack_patterns(patterns: Sequence[BitVector], width: int) -> list[np.ndarray]:
    """Pack per-pattern bit vectors into one uint64 word array per position."""
    n = len(patterns)
    cols = []
    for i in range(width):
        bits = np.fromiter((p.bits[i] for p in patterns), dtype=np.uint8, count=n)
        cols.append(_pack_bool(bits))
    return cols


def _pack_bool(bits: np.ndarray) -> np.ndarray:
    n = len(bits)
    n_words = max(1, (n + _WORD_BITS - 1) // _WORD_BITS)
    padded = np.zeros(n_words * _WORD_BITS, dtype=np.uint8)
    padded[:n] = bits
    return np.packbits(padded, bitorder="little").view(np.uint64)

def _unpack_bool(words: np.ndarray, n: int) -> np.ndarray:
    return np.unpackbits(words.view(np.uint8), count=n, bitorder="little").astype(bool)


def simulate_packed(
    c: Circuit,
    input_words: dict[str, np.ndarray] | Sequence[np.ndarray],
    all_nets: bool = False,
) -> dict[str, np.ndarray]:
    """Bit-parallel word-level evaluation: 64 patterns per uint64 lane.

    ``input_words`` maps each primary input (or lists them in input order) to
    a uint64 array; all arrays share one shape. Returns words for the output
    nets, or for every net when ``all_nets`` is set. Bits beyond the caller's
    pattern count are unspecified.
    """
    if not isinstance(input_words, dict):
        input_words = dict(zip(c.inputs, input_words))
    words: dict[str, np.ndarray] = {}
    ones = None
    for n in c.inputs:
        words[n] = np.asarray(input_words[n], dtype=np.uint64)
    for net in c.topological_order():
        kind, fanins = c.gates[net]
        if kind is GateKind.INPUT:
            continue
        f = [words[x] for x in fanins]
        if kind is GateKind.AND or kind is GateKind.NAND:
            v = f[0] & f[1]
            for x in f[2:]:
                v = v & x
            if kind is GateKind.NAND:
                v = ~v
        elif kind is GateKind.OR or kind is GateKind.NOR:
            v = f[0] | f[1]
            for x in f[2:]:
                v = v | x
            if kind is GateKind.NOR:
                v = ~v
        elif kind is GateKind.XOR or kind is GateKind.XNOR:
            v = f[0] ^ f[1]
            for x in f[2:]:
                v = v ^ x
            if kind is GateKind.XNOR:
                v = ~v
        elif kind is GateKind.NOT:
            v = ~f[0]
        elif kind is GateKind.BUF:
            v = f[0].copy()
        elif kind is GateKind.MUX2:
            sel, d0, d1 = f
            v = (d0 & ~sel) | (d1 & sel)
        else:  # CONST0 / CONST1
            if ones is None:
                shape = next(iter(words.values())).shape if words else (1,)
                ones = np.full(shape, ~np.uint64(0), dtype=np.uint64)
            v = ones if kind is GateKind.CONST1 else np.zeros_like(ones)
        words[net] = v
    if all_nets:
        return words
    return {o: words[o] for o in c.outputs}


def simulate_batch(c: Circuit, xs: Sequence[BitVector]) -> list[BitVector]:
    """Evaluate many patterns at once; elementwise identical to :func:`simulate`."""
    if not xs:
        return []
    for x in xs:
        if x.width != c.n_inputs:
            raise NetlistError(f"input width {x.width}, circuit has {c.n_inputs} inputs")
    in_words = pack_patterns(xs, c.n_inputs)
    out = simulate_packed(c, in_words)
    out_bits = [_unpack_bool(out[o], len(xs)) for o in c.outputs]
    return [BitVector.from_bits(col[i] for col in out_bits) for i in range(len(xs))]


def exhaustive_input_words(n_inputs: int) -> list[np.ndarray]:
    """Word arrays enumerating all ``2**n_inputs`` patterns, one array per input.

    Pattern index p assigns input i the bit ``(p >> i) & 1``. For fewer than
    six inputs the single word's low ``2**n_inputs`` lanes are valid.
    """
    n_patterns = 1 << n_inputs
    n_words = max(1, n_patterns // _WORD_BITS)
    lane = np.arange(_WORD_BITS, dtype=np.uint64)
    word_idx = np.arange(n_words, dtype=np.uint64)
    cols = []
    for i in range(n_inputs):
        if i < 6:
            pattern = np.uint64(sum(((j >> i) & 1) << j for j in range(_WORD_BITS)))
            cols.append(np.full(n_words, pattern, dtype=np.uint64))
        else:
            hi = ((word_idx >> np.uint64(i - 6)) & np.uint64(1)).astype(bool)
            cols.append(np.where(hi, ~np.uint64(0), np.uint64(0)))
    del lane
    return cols


def random_input_words(rng: np.random.Generator, n_inputs: int, n_patterns: int) -> list[np.ndarray]:
    """Uniform random packed patterns for Monte-Carlo runs."""
    n_words = max(1, (n_patterns + _WORD_BITS - 1) // _WORD_BITS)
    return [rng.integers(0, 1 << 64, size=n_words, dtype=np.uint64) for _ in range(n_inputs)]


def popcount_words(words: np.ndarray, n_patterns: int) -> int:
    """Number of set bits among the first ``n_patterns`` lanes."""
    words = words.copy()
    tail = n_patterns % _WORD_BITS
    n_words = (n_patterns + _WORD_BITS - 1) // _WORD_BITS
    words = words[:n_words]
    if tail:
        words[-1] &= np.uint64((1 << tail) - 1)
    return int(np.bitwise_count(words).sum())


# ---------------------------------------------------------------------------
# Random circuits (property tests, synthetic benchmarks)


_RAND_KINDS_1 = (GateKind.NOT, GateKind.BUF)
_RAND_KINDS_2 = (
    GateKind.AND,
    GateKind.NAND,
    GateKind.OR,
    GateKind.NOR,
    GateKind.XOR,
    GateKind.XNOR,
)
_RAND_KINDS_3 = (GateKind.AND, GateKind.OR, GateKind.XOR, GateKind.MUX2)


def random_circuit(
    n_inputs: int,
    n_gates: int,
    n_outputs: int | None = None,
    seed: int = 0,
    name: str | None = None,
    locality: float = 8.0,
) -> Circuit:
    """Deterministic random layered DAG with fan-in at most three.

    Gate fan-ins prefer recently created nets (exponential locality bias), so
    depth grows with ``n_gates``. The first ``n_inputs`` gates each consume a
    distinct primary input, keeping every input connected. Identical arguments
    always produce an identical circuit.
    """
    if n_outputs is None:
        n_outputs = max(1, n_gates // 10)
    rng = Random(seed)
    inputs = [f"in{i}" for i in range(n_inputs)]
    gates: dict[str, tuple[GateKind, tuple[str, ...]]] = {
        n: (GateKind.INPUT, ()) for n in inputs
    }
    nets = list(inputs)

    def pick(exclude: set[str]) -> str:
        while True:
            back = int(rng.expovariate(1.0 / locality))
            idx = len(nets) - 1 - min(back, len(nets) - 1)
            cand = nets[idx]
            if cand not in exclude:
                return cand

    for g in range(n_gates):
        net = f"g{g}"
        r = rng.random()
        if r < 0.15:
            kind, k = rng.choice(_RAND_KINDS_1), 1
        elif r < 0.90 or len(nets) < 3:
            kind, k = rng.choice(_RAND_KINDS_2), 2
        else:
            kind, k = rng.choice(_RAND_KINDS_3), 3
        chosen: list[str] = []
        if g < n_inputs:
            chosen.append(inputs[g])
        while len(chosen) < k:
            chosen.append(pick(set(chosen)))
        rng.shuffle(chosen)
        gates[net] = (kind, tuple(chosen))
        nets.append(net)

    used = {f for _, fanins in gates.values() for f in fanins}
    sinks = [n for n in nets if n not in used and n not in inputs]
    rng.shuffle(sinks)
    outputs = sinks[:n_outputs]
    pool = [n for n in reversed(nets) if n not in inputs and n not in outputs]
    for n in pool:
        if len(outputs) >= n_outputs:
            break
        outputs.append(n)
    return Circuit(name or f"rand{n_inputs}x{n_gates}s{seed}", inputs, outputs, gates)
