"""Locking transforms: each takes a circuit and returns it locked plus the correct key.

Every transform partitions the locked circuit's inputs into the original data
inputs (order preserved) followed by key inputs named ``key_0 .. key_{w-1}``.
Applying the correct key always restores the original input-output behavior;
that invariant is what the test suite leans on hardest.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from random import Random

from .netlist import (
    BitVector,
    Circuit,
    GateKind,
    fanout_cone,
    parse_bench,
    serialize_bench,
)


class LockError(Exception):
    """Lock construction failed (bad parameters or unsuitable circuit)."""


class LockKind(Enum):
    XOR = "xor"
    MUX = "mux"
    LUT = "lut"
    POINT_FN = "point_fn"
    ROUTING = "routing"
    CYCLIC_MUX = "cyclic_mux"


@dataclass
class LockConfig:
    """Parameters shared by the locking transforms.

    ``width`` asks for that many key bits; LUT and routing locks report the
    width they actually achieve in ``LockedCircuit.width``. ``comparator_width``
    (point-function locks) defaults to ``width``. ``routing_wires`` pins the
    routing-network port count; when unset the nearest achievable width wins.
    """

    width: int = 8
    seed: int = 0
    lut_arity: int = 2
    comparator_width: int | None = None
    routing_wires: int | None = None

    def __post_init__(self):
        if self.width < 1:
            raise LockError("width must be >= 1")
        if self.lut_arity < 1:
            raise LockError("lut_arity must be >= 1")


@dataclass
class LockedCircuit:
    circuit: Circuit
    correct_key: BitVector
    lock_kind: LockKind
    metadata: dict = field(default_factory=dict)

    @property
    def key_inputs(self) -> tuple[str, ...]:
        return tuple(n for n in self.circuit.inputs if _KEY_RE.fullmatch(n))

    @property
    def data_inputs(self) -> tuple[str, ...]:
        return tuple(n for n in self.circuit.inputs if not _KEY_RE.fullmatch(n))

    @property
    def width(self) -> int:
        return len(self.key_inputs)


_KEY_RE = re.compile(r"key_(\d+)")


def _fresh(gates: dict, base: str) -> str:
    if base not in gates:
        return base
    i = 2
    while f"{base}_{i}" in gates:
        i += 1
    return f"{base}_{i}"


def _consumers(gates: dict, net: str) -> list[str]:
    return [g for g, (_, fanins) in gates.items() if net in fanins]


def _redirect(gates: dict, old: str, new: str, only: list[str] | None = None) -> None:
    for g in only if only is not None else list(gates):
        kind, fanins = gates[g]
        if old in fanins and g != new:
            gates[g] = (kind, tuple(new if f == old else f for f in fanins))


def _splice_sites(c: Circuit) -> list[str]:
    """Nets an inserted key gate may take over: every net except constants
    and input nets that double as primary outputs."""
    out = []
    outputs = set(c.outputs)
    for net, (kind, _) in c.gates.items():
        if kind in (GateKind.CONST0, GateKind.CONST1):
            continue
        if kind is GateKind.INPUT and net in outputs:
            continue
        out.append(net)
    return out


def _splice(gates: dict, c_inputs: set, net: str, make_gate) -> None:
    """Replace ``net`` with ``make_gate(driving_net)``; consumers see the new gate.

    Gate nets keep their name (the old driver is renamed); input nets keep
    the INPUT and get their consumers rewired to the new gate.
    """
    kind, fanins = gates[net]
    if net in c_inputs:
        new = _fresh(gates, f"{net}_keyed")
        gates[new] = make_gate(net)
        _redirect(gates, net, new, only=[g for g in _consumers(gates, net) if g != new])
    else:
        raw = _fresh(gates, f"{net}_prelock")
        gates[raw] = (kind, fanins)
        gates[net] = make_gate(raw)


def lock_xor(c: Circuit, cfg: LockConfig) -> LockedCircuit:
    """Splice key-controlled parity gates onto randomly chosen nets.

    Each selected net gains an XOR against its key input when the correct key
    bit is 0, an XNOR when it is 1, so the correct key passes the net through
    unchanged and a wrong bit inverts the net's entire downstream function.
    """
    rng = Random(cfg.seed)
    sites = _splice_sites(c)
    if len(sites) < cfg.width:
        raise LockError(
            f"insufficient nets: {len(sites)} lockable, width {cfg.width}"
        )
    chosen = rng.sample(sites, cfg.width)
    gates = dict(c.gates)
    inputs = list(c.inputs)
    key_bits = []
    c_inputs = set(c.inputs)
    for i, net in enumerate(chosen):
        key_net = f"key_{i}"
        bit = rng.random() < 0.5
        key_bits.append(bit)
        gates[key_net] = (GateKind.INPUT, ())
        inputs.append(key_net)
        kind = GateKind.XNOR if bit else GateKind.XOR
        _splice(gates, c_inputs, net, lambda raw, k=kind, kn=key_net: (k, (raw, kn)))
    locked = Circuit(f"{c.name}_xor{cfg.width}", inputs, c.outputs, gates)
    return LockedCircuit(
        locked,
        BitVector.from_bits(key_bits),
        LockKind.XOR,
        {"sites": chosen, "seed": cfg.seed},
    )


def lock_mux(
    c: Circuit, cfg: LockConfig, _decoy_pool: str = "acyclic"
) -> LockedCircuit:
    """Route selected nets through key-controlled MUXes against decoy nets.

    The correct key bit selects the true net; the decoy is drawn uniformly
    from nets outside the true net's fanout cone, so the result stays acyclic.
    """
    rng = Random(cfg.seed)
    gates = dict(c.gates)
    inputs = list(c.inputs)
    c_inputs = set(c.inputs)
    sites = _splice_sites(c)
    rng.shuffle(sites)
    key_bits = []
    placed = []
    i = 0
    while i < cfg.width and sites:
        net = sites.pop()
        working = Circuit("w", inputs, c.outputs, gates)
        if _decoy_pool == "acyclic":
            illegal = fanout_cone(working, net)
            pool = [
                n
                for n, (kind, _) in gates.items()
                if n not in illegal
                and not _KEY_RE.fullmatch(n)
                and kind not in (GateKind.CONST0, GateKind.CONST1)
            ]
        else:  # feedback pool: strictly downstream nets close structural cycles
            pool = sorted(fanout_cone(working, net) - {net})
        if not pool:
            continue
        decoy = rng.choice(sorted(pool))
        key_net = f"key_{i}"
        bit = rng.random() < 0.5
        key_bits.append(bit)
        gates[key_net] = (GateKind.INPUT, ())
        inputs.append(key_net)

        def make(raw, kn=key_net, d=decoy, b=bit):
            data = (d, raw) if b else (raw, d)
            return (GateKind.MUX2, (kn,) + data)

        _splice(gates, c_inputs, net, make)
        placed.append((net, decoy))
        i += 1
    if i < cfg.width:
        raise LockError(f"insufficient legal (net, decoy) pairs: placed {i} of {cfg.width}")
    kind = LockKind.CYCLIC_MUX if _decoy_pool == "feedback" else LockKind.MUX
    locked = Circuit(f"{c.name}_{kind.value}{cfg.width}", inputs, c.outputs, gates)
    return LockedCircuit(
        locked,
        BitVector.from_bits(key_bits),
        kind,
        {"sites": placed, "seed": cfg.seed},
    )


def lock_cyclic_mux(c: Circuit, cfg: LockConfig) -> LockedCircuit:
    """MUX locking whose decoys deliberately create key-dependent cycles.

    Decoys come from the true net's own fanout cone, so every inserted MUX
    closes a structural feedback loop that only the correct selection breaks.
    Simulation requires resolving the key first (:func:`apply_key`).
    """
    return lock_mux(c, cfg, _decoy_pool="feedback")


def _gate_truth(kind: GateKind, bits: tuple[bool, ...]) -> bool:
    from .netlist import _eval_gate

    return _eval_gate(kind, bits)


def lock_lut(c: Circuit, cfg: LockConfig) -> LockedCircuit:
    """Replace gates with key-programmed lookup tables (MUX trees).

    Each replaced gate of fan-in m consumes ``2**m`` key bits holding its
    truth table; bit index ``sum(input_i << (m-1-i))`` (first fan-in is the
    most significant). As many gates are replaced as fit within ``cfg.width``
    key bits; the achieved width is reported in the result.
    """
    arity = cfg.lut_arity
    per_lut = 1 << arity
    n_luts = cfg.width // per_lut
    if n_luts < 1:
        raise LockError(f"width {cfg.width} below one {arity}-input LUT ({per_lut} bits)")
    candidates = [
        net
        for net, (kind, fanins) in c.gates.items()
        if kind not in (GateKind.INPUT, GateKind.CONST0, GateKind.CONST1, GateKind.MUX2)
        and len(fanins) == arity
    ]
    if len(candidates) < n_luts:
        raise LockError(
            f"no suitable gates: need {n_luts} with fan-in {arity}, found {len(candidates)}"
        )
    rng = Random(cfg.seed)
    chosen = rng.sample(candidates, n_luts)
    gates = dict(c.gates)
    inputs = list(c.inputs)
    key_bits: list[bool] = []
    for j, net in enumerate(chosen):
        kind, fanins = gates[net]
        base = len(key_bits)
        for idx in range(per_lut):
            bits = tuple(bool((idx >> (arity - 1 - i)) & 1) for i in range(arity))
            key_bits.append(_gate_truth(kind, bits))
            key_net = f"key_{base + idx}"
            gates[key_net] = (GateKind.INPUT, ())
            inputs.append(key_net)

        def build(sel: tuple[str, ...], lo_idx: int, hi_idx: int, path: str) -> str:
            if not sel:
                return f"key_{base + lo_idx}"
            mid = (lo_idx + hi_idx + 1) // 2
            d0 = build(sel[1:], lo_idx, mid - 1, path + "0")
            d1 = build(sel[1:], mid, hi_idx, path + "1")
            if path == "":
                name = net  # root takes over the gate's net
            else:
                name = _fresh(gates, f"{net}_lut{path}")
            gates[name] = (GateKind.MUX2, (sel[0], d0, d1))
            return name

        del gates[net]
        build(fanins, 0, per_lut - 1, "")
    locked = Circuit(f"{c.name}_lut{len(key_bits)}", inputs, c.outputs, gates)
    return LockedCircuit(
        locked,
        BitVector.from_bits(key_bits),
        LockKind.LUT,
        {"gates": chosen, "arity": arity, "requested_width": cfg.width, "seed": cfg.seed},
    )


def lock_point_fn(c: Circuit, cfg: LockConfig) -> LockedCircuit:
    """Point-function lock: a hard-coded flip comparator XORs one output when
    the input matches a hidden pattern; a key-driven restore comparator
    cancels the flip exactly when the key equals that pattern.

    Any wrong key corrupts exactly the inputs matching the pattern or the
    key itself, i.e. a ``2 / 2**p`` fraction of the input space for a
    ``p``-bit comparator.
    """
    p = cfg.comparator_width if cfg.comparator_width is not None else cfg.width
    if p < 1 or p > c.n_inputs:
        raise LockError(f"comparator width {p} not in 1..{c.n_inputs}")
    rng = Random(cfg.seed)
    watched = rng.sample(list(c.inputs), p)
    pattern = [rng.random() < 0.5 for _ in range(p)]
    out_candidates = [o for o in c.outputs if c.gates[o][0] is not GateKind.INPUT]
    if not out_candidates:
        raise LockError("no lockable output (all outputs are raw inputs)")
    out = rng.choice(out_candidates)

    gates = dict(c.gates)
    inputs = list(c.inputs)
    flip_terms = []
    restore_terms = []
    for i, (x, bit) in enumerate(zip(watched, pattern)):
        key_net = f"key_{i}"
        gates[key_net] = (GateKind.INPUT, ())
        inputs.append(key_net)
        r = _fresh(gates, f"restore_eq_{i}")
        gates[r] = (GateKind.XNOR, (x, key_net))
        restore_terms.append(r)
        if bit:
            flip_terms.append(x)
        else:
            f = _fresh(gates, f"flip_inv_{i}")
            gates[f] = (GateKind.NOT, (x,))
            flip_terms.append(f)

    def conj(name: str, terms: list[str]) -> str:
        name = _fresh(gates, name)
        if len(terms) == 1:
            gates[name] = (GateKind.BUF, (terms[0],))
        else:
            gates[name] = (GateKind.AND, tuple(terms))
        return name

    flip = conj("flip_hit", flip_terms)
    restore = conj("restore_hit", restore_terms)

    raw = _fresh(gates, f"{out}_prelock")
    gates[raw] = gates[out]
    # internal consumers keep the uncorrupted signal; only the output port flips
    _redirect(gates, out, raw, only=[g for g in _consumers(gates, out) if g != raw])
    gates[out] = (GateKind.XOR, (raw, flip, restore))

    locked = Circuit(f"{c.name}_pf{p}", inputs, c.outputs, gates)
    return LockedCircuit(
        locked,
        BitVector.from_bits(pattern),
        LockKind.POINT_FN,
        {"watched_inputs": watched, "output": out, "comparator_width": p, "seed": cfg.seed},
    )


# -- routing locks -----------------------------------------------------------


def benes_width(n_wires: int) -> int:
    """Key bits of a Benes network over ``n_wires`` ports: one per swap cell."""
    stages = 2 * int(math.log2(n_wires)) - 1
    return stages * (n_wires // 2)


def benes_permutation(n_wires: int, key: BitVector) -> tuple[int, ...]:
    """Port permutation realized by the keyed network; entry j is the output
    port receiving input port j. Cell order matches the built netlist."""
    counter = [0]

    def route(ports: list[int]) -> list[int]:
        n = len(ports)
        if n == 2:
            k = key[counter[0]]
            counter[0] += 1
            return [ports[1], ports[0]] if k else list(ports)
        top_in, bot_in = [], []
        for i in range(n // 2):
            a, b = ports[2 * i], ports[2 * i + 1]
            k = key[counter[0]]
            counter[0] += 1
            if k:
                a, b = b, a
            top_in.append(a)
            bot_in.append(b)
        top = route(top_in)
        bot = route(bot_in)
        out = []
        for i in range(n // 2):
            a, b = top[i], bot[i]
            k = key[counter[0]]
            counter[0] += 1
            if k:
                a, b = b, a
            out.extend([a, b])
        return out

    arrangement = route(list(range(n_wires)))
    assert counter[0] == key.width
    perm = [0] * n_wires
    for out_port, in_port in enumerate(arrangement):
        perm[in_port] = out_port
    return tuple(perm)


def _pick_routing_size(cfg: LockConfig) -> int:
    if cfg.routing_wires is not None:
        n = cfg.routing_wires
        if n < 2 or n & (n - 1):
            raise LockError(f"routing_wires must be a power of 2 >= 2, got {n}")
        return n
    best, best_gap = None, None
    n = 2
    while True:
        gap = abs(benes_width(n) - cfg.width)
        if best_gap is None or gap < best_gap:
            best, best_gap = n, gap
        if benes_width(n) >= cfg.width:
            return best
        n *= 2


def lock_routing(c: Circuit, cfg: LockConfig) -> LockedCircuit:
    """Route a set of mutually independent wires through a keyed Benes network.

    The network has ``2*log2(N) - 1`` stages of ``N/2`` two-by-two swap cells,
    one key bit each. The correct key is drawn uniformly at random; wire
    fanouts are reattached according to the permutation that key realizes, so
    end to end the correct key is the identity on the locked wires while the
    wiring into the network is random. Distinct keys realizing the same
    permutation are all functionally correct.
    """
    n_wires = _pick_routing_size(cfg)
    rng = Random(cfg.seed)
    outputs = set(c.outputs)
    eligible = [
        net
        for net, (kind, _) in c.gates.items()
        if kind not in (GateKind.CONST0, GateKind.CONST1)
        and net not in outputs
        and _consumers(c.gates, net)
    ]
    cones = {net: fanout_cone(c, net) for net in eligible}
    wires: list[str] = []
    for _ in range(20):  # greedy can dead-end; retry with fresh orders
        rng.shuffle(eligible)
        wires = []
        for net in eligible:
            if len(wires) == n_wires:
                break
            if any(w in cones[net] or net in cones[w] for w in wires):
                continue
            wires.append(net)
        if len(wires) == n_wires:
            break
    if len(wires) < n_wires:
        raise LockError(
            f"insufficient independent wires: found {len(wires)} of {n_wires}"
        )

    width = benes_width(n_wires)
    key = BitVector.random(rng, width)
    perm = benes_permutation(n_wires, key)

    gates = dict(c.gates)
    inputs = list(c.inputs)
    for i in range(width):
        gates[f"key_{i}"] = (GateKind.INPUT, ())
        inputs.append(f"key_{i}")

    counter = [0]
    cell_gates: set[str] = set()

    def cell(a: str, b: str, tag: str) -> tuple[str, str]:
        k = f"key_{counter[0]}"
        counter[0] += 1
        o0 = _fresh(gates, f"rsw_{tag}_a")
        o1 = _fresh(gates, f"rsw_{tag}_b")
        gates[o0] = (GateKind.MUX2, (k, a, b))
        gates[o1] = (GateKind.MUX2, (k, b, a))
        cell_gates.update((o0, o1))
        return o0, o1

    def network(ports: list[str], tag: str) -> list[str]:
        n = len(ports)
        if n == 2:
            return list(cell(ports[0], ports[1], tag))
        top_in, bot_in = [], []
        for i in range(n // 2):
            a, b = cell(ports[2 * i], ports[2 * i + 1], f"{tag}i{i}")
            top_in.append(a)
            bot_in.append(b)
        top = network(top_in, tag + "t")
        bot = network(bot_in, tag + "b")
        out = []
        for i in range(n // 2):
            out.extend(cell(top[i], bot[i], f"{tag}o{i}"))
        return out

    out_ports = network(list(wires), "s")
    assert counter[0] == width
    for j, wire in enumerate(wires):
        target = out_ports[perm[j]]
        _redirect(
            gates,
            wire,
            target,
            only=[g for g in _consumers(gates, wire) if g not in cell_gates],
        )
    locked = Circuit(f"{c.name}_route{width}", inputs, c.outputs, gates)
    return LockedCircuit(
        locked,
        key,
        LockKind.ROUTING,
        {"wires": wires, "n_wires": n_wires, "requested_width": cfg.width, "seed": cfg.seed},
    )


_LOCKERS = {
    LockKind.XOR: lock_xor,
    LockKind.MUX: lock_mux,
    LockKind.LUT: lock_lut,
    LockKind.POINT_FN: lock_point_fn,
    LockKind.ROUTING: lock_routing,
    LockKind.CYCLIC_MUX: lock_cyclic_mux,
}


def lock(c: Circuit, kind: LockKind | str, cfg: LockConfig) -> LockedCircuit:
    """Dispatch to the transform for ``kind``."""
    kind = LockKind(kind) if not isinstance(kind, LockKind) else kind
    return _LOCKERS[kind](c, cfg)


# -- key application ----------------------------------------------------------


def apply_key(cl: LockedCircuit, key: BitVector) -> Circuit:
    """Bind key inputs to constants, collapsing key-selected MUXes.

    The constant select resolves each key MUX to a BUF of the chosen data
    net, which is what breaks every loop of a correctly keyed cyclic lock.
    """
    if key.width != cl.width:
        raise LockError(f"key width {key.width}, lock width {cl.width}")
    value = dict(zip(cl.key_inputs, key))
    gates = {}
    for net, (kind, fanins) in cl.circuit.gates.items():
        if net in value:
            gates[net] = (GateKind.CONST1 if value[net] else GateKind.CONST0, ())
        elif kind is GateKind.MUX2 and fanins[0] in value:
            gates[net] = (GateKind.BUF, (fanins[2] if value[fanins[0]] else fanins[1],))
        else:
            gates[net] = (kind, fanins)
    return Circuit(cl.circuit.name + "@key", cl.data_inputs, cl.circuit.outputs, gates)


# -- locked netlist files ------------------------------------------------------


def write_locked(cl: LockedCircuit, bench_path: str | Path) -> Path:
    """Write the locked netlist plus a ``.key`` sidecar next to it.

    The BENCH file carries a ``LOCK kind=<k> width=<w> seed=<s>`` comment and
    plain ``INPUT(key_i)`` lines; the correct key lives only in the sidecar.
    """
    bench_path = Path(bench_path)
    seed = cl.metadata.get("seed", 0)
    header = f"LOCK kind={cl.lock_kind.value} width={cl.width} seed={seed}"
    bench_path.write_text(serialize_bench(cl.circuit, header=header))
    key_path = bench_path.with_suffix(".key")
    key_path.write_text(cl.correct_key.to_hex() + "\n")
    return key_path


_LOCK_HEADER_RE = re.compile(r"#\s*LOCK\s+kind=(\S+)\s+width=(\d+)\s+seed=(\S+)")


def read_locked(bench_path: str | Path, key_path: str | Path | None = None) -> LockedCircuit:
    """Load a locked netlist and its sidecar key file."""
    bench_path = Path(bench_path)
    text = bench_path.read_text()
    m = _LOCK_HEADER_RE.search(text)
    circuit = parse_bench(text, name=bench_path.stem)
    key_inputs = sorted(
        (n for n in circuit.inputs if _KEY_RE.fullmatch(n)),
        key=lambda n: int(_KEY_RE.fullmatch(n).group(1)),
    )
    width = len(key_inputs)
    if {int(_KEY_RE.fullmatch(n).group(1)) for n in key_inputs} != set(range(width)):
        raise LockError("key inputs are not a contiguous key_0..key_{w-1} block")
    if key_path is None:
        key_path = bench_path.with_suffix(".key")
    key = BitVector.from_hex(Path(key_path).read_text().strip(), width)
    if m is None:
        raise LockError(f"{bench_path}: missing '# LOCK kind=... width=... seed=...' header")
    if int(m.group(2)) != width:
        raise LockError(f"header width {m.group(2)} != {width} key inputs")
    return LockedCircuit(circuit, key, LockKind(m.group(1)), {"seed": int(m.group(3))})
