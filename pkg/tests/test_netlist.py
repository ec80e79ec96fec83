import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locklab import netlist as nl
from locklab.netlist import BenchParseError, BitVector, Circuit, CyclicCircuitError, GateKind

from conftest import ref_simulate

AND_TEXT = "INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n"


def all_patterns(n):
    return [BitVector.from_int(v, n) for v in range(1 << n)]


class TestParse:
    def test_minimal_and(self):
        c = nl.parse_bench(AND_TEXT)
        assert c.inputs == ("a", "b")
        assert c.outputs == ("y",)
        assert c.gates["y"] == (GateKind.AND, ("a", "b"))

    def test_c17_counts(self, c17):
        assert c17.n_inputs == 5
        assert c17.n_outputs == 2
        kinds = [k for k, _ in c17.gates.values() if k is not GateKind.INPUT]
        assert len(kinds) == 6
        assert all(k is GateKind.NAND for k in kinds)

    def test_undefined_net(self):
        with pytest.raises(BenchParseError, match="undefined net 'a'"):
            nl.parse_bench("OUTPUT(y)\ny = AND(a, b)\n")

    def test_duplicate_definition(self):
        text = "INPUT(a)\nINPUT(a)\n"
        with pytest.raises(BenchParseError, match="line 2"):
            nl.parse_bench(text)

    def test_syntax_error_line_number(self):
        with pytest.raises(BenchParseError, match="line 3"):
            nl.parse_bench("INPUT(a)\n\ny = AND(a,\n")

    def test_bad_kind(self):
        with pytest.raises(BenchParseError, match="XAND"):
            nl.parse_bench("INPUT(a)\nINPUT(b)\ny = XAND(a, b)\n")

    def test_comments_and_buff(self):
        text = "# header\nINPUT(a)  # trailing\nOUTPUT(y)\ny = BUFF(a)\n"
        c = nl.parse_bench(text)
        assert c.gates["y"] == (GateKind.BUF, ("a",))

    def test_mux_normalization(self):
        text = "INPUT(s)\nINPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = MUX(s, a, b)\n"
        c = nl.parse_bench(text)
        assert c.gates["y"] == (GateKind.MUX2, ("s", "a", "b"))

    def test_mux_arity_enforced(self):
        with pytest.raises(BenchParseError, match="3 operands"):
            nl.parse_bench("INPUT(s)\nINPUT(a)\ny = MUX(s, a)\n")


class TestSerialize:
    def test_single_and_line(self):
        c = nl.parse_bench(AND_TEXT)
        text = nl.serialize_bench(c)
        assert text.count("= AND(") == 1

    def test_c17_fixed_point(self, c17):
        once = nl.serialize_bench(c17)
        twice = nl.serialize_bench(nl.parse_bench(once, "c17"))
        assert once == twice

    def test_mux_emits_three_operands(self):
        text = "INPUT(s)\nINPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = MUX(s, a, b)\n"
        c = nl.parse_bench(text)
        assert "y = MUX(s, a, b)" in nl.serialize_bench(c)

    def test_roundtrip_identical_gate_map(self, c17, r432):
        for c in (c17, r432):
            again = nl.parse_bench(nl.serialize_bench(c), c.name)
            assert again.gates == c.gates
            assert again.inputs == c.inputs
            assert again.outputs == c.outputs

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_roundtrip_random_circuits(self, seed):
        c = nl.random_circuit(4, 25, 3, seed=seed)
        again = nl.parse_bench(nl.serialize_bench(c), c.name)
        assert again.gates == c.gates


class TestSimulate:
    def test_and_gate(self):
        c = nl.parse_bench(AND_TEXT)
        assert nl.simulate(c, BitVector.from_bits([True, True])).bits == (True,)
        assert nl.simulate(c, BitVector.from_bits([True, False])).bits == (False,)

    def test_width_mismatch(self, c17):
        with pytest.raises(nl.NetlistError, match="width"):
            nl.simulate(c17, BitVector.from_int(0, 4))

    def test_cyclic_rejected(self):
        gates = {
            "s": (GateKind.INPUT, ()),
            "m": (GateKind.MUX2, ("s", "m", "s")),
        }
        c = Circuit("loop", ["s"], ["m"], gates)
        with pytest.raises(CyclicCircuitError):
            nl.simulate(c, BitVector.from_int(0, 1))

    def test_c17_exhaustive_against_reference(self, c17):
        for x in all_patterns(5):
            assert nl.simulate(c17, x).bits == ref_simulate(c17, x)

    def test_determinism(self, c17):
        x = BitVector.from_int(19, 5)
        assert nl.simulate(c17, x) == nl.simulate(c17, x)


class TestSimulateBatch:
    def test_empty(self, c17):
        assert nl.simulate_batch(c17, []) == []

    def test_c17_batch_of_64(self, c17, rng):
        xs = [BitVector.random(rng, 5) for _ in range(64)]
        assert nl.simulate_batch(c17, xs) == [nl.simulate(c17, x) for x in xs]

    def test_r432_large_batch_cross_check(self, r432, rng):
        xs = [BitVector.random(rng, 36) for _ in range(10_000)]
        ys = nl.simulate_batch(r432, xs)
        for i in rng.sample(range(10_000), 100):
            assert ys[i] == nl.simulate(r432, xs[i])

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6), n_patterns=st.integers(1, 70))
    def test_matches_map_simulate(self, seed, n_patterns):
        c = nl.random_circuit(5, 30, 3, seed=seed)
        prng = random.Random(seed ^ 0x5EED)
        xs = [BitVector.random(prng, 5) for _ in range(n_patterns)]
        assert nl.simulate_batch(c, xs) == [nl.simulate(c, x) for x in xs]

    def test_exhaustive_words_enumerate_all_patterns(self, c17):
        words = nl.exhaustive_input_words(5)
        outs = nl.simulate_packed(c17, words)
        got = {
            o: nl._unpack_bool(outs[o], 32).tolist() for o in c17.outputs
        }
        for p, x in enumerate(all_patterns(5)):
            y = nl.simulate(c17, x)
            for j, o in enumerate(c17.outputs):
                assert got[o][p] == y.bits[j]

    def test_popcount_words_masks_tail(self):
        words = np.array([~np.uint64(0)], dtype=np.uint64)
        assert nl.popcount_words(words, 5) == 5


class TestStructure:
    def test_single_and_stats(self):
        assert nl.structural_stats(nl.parse_bench(AND_TEXT)) == (1, 1)

    def test_not_chain(self):
        text = "INPUT(a)\nOUTPUT(z)\nx = NOT(a)\ny = NOT(x)\nz = NOT(y)\n"
        assert nl.structural_stats(nl.parse_bench(text)) == (3, 3)

    def test_c17_stats(self, c17):
        assert nl.structural_stats(c17) == (6, 3)

    def test_depth_monotone_under_insertion(self, c17):
        base_gates, base_depth = nl.structural_stats(c17)
        # splice a BUF in front of every single gate, one at a time
        for net, (kind, fanins) in list(c17.gates.items()):
            if kind is GateKind.INPUT:
                continue
            gates = dict(c17.gates)
            gates[f"{net}__raw"] = (kind, fanins)
            gates[net] = (GateKind.BUF, (f"{net}__raw",))
            spliced = Circuit("spliced", c17.inputs, c17.outputs, gates)
            count, depth = nl.structural_stats(spliced)
            assert count == base_gates + 1
            assert depth >= base_depth

    def test_acyclic(self, c17):
        assert nl.is_acyclic(c17)

    def test_mux_feedback_loop_cyclic(self):
        gates = {
            "s": (GateKind.INPUT, ()),
            "a": (GateKind.INPUT, ()),
            "g": (GateKind.AND, ("a", "m")),
            "m": (GateKind.MUX2, ("s", "a", "g")),
        }
        c = Circuit("loop", ["s", "a"], ["g"], gates)
        assert not nl.is_acyclic(c)

    def test_fanin_cone_covers_inputs(self, c17):
        cone = set()
        for o in c17.outputs:
            cone |= nl.fanin_cone(c17, o)
        assert set(c17.inputs) <= cone

    def test_fanin_cone_unknown_net(self, c17):
        with pytest.raises(nl.NetlistError, match="unknown net"):
            nl.fanin_cone(c17, "nope")

    def test_fanout_cone(self, c17):
        cone = nl.fanout_cone(c17, "11")
        assert cone == {"11", "16", "19", "22", "23"}


class TestRandomCircuit:
    def test_deterministic(self):
        a = nl.random_circuit(4, 20, 2, seed=7)
        b = nl.random_circuit(4, 20, 2, seed=7)
        assert a.gates == b.gates and a.outputs == b.outputs

    def test_seed_changes_circuit(self):
        a = nl.random_circuit(4, 20, 2, seed=7)
        b = nl.random_circuit(4, 20, 2, seed=8)
        assert a.gates != b.gates

    def test_every_input_used(self):
        c = nl.random_circuit(6, 30, 3, seed=3)
        used = {f for _, fanins in c.gates.values() for f in fanins}
        assert set(c.inputs) <= used
        assert nl.is_acyclic(c)


class TestBitVector:
    def test_hex_roundtrip(self):
        bv = BitVector.from_hex("1f", 8)
        assert bv.to_int() == 0x1F
        assert bv.to_hex() == "1f"
        assert bv.width == 8

    def test_from_int_bounds(self):
        with pytest.raises(ValueError):
            BitVector.from_int(4, 2)

    def test_bit_order(self):
        bv = BitVector.from_int(0b01, 2)
        assert bv[0] is True and bv[1] is False

    def test_hamming(self):
        a = BitVector.from_int(0b1100, 4)
        b = BitVector.from_int(0b1010, 4)
        assert a.hamming(b) == 2
