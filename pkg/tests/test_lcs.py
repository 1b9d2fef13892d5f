"""Both LCS implementations against brute force and the definitional
lexicographic-minimum oracle."""

from __future__ import annotations

import importlib
import itertools
import random

# The package re-exports the lcs() function under the same name as the
# submodule, so a plain "import cfstory.lcs" binds the function.
lcs_mod = importlib.import_module("cfstory.lcs")
from cfstory.lcs import lcs, lcs_length
from oracles import brute_lcs_length, lexmin_lcs_pairs


def all_sequences(alphabet: str, max_len: int):
    for length in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=length)


def check_alignment(a, b, pairs):
    assert len(pairs) == lcs_length(a, b)
    for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]):
        assert i1 < i2 and j1 < j2
    for i, j in pairs:
        assert a[i] == b[j]


def test_classic_pair():
    a, b = tuple("ABCBDAB"), tuple("BDCABA")
    assert lcs_length(a, b) == 4
    pairs = lcs(a, b)
    assert pairs == [(1, 0), (2, 2), (3, 4), (5, 5)]
    assert [a[i] for i, _ in pairs] == list("BCBA")


def test_empty_and_degenerate():
    assert lcs_length((), ()) == 0
    assert lcs((), ("a",)) == []
    assert lcs(("a",), ()) == []
    assert lcs(("a",), ("a",)) == [(0, 0)]
    assert lcs(("a",), ("b",)) == []


def test_identical_sequences():
    seq = tuple("abcabc")
    assert lcs(seq, seq) == [(k, k) for k in range(len(seq))]


def test_exhaustive_small_alphabet_two():
    for a in all_sequences("ab", 4):
        for b in all_sequences("ab", 4):
            pairs = lcs(a, b)
            check_alignment(a, b, pairs)
            assert len(pairs) == brute_lcs_length(a, b)
            assert pairs == lexmin_lcs_pairs(a, b)
            if a and b:
                assert lcs_mod._pairs_linear_space(a, b) == pairs


def test_exhaustive_small_alphabet_three():
    for a in all_sequences("abc", 3):
        for b in all_sequences("abc", 3):
            pairs = lcs(a, b)
            assert len(pairs) == brute_lcs_length(a, b)
            assert pairs == lexmin_lcs_pairs(a, b)
            if a and b:
                assert lcs_mod._pairs_linear_space(a, b) == pairs


def test_random_medium_against_oracle():
    rng = random.Random(20240817)
    for _ in range(60):
        size = rng.randint(2, 5)
        alphabet = [chr(ord("a") + k) for k in range(size)]
        a = tuple(rng.choice(alphabet) for _ in range(rng.randint(10, 45)))
        b = tuple(rng.choice(alphabet) for _ in range(rng.randint(10, 45)))
        pairs = lcs(a, b)
        check_alignment(a, b, pairs)
        assert pairs == lexmin_lcs_pairs(a, b)
        assert lcs_mod._pairs_linear_space(a, b) == pairs


def test_random_large_walk_vs_divide():
    rng = random.Random(99)
    for _ in range(25):
        alphabet = "abcdefg"
        a = tuple(rng.choice(alphabet) for _ in range(rng.randint(60, 140)))
        b = tuple(rng.choice(alphabet) for _ in range(rng.randint(60, 140)))
        walk = lcs_mod._pairs_table(a, b)
        divide = lcs_mod._pairs_linear_space(a, b)
        assert walk == divide
        check_alignment(a, b, walk)


def test_cell_limit_routes_to_linear_space(monkeypatch):
    monkeypatch.setattr(lcs_mod, "_TABLE_CELL_LIMIT", 4)
    rng = random.Random(5)
    for _ in range(40):
        a = tuple(rng.choice("abc") for _ in range(rng.randint(1, 12)))
        b = tuple(rng.choice("abc") for _ in range(rng.randint(1, 12)))
        assert lcs(a, b) == lexmin_lcs_pairs(a, b)


def test_works_on_lists_and_strings():
    assert lcs_length([1, 2, 3, 4], [2, 4, 6]) == 2
    assert lcs("banana", "ananas") == [(1, 0), (2, 1), (3, 2), (4, 3), (5, 4)]
