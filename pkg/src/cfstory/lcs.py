"""Longest common subsequence with a canonical alignment.

An alignment is a list of index pairs (i, j), strictly increasing in both
coordinates, with a[i] == b[j] for every pair. Among all maximum-length
alignments we return the canonical one: the lexicographically smallest pair
sequence, which always prefers the earliest usable match in ``a``.

Two implementations produce the same canonical alignment. The quadratic
suffix-table walk is used while the DP table fits in memory; longer inputs
fall back to a linear-space divide-and-conquer. Plain lengths always come
from a two-row DP.
"""

from __future__ import annotations

from collections.abc import Sequence

Pair = tuple[int, int]

# Above this many DP cells the table walk would allocate too much; switch to
# the linear-space path. 1<<22 cells covers endings thousands of tokens long.
_TABLE_CELL_LIMIT = 1 << 22


def lcs_length(a: Sequence, b: Sequence) -> int:
    """LCS length in O(len(a)*len(b)) time and O(min(len(a), len(b))) space."""
    if len(b) > len(a):
        a, b = b, a
    return _forward_row(a, b)[-1]


def lcs(a: Sequence, b: Sequence) -> list[Pair]:
    """Canonical maximum-length alignment between two sequences."""
    if len(a) == 0 or len(b) == 0:
        return []
    if (len(a) + 1) * (len(b) + 1) <= _TABLE_CELL_LIMIT:
        return _pairs_table(a, b)
    return _pairs_linear_space(a, b)


def _forward_row(a: Sequence, b: Sequence) -> list[int]:
    """Final DP row: row[k] = LCS(a, b[:k])."""
    row = [0] * (len(b) + 1)
    for x in a:
        diag = row[0]
        for k in range(1, len(row)):
            cur = row[k]
            if x == b[k - 1]:
                row[k] = diag + 1
            elif row[k - 1] > cur:
                row[k] = row[k - 1]
            diag = cur
    return row


def _suffix_row(a: Sequence, b: Sequence) -> list[int]:
    """row[k] = LCS(a, b[k:]), computed on the reversed sequences."""
    rev = _forward_row(a[::-1], b[::-1])
    rev.reverse()
    return rev


def _suffix_table(a: Sequence, b: Sequence) -> list[list[int]]:
    """Full table L[i][j] = LCS(a[i:], b[j:])."""
    m, n = len(a), len(b)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m - 1, -1, -1):
        cur, below = table[i], table[i + 1]
        ai = a[i]
        for j in range(n - 1, -1, -1):
            if ai == b[j]:
                cur[j] = below[j + 1] + 1
            else:
                skip_i = below[j]
                skip_j = cur[j + 1]
                cur[j] = skip_i if skip_i >= skip_j else skip_j
    return table


def _pairs_table(a: Sequence, b: Sequence) -> list[Pair]:
    """Greedy walk over the suffix table.

    At state (i, j) with budget L[i][j]: take the match at (i, j) when it is
    optimal; otherwise stay in row i and advance j only if some match in this
    row still meets the budget, else skip the row. Taking the smallest usable
    pair at every step yields the lexicographic minimum.
    """
    table = _suffix_table(a, b)
    m, n = len(a), len(b)
    pairs: list[Pair] = []
    i = j = 0
    usable: list[int] = []
    usable_row = -1
    while i < m and j < n and table[i][j] > 0:
        if a[i] == b[j] and table[i][j] == table[i + 1][j + 1] + 1:
            pairs.append((i, j))
            i += 1
            j += 1
            continue
        if usable_row != i:
            # usable[j'] = best value of 1 + L[i+1][j''+1] over matches at
            # j'' >= j' in row i; row i can contribute iff this meets the budget.
            below = table[i + 1]
            ai = a[i]
            usable = [0] * (n + 1)
            for jp in range(n - 1, -1, -1):
                best = usable[jp + 1]
                if ai == b[jp]:
                    cand = below[jp + 1] + 1
                    if cand > best:
                        best = cand
                usable[jp] = best
            usable_row = i
        if usable[j] == table[i][j]:
            j += 1
        else:
            i += 1
    return pairs


def _pairs_linear_space(a: Sequence, b: Sequence) -> list[Pair]:
    """Divide-and-conquer canonical alignment in O(min side) memory.

    Split ``a`` at its midpoint and score every split column of ``b`` with
    forward plus suffix rows. Solving the left half against the widest
    optimal column window keeps every column the canonical walk could use;
    the right half then starts at the smallest optimal split column beyond
    the left result.
    """
    out: list[Pair] = []
    _split(a, b, 0, 0, out)
    return out


def _split(a: Sequence, b: Sequence, oi: int, oj: int, out: list[Pair]) -> None:
    m, n = len(a), len(b)
    if m == 0 or n == 0:
        return
    if m == 1:
        x = a[0]
        for j, y in enumerate(b):
            if y == x:
                out.append((oi, oj + j))
                return
        return
    h = m // 2
    front = _forward_row(a[:h], b)
    back = _suffix_row(a[h:], b)
    best = max(front[k] + back[k] for k in range(n + 1))
    if best == 0:
        return
    splits = [k for k in range(n + 1) if front[k] + back[k] == best]
    mark = len(out)
    _split(a[:h], b[: splits[-1]], oi, oj, out)
    last_col = out[-1][1] - oj if len(out) > mark else -1
    k_star = next(k for k in splits if k > last_col)
    _split(a[h:], b[k_star:], oi + h, oj + k_star, out)
