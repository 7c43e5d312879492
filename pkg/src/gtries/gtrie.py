"""Explicit G-tries built from lazily generated labelings of the infinite M-ary tree.

A key is an edge labeling of the M-ary tree. The G-trie holds every labeled
path (sequence of (direction, letter) steps) that occurs in at least two keys.
This module is the structural ground truth the recurrences and simulators are
checked against, so it favours clarity over speed.
"""
from __future__ import annotations

import hashlib
import struct
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import accumulate

from .errors import CapExceeded
from .model import ModelParams

DEFAULT_DEPTH_CAP = 64
DEFAULT_NODE_CAP = 10**7

_MASK64 = (1 << 64) - 1
_PERSON = b"gtrie-label"


def _hash64(master_seed: int, key_index: int, path) -> int:
    h = hashlib.blake2b(digest_size=8, person=_PERSON)
    h.update(struct.pack("<QQ", master_seed & _MASK64, key_index & _MASK64))
    h.update(bytes(path))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class SeededLabeling:
    """One random key. Letters are a pure function of (seed, key, edge path)."""

    master_seed: int
    key_index: int
    params: ModelParams = field(repr=False)

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def A(self) -> int:
        return self.params.A

    def label_at(self, path) -> int:
        return label_at(self, path)


@lru_cache(maxsize=64)
def _cdf(params: ModelParams) -> tuple[float, ...]:
    return tuple(accumulate(params.p[:-1]))


def label_at(labeling: SeededLabeling, path) -> int:
    """Letter on the edge reached by following ``path`` (directions in [0, M))."""
    if not path:
        raise ValueError("the empty path has no edge")
    h = _hash64(labeling.master_seed, labeling.key_index, path)
    u = (h >> 11) * (1.0 / (1 << 53))
    return bisect_right(_cdf(labeling.params), u)


def make_labelings(params: ModelParams, n: int, master_seed: int) -> list[SeededLabeling]:
    if params.M > 256:
        raise ValueError("path bytes encode directions; M must be <= 256")
    return [SeededLabeling(master_seed, i, params) for i in range(n)]


@dataclass(frozen=True)
class ExplicitLabeling:
    """Labeling given as a table {edge path: letter}; unknown paths raise KeyError."""

    table: dict
    M: int
    A: int

    def label_at(self, path) -> int:
        return self.table[tuple(path)]


@dataclass(eq=False)
class Node:
    path: tuple[int, ...]
    letters: tuple[int, ...]
    keys: tuple[int, ...]
    slots: list[list[tuple[int, ...]]] = field(default_factory=list, repr=False)
    children: dict[tuple[int, int], "Node"] = field(default_factory=dict, repr=False)

    @property
    def multiplicity(self) -> int:
        return len(self.keys)

    @property
    def depth(self) -> int:
        return len(self.path)


@dataclass
class GTrie:
    M: int
    A: int
    n: int
    root: Node | None
    size: int

    def nodes(self):
        if self.root is None:
            return
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(list(node.children.values())))


def _dims(labelings, M, A):
    if M is None or A is None:
        if not labelings:
            return M or 1, A or 2
        M = labelings[0].M if M is None else M
        A = labelings[0].A if A is None else A
    return M, A


def build_gtrie(labelings, depth_cap: int = DEFAULT_DEPTH_CAP,
                node_cap: int = DEFAULT_NODE_CAP, *, M=None, A=None) -> GTrie:
    M, A = _dims(labelings, M, A)
    n = len(labelings)
    if n < 2:
        return GTrie(M=M, A=A, n=n, root=None, size=0)
    root = Node(path=(), letters=(), keys=tuple(range(n)))
    size = 1
    stack = [root]
    while stack:
        node = stack.pop()
        for i in range(M):
            child_path = node.path + (i,)
            groups = defaultdict(list)
            for key in node.keys:
                groups[labelings[key].label_at(child_path)].append(key)
            row = [tuple(groups.get(j, ())) for j in range(A)]
            node.slots.append(row)
            for j, keys in enumerate(row):
                if len(keys) < 2:
                    continue
                if len(child_path) > depth_cap:
                    raise CapExceeded("depth", depth_cap)
                size += 1
                if size > node_cap:
                    raise CapExceeded("nodes", node_cap)
                child = Node(path=child_path, letters=node.letters + (j,), keys=keys)
                node.children[(i, j)] = child
                stack.append(child)
    return GTrie(M=M, A=A, n=n, root=root, size=size)


@dataclass(frozen=True)
class StatCounters:
    S: int
    L: int
    K: int
    R: int
    N: float


def count_stats(trie: GTrie, weights=(0.0, 0.0, 1.0)) -> StatCounters:
    """Internal nodes, leaves, key-holding and empty external nodes.

    With no internal node the root slot itself is the single external node:
    it holds the key when n == 1 and is empty when n == 0.
    """
    alpha, beta, gamma = weights
    if trie.root is None:
        K = 1 if trie.n == 1 else 0
        R = 1 if trie.n == 0 else 0
        return StatCounters(S=0, L=0, K=K, R=R, N=alpha * R + beta * K)
    S = L = K = R = 0
    for node in trie.nodes():
        S += 1
        if not node.children:
            L += 1
        for row in node.slots:
            for keys in row:
                if len(keys) == 1:
                    K += 1
                elif not keys:
                    R += 1
    return StatCounters(S=S, L=L, K=K, R=R, N=alpha * R + beta * K + gamma * S)


def size_by_definition(labelings, depth_cap: int = DEFAULT_DEPTH_CAP, *, M=None, A=None) -> int:
    """Count labeled paths occurring in at least two keys, level by level.

    Each candidate path is matched against every key edge by edge from the root;
    nothing is shared with :func:`build_gtrie` beyond ``label_at``.
    """
    M, A = _dims(labelings, M, A)
    if len(labelings) < 2:
        return 0

    def occurs(lab, path, letters):
        return all(lab.label_at(path[: t + 1]) == letters[t] for t in range(len(path)))

    level = [((), ())]
    count = 1
    depth = 0
    while level:
        nxt = []
        for path, letters in level:
            for i in range(M):
                for j in range(A):
                    cand = (path + (i,), letters + (j,))
                    hits = 0
                    for lab in labelings:
                        hits += occurs(lab, *cand)
                        if hits >= 2:
                            nxt.append(cand)
                            break
        depth += 1
        if nxt and depth > depth_cap:
            raise CapExceeded("depth", depth_cap)
        count += len(nxt)
        level = nxt
    return count


def export_dot(trie: GTrie) -> str:
    """DOT digraph: internal nodes as circles, external nodes as boxes."""
    lines = ["digraph gtrie {"]
    if trie.root is not None:
        ids = {}
        edges = []
        ext = 0
        for node in trie.nodes():
            ids[id(node)] = f"n{len(ids)}"
        for node in trie.nodes():
            src = ids[id(node)]
            lines.append(f'  {src} [shape=circle, label=""];')
            for i, row in enumerate(node.slots):
                for j, keys in enumerate(row):
                    child = node.children.get((i, j))
                    if child is not None:
                        dst = ids[id(child)]
                    else:
                        dst = f"x{ext}"
                        ext += 1
                        label = f"k{keys[0]}" if len(keys) == 1 else ""
                        lines.append(f'  {dst} [shape=box, label="{label}"];')
                    edges.append(f'  {src} -> {dst} [label="({i}, {j})"];')
        lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"
