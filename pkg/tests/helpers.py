"""Shared fixture generators and independent oracles for the test suite.

The oracles deliberately avoid the library's own traversal code: tree
node counts come straight from the serialized text, dependency checks
use topological peeling, and distance statistics are recomputed with
plain comprehensions.
"""

import numpy as np

LABELS = ["S", "NP", "VP", "PP", "ADJP", "ADVP", "SBAR"]
PRETERMS = ["DT", "NN", "VB", "JJ", "RB", "IN", "PRP"]
WORDS = ["the", "dog", "beam", "runs", "green", "very", "under", "it", "hums"]


def random_tree_text(rng, max_depth=5):
    """Build a random well-formed bracketed tree as text."""

    def node(depth):
        if depth >= max_depth or rng.random() < 0.35:
            return f"({rng.choice(PRETERMS)} {rng.choice(WORDS)})"
        n_children = int(rng.integers(1, 4))
        inner = " ".join(node(depth + 1) for _ in range(n_children))
        return f"({rng.choice(LABELS)} {inner})"

    return node(0)


def oracle_subtree_count(text):
    """Labeled nodes == opening parens, straight off the text."""
    return text.count("(")


def oracle_leaf_count(text):
    """Atoms not directly after '(' are leaves."""
    toks = text.replace("(", " ( ").replace(")", " ) ").split()
    leaves = 0
    for prev, cur in zip(toks, toks[1:]):
        if cur not in "()" and prev != "(":
            leaves += 1
    return leaves


def random_valid_heads(rng, n):
    """Heads of a random acyclic arborescence over tokens 1..n.

    Token order is permuted and every token points at an earlier one
    in the permutation (or the root), which rules out cycles and
    guarantees at least one root.
    """
    order = rng.permutation(np.arange(1, n + 1))
    heads = {}
    heads[int(order[0])] = 0
    for k in range(1, n):
        parent_pos = int(rng.integers(0, k))
        if rng.random() < 0.08:
            heads[int(order[k])] = 0  # extra root
        else:
            heads[int(order[k])] = int(order[parent_pos])
    return [heads[i] for i in range(1, n + 1)]


def oracle_heads_valid(heads):
    """Topological peeling: valid iff every token eventually reaches 0."""
    n = len(heads)
    if any(h < 0 or h > n for h in heads):
        return False
    known = {0}
    changed = True
    while changed:
        changed = False
        for i, h in enumerate(heads, start=1):
            if i not in known and h in known:
                known.add(i)
                changed = True
    return len(known) == n + 1


def oracle_dep_metrics(heads):
    """(total, normalized, max, avg) recomputed with comprehensions."""
    dists = [abs(i - h) for i, h in enumerate(heads, start=1) if h != 0]
    total = sum(dists)
    n = len(heads)
    return (
        total,
        total / n if n else 0.0,
        max(dists) if dists else 0,
        total / len(dists) if dists else 0.0,
    )


def conllu_block(heads, forms=None, deprels=None, passage="p1", sentence="s1"):
    """Render a ten-column block for the given head vector."""
    n = len(heads)
    forms = forms or [f"w{i}" for i in range(1, n + 1)]
    deprels = deprels or ["root" if h == 0 else "dep" for h in heads]
    lines = [f"# passage_id = {passage}", f"# sentence_id = {sentence}"]
    for i in range(n):
        cols = [str(i + 1), forms[i], forms[i], "X", "_", "_",
                str(heads[i]), deprels[i], "_", "_"]
        lines.append("\t".join(cols))
    return "\n".join(lines) + "\n"
