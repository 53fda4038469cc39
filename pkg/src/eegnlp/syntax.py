"""Sentence-level syntactic complexity features.

Two views of each sentence are consumed: a bracketed constituency
parse in the ``(LABEL child ...)`` form, and a dependency analysis in
the tab-separated ten-column format. From these, five features are
derived per sentence: the subtree count of the constituency parse and
four dependency-distance statistics (total, length-normalized,
maximum, and average).
"""

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BareToken,
    CyclicHeads,
    DuplicateKey,
    EmptyTree,
    HeadOutOfRange,
    MalformedLine,
    TokenCountMismatch,
    UnbalancedParens,
)

log = logging.getLogger(__name__)

FEATURE_NAMES = [
    "subtree_count",
    "total_dep_len",
    "normalized_dep_len",
    "max_dep_dist",
    "avg_dep_dist",
]

# ten-column dependency line layout
ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)


@dataclass(frozen=True)
class ConstituencyTree:
    """A labeled node; preterminals carry a token instead of children."""

    label: str
    children: tuple = ()
    token: str = None

    def __post_init__(self):
        has_children = len(self.children) > 0
        has_token = self.token is not None
        if has_children == has_token:
            raise ValueError("a node carries either children or a token")


@dataclass(frozen=True)
class DepToken:
    index: int     # 1-based position
    form: str
    head: int      # 0 means root
    deprel: str


@dataclass(frozen=True)
class DependencySentence:
    tokens: tuple
    passage_id: str = None
    sentence_id: str = None

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class NlpFeatures:
    subtree_count: int
    total_dep_len: int
    normalized_dep_len: float
    max_dep_dist: int
    avg_dep_dist: float

    def vector(self) -> np.ndarray:
        return np.array([
            self.subtree_count, self.total_dep_len, self.normalized_dep_len,
            self.max_dep_dist, self.avg_dep_dist,
        ], dtype=np.float64)


# ------------------------------------------------------------- bracketed trees

def _tokenize(text):
    out = []
    cur = []
    for ch in text:
        if ch in "()":
            if cur:
                out.append("".join(cur))
                cur = []
            out.append(ch)
        elif ch.isspace():
            if cur:
                out.append("".join(cur))
                cur = []
        else:
            cur.append(ch)
    if cur:
        out.append("".join(cur))
    return out


def parse_bracketed_tree(text: str) -> ConstituencyTree:
    """Parse one ``(LABEL child ...)`` expression.

    A parenthesized node is either a preterminal ``(LABEL token)`` or
    an inner node whose children are themselves parenthesized. Raises
    UnbalancedParens, EmptyTree, or BareToken on malformed input.
    """
    toks = _tokenize(text)
    if not toks:
        raise EmptyTree("no content")
    depth = 0
    for t in toks:
        if t == "(":
            depth += 1
        elif t == ")":
            depth -= 1
            if depth < 0:
                raise UnbalancedParens("closing paren without a match")
    if depth != 0:
        raise UnbalancedParens(f"{depth} parens never closed")
    tree, pos = _parse_node(toks, 0)
    if pos != len(toks):
        raise UnbalancedParens(f"trailing content after the root at token {pos}")
    return tree


def _parse_node(toks, pos):
    if toks[pos] != "(":
        raise BareToken(f"token {toks[pos]!r} outside any label")
    pos += 1
    if pos >= len(toks):
        raise UnbalancedParens("input ends inside a node")
    if toks[pos] == ")":
        raise EmptyTree("node with no label")
    if toks[pos] == "(":
        raise BareToken("node without a label before its children")
    label = toks[pos]
    pos += 1

    children = []
    atoms = []
    while True:
        if pos >= len(toks):
            raise UnbalancedParens(f"node {label!r} is never closed")
        t = toks[pos]
        if t == ")":
            pos += 1
            break
        if t == "(":
            child, pos = _parse_node(toks, pos)
            children.append(child)
        else:
            atoms.append(t)
            pos += 1

    if children and atoms:
        raise BareToken(f"node {label!r} mixes tokens and subtrees")
    if len(atoms) > 1:
        raise BareToken(f"node {label!r} holds {len(atoms)} bare tokens")
    if atoms:
        return ConstituencyTree(label=label, token=atoms[0]), pos
    if not children:
        raise EmptyTree(f"node {label!r} has no children")
    return ConstituencyTree(label=label, children=tuple(children)), pos


def serialize_tree(tree: ConstituencyTree) -> str:
    """Canonical single-space form; parse . serialize is idempotent."""
    if tree.token is not None:
        return f"({tree.label} {tree.token})"
    inner = " ".join(serialize_tree(c) for c in tree.children)
    return f"({tree.label} {inner})"


def subtree_count(tree: ConstituencyTree) -> int:
    """Number of labeled nodes, preterminals and root included.

    Every labeled node governs at least one smaller unit (a token for
    preterminals, subtrees otherwise), so this equals total node count
    minus leaf count.
    """
    if tree.token is not None:
        return 1
    return 1 + sum(subtree_count(c) for c in tree.children)


def tree_leaves(tree: ConstituencyTree) -> list:
    if tree.token is not None:
        return [tree.token]
    out = []
    for c in tree.children:
        out.extend(tree_leaves(c))
    return out


# ----------------------------------------------------------- dependency trees

def parse_conllu(text: str) -> list:
    """Parse ten-column dependency blocks separated by blank lines.

    Comment lines start with ``#``; ``# passage_id = x`` and
    ``# sentence_id = y`` bind a block to the sentence manifest.
    Multiword-range lines (id ``a-b``) and decimal-id empty nodes are
    skipped. Head indices are validated for range and acyclicity.
    """
    sentences = []
    block = []
    meta = {}
    for raw in text.splitlines():
        line = raw.rstrip("\n")
        if not line.strip():
            if block:
                sentences.append(_finish_block(block, meta))
                block, meta = [], {}
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            continue
        block.append(line)
    if block:
        sentences.append(_finish_block(block, meta))
    return sentences


def _finish_block(lines, meta):
    tokens = []
    for line in lines:
        cols = line.split("\t")
        if len(cols) != 10:
            raise MalformedLine(f"{len(cols)} columns in line {line!r}")
        ident = cols[ID]
        if "-" in ident or "." in ident:
            continue  # multiword range or empty node
        try:
            index = int(ident)
        except ValueError:
            raise MalformedLine(f"non-integer id {ident!r}") from None
        try:
            head = int(cols[HEAD])
        except ValueError:
            raise MalformedLine(f"non-integer head {cols[HEAD]!r}") from None
        if head < 0:
            raise MalformedLine(f"negative head {head}")
        tokens.append(DepToken(index=index, form=cols[FORM], head=head,
                               deprel=cols[DEPREL]))

    if not tokens:
        raise MalformedLine("block contains no token lines")
    n = len(tokens)
    if [t.index for t in tokens] != list(range(1, n + 1)):
        raise MalformedLine("token indices are not contiguous from 1")
    for t in tokens:
        if t.head > n:
            raise HeadOutOfRange(f"token {t.index} has head {t.head} > {n}")
    _check_acyclic(tokens)
    return DependencySentence(
        tokens=tuple(tokens),
        passage_id=meta.get("passage_id"),
        sentence_id=meta.get("sentence_id"),
    )


def _check_acyclic(tokens):
    heads = {t.index: t.head for t in tokens}
    # walk each parent chain; revisiting a node inside one walk is a cycle
    state = {i: 0 for i in heads}  # 0 new, 1 on current path, 2 done
    for start in heads:
        if state[start]:
            continue
        path = []
        node = start
        while node != 0 and state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node]
        if node != 0 and state[node] == 1:
            raise CyclicHeads(f"head cycle through token {node}")
        for p in path:
            state[p] = 2


def dependency_metrics(sent: DependencySentence, exclude_punct: bool = False):
    """Distance statistics over non-root arcs.

    Each token with head != 0 contributes |index - head|. Returns
    (total, normalized, maximum, average) where normalized divides by
    the token count and max/avg are 0 for sentences without arcs.
    With exclude_punct, tokens whose relation is ``punct`` neither
    contribute arcs nor count toward the normalization.
    """
    tokens = sent.tokens
    if exclude_punct:
        tokens = tuple(t for t in tokens if t.deprel != "punct")
    n_tokens = len(tokens)
    dists = [abs(t.index - t.head) for t in tokens if t.head != 0]
    total = int(sum(dists))
    normalized = total / n_tokens if n_tokens else 0.0
    max_d = int(max(dists)) if dists else 0
    avg = total / len(dists) if dists else 0.0
    return total, normalized, max_d, avg


def sentence_features(tree: ConstituencyTree, sent: DependencySentence,
                      exclude_punct: bool = False) -> NlpFeatures:
    """Combine both views into the five-feature vector.

    A disagreement between the two views' token counts is reported as
    a TokenCountMismatch warning; features are still computed, each
    from its own view.
    """
    n_leaves = len(tree_leaves(tree))
    if n_leaves != len(sent.tokens):
        warnings.warn(
            f"constituency has {n_leaves} tokens, dependency has "
            f"{len(sent.tokens)} ({sent.passage_id}/{sent.sentence_id})",
            TokenCountMismatch,
            stacklevel=2,
        )
    total, normalized, max_d, avg = dependency_metrics(sent, exclude_punct)
    return NlpFeatures(
        subtree_count=subtree_count(tree),
        total_dep_len=total,
        normalized_dep_len=normalized,
        max_dep_dist=max_d,
        avg_dep_dist=avg,
    )


# ------------------------------------------------------------------ file I/O

def read_tree_file(path) -> dict:
    """Read ``passage<TAB>sentence<TAB>(tree)`` lines into a keyed dict."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        if len(parts) != 3:
            raise MalformedLine(f"line {lineno}: expected 3 tab-separated fields")
        key = (parts[0], parts[1])
        if key in out:
            raise DuplicateKey(f"tree file repeats {key}")
        out[key] = parse_bracketed_tree(parts[2])
    return out


def read_conllu_file(path) -> dict:
    """Read a dependency file into a dict keyed by (passage, sentence)."""
    out = {}
    for sent in parse_conllu(Path(path).read_text()):
        if sent.passage_id is None or sent.sentence_id is None:
            raise MalformedLine("dependency block lacks passage_id/sentence_id")
        key = (sent.passage_id, sent.sentence_id)
        if key in out:
            raise DuplicateKey(f"dependency file repeats {key}")
        out[key] = sent
    return out
