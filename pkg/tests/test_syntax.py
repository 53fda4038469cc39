"""Constituency parsing, dependency reading, and the five features."""

import itertools

import numpy as np
import pytest

from eegnlp.errors import (
    BareToken,
    CyclicHeads,
    DuplicateKey,
    EmptyTree,
    HeadOutOfRange,
    MalformedLine,
    TokenCountMismatch,
    UnbalancedParens,
)
from eegnlp.syntax import (
    FEATURE_NAMES,
    dependency_metrics,
    parse_bracketed_tree,
    parse_conllu,
    read_conllu_file,
    read_tree_file,
    sentence_features,
    serialize_tree,
    subtree_count,
    tree_leaves,
)

from helpers import (
    conllu_block,
    oracle_dep_metrics,
    oracle_heads_valid,
    oracle_leaf_count,
    oracle_subtree_count,
    random_tree_text,
    random_valid_heads,
)

DOG = "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))"


class TestBracketedTrees:
    def test_worked_example_counts(self):
        tree = parse_bracketed_tree(DOG)
        # six labeled nodes: S, NP, DT, NN, VP, VBZ; three leaves
        assert subtree_count(tree) == 6
        assert tree_leaves(tree) == ["the", "dog", "barks"]

    def test_single_preterminal(self):
        assert subtree_count(parse_bracketed_tree("(NN dog)")) == 1

    def test_nested_chain(self):
        assert subtree_count(parse_bracketed_tree("(A (B (C x)))")) == 3

    def test_serialize_normalizes_whitespace(self):
        messy = "(S   (NP (DT the)\n      (NN dog))  (VP (VBZ barks)))"
        assert serialize_tree(parse_bracketed_tree(messy)) == DOG

    def test_round_trip_is_identity(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            text = random_tree_text(rng)
            tree = parse_bracketed_tree(text)
            again = parse_bracketed_tree(serialize_tree(tree))
            assert again == tree
            assert serialize_tree(again) == serialize_tree(tree)

    def test_counts_match_text_oracle_on_random_trees(self):
        rng = np.random.default_rng(22)
        for _ in range(200):
            text = random_tree_text(rng)
            tree = parse_bracketed_tree(text)
            assert subtree_count(tree) == oracle_subtree_count(text)
            assert len(tree_leaves(tree)) == oracle_leaf_count(text)
            # count equals total nodes minus leaves
            total = oracle_subtree_count(text) + oracle_leaf_count(text)
            assert subtree_count(tree) == total - len(tree_leaves(tree))

    @pytest.mark.parametrize("bad,exc", [
        ("", EmptyTree),
        ("   ", EmptyTree),
        ("()", EmptyTree),
        ("(S)", EmptyTree),
        ("((S x)", UnbalancedParens),
        ("(S (NP x)", UnbalancedParens),
        ("(S x))", UnbalancedParens),
        ("(S x) (S y)", UnbalancedParens),
        ("dog", BareToken),
        ("(S x y)", BareToken),
        ("(S (NP x) y)", BareToken),
        ("((S x))", BareToken),
    ])
    def test_malformed_inputs(self, bad, exc):
        with pytest.raises(exc):
            parse_bracketed_tree(bad)


class TestConllu:
    def test_block_parses_metadata_and_tokens(self):
        text = conllu_block([2, 0, 2], passage="pass7", sentence="s03")
        sent = parse_conllu(text)[0]
        assert sent.passage_id == "pass7"
        assert sent.sentence_id == "s03"
        assert [t.head for t in sent.tokens] == [2, 0, 2]

    def test_multiword_and_empty_nodes_skipped(self):
        lines = [
            "# passage_id = p",
            "# sentence_id = s",
            "1\tit\tit\tX\t_\t_\t2\tdep\t_\t_",
            "2-3\tdoesn't\t_\t_\t_\t_\t_\t_\t_\t_",
            "2\tdoes\tdo\tX\t_\t_\t0\troot\t_\t_",
            "3\tnot\tnot\tX\t_\t_\t2\tdep\t_\t_",
            "3.1\telided\t_\t_\t_\t_\t_\t_\t_\t_",
        ]
        sent = parse_conllu("\n".join(lines) + "\n")[0]
        assert [t.form for t in sent.tokens] == ["it", "does", "not"]

    def test_two_blocks_split_on_blank_line(self):
        text = conllu_block([0], sentence="s1") + "\n" + conllu_block([0], sentence="s2")
        sents = parse_conllu(text)
        assert [s.sentence_id for s in sents] == ["s1", "s2"]

    @pytest.mark.parametrize("line", [
        "1\tw\tw\tX\t_\t_\t0\troot\t_",          # nine columns
        "x\tw\tw\tX\t_\t_\t0\troot\t_\t_",       # non-integer id
        "1\tw\tw\tX\t_\t_\tz\troot\t_\t_",       # non-integer head
    ])
    def test_malformed_lines(self, line):
        with pytest.raises(MalformedLine):
            parse_conllu(f"# passage_id = p\n# sentence_id = s\n{line}\n")

    def test_non_contiguous_ids(self):
        lines = [
            "1\ta\ta\tX\t_\t_\t0\troot\t_\t_",
            "3\tb\tb\tX\t_\t_\t1\tdep\t_\t_",
        ]
        with pytest.raises(MalformedLine):
            parse_conllu("\n".join(lines) + "\n")

    def test_head_out_of_range(self):
        with pytest.raises(HeadOutOfRange):
            parse_conllu(conllu_block([7, 0]))

    @pytest.mark.parametrize("heads", [
        [2, 3, 1],   # three-cycle
        [2, 1],      # two-cycle, no root
        [0, 2],      # self-loop beside a valid root
    ])
    def test_cycles_rejected(self, heads):
        with pytest.raises(CyclicHeads):
            parse_conllu(conllu_block(heads))


class TestDependencyMetrics:
    def test_worked_example_one(self):
        sent = parse_conllu(conllu_block([2, 0, 2]))[0]
        total, norm, max_d, avg = dependency_metrics(sent)
        assert (total, max_d) == (2, 1)
        assert norm == pytest.approx(2 / 3)
        assert avg == pytest.approx(1.0)

    def test_worked_example_two(self):
        sent = parse_conllu(conllu_block([0, 1, 1]))[0]
        total, norm, max_d, avg = dependency_metrics(sent)
        assert (total, max_d) == (3, 2)
        assert norm == pytest.approx(1.0)
        assert avg == pytest.approx(1.5)

    def test_single_token_sentence_has_zero_stats(self):
        sent = parse_conllu(conllu_block([0]))[0]
        assert dependency_metrics(sent) == (0, 0.0, 0, 0.0)

    def test_random_sentences_match_brute_force(self):
        rng = np.random.default_rng(23)
        for _ in range(300):
            n = int(rng.integers(1, 12))
            heads = random_valid_heads(rng, n)
            sent = parse_conllu(conllu_block(heads))[0]
            got = dependency_metrics(sent)
            want = oracle_dep_metrics(heads)
            assert got[0] == want[0]
            assert got[1] == pytest.approx(want[1])
            assert got[2] == want[2]
            assert got[3] == pytest.approx(want[3])

    def test_exhaustive_small_sentences(self):
        # every head vector over n <= 4 either parses and matches the
        # brute-force metrics, or is rejected for the right reason
        for n in range(1, 5):
            for heads in itertools.product(range(n + 1), repeat=n):
                heads = list(heads)
                if oracle_heads_valid(heads):
                    sent = parse_conllu(conllu_block(heads))[0]
                    got = dependency_metrics(sent)
                    want = oracle_dep_metrics(heads)
                    assert got[0] == want[0] and got[2] == want[2]
                    assert got[1] == pytest.approx(want[1])
                    assert got[3] == pytest.approx(want[3])
                else:
                    with pytest.raises(CyclicHeads):
                        parse_conllu(conllu_block(heads))

    def test_punctuation_exclusion(self):
        heads = [2, 0, 2, 2]
        deprels = ["dep", "root", "dep", "punct"]
        sent = parse_conllu(conllu_block(heads, deprels=deprels))[0]
        with_punct = dependency_metrics(sent)
        without = dependency_metrics(sent, exclude_punct=True)
        assert with_punct[0] == 4          # 1 + 1 + 2
        assert without[0] == 2             # punct arc dropped
        assert without[1] == pytest.approx(2 / 3)


class TestSentenceFeatures:
    def test_vector_layout(self):
        tree = parse_bracketed_tree(DOG)
        sent = parse_conllu(conllu_block([2, 0, 2]))[0]
        feats = sentence_features(tree, sent)
        assert FEATURE_NAMES == [
            "subtree_count", "total_dep_len", "normalized_dep_len",
            "max_dep_dist", "avg_dep_dist",
        ]
        np.testing.assert_allclose(
            feats.vector(), [6.0, 2.0, 2 / 3, 1.0, 1.0])

    def test_token_count_mismatch_warns_but_returns(self):
        tree = parse_bracketed_tree("(S (NN dog))")
        sent = parse_conllu(conllu_block([2, 0, 2]))[0]
        with pytest.warns(TokenCountMismatch):
            feats = sentence_features(tree, sent)
        assert feats.subtree_count == 2
        assert feats.total_dep_len == 2

    def test_matching_counts_do_not_warn(self):
        tree = parse_bracketed_tree(DOG)
        sent = parse_conllu(conllu_block([2, 0, 2]))[0]
        import warnings as w
        with w.catch_warnings():
            w.simplefilter("error")
            sentence_features(tree, sent)


class TestFileReaders:
    def test_tree_file_round_trip(self, tmp_path):
        f = tmp_path / "trees.txt"
        f.write_text(f"p1\ts1\t{DOG}\np1\ts2\t(NN dog)\n")
        trees = read_tree_file(f)
        assert set(trees) == {("p1", "s1"), ("p1", "s2")}
        assert subtree_count(trees[("p1", "s1")]) == 6

    def test_tree_file_duplicate_key(self, tmp_path):
        f = tmp_path / "trees.txt"
        f.write_text("p1\ts1\t(NN a)\np1\ts1\t(NN b)\n")
        with pytest.raises(DuplicateKey):
            read_tree_file(f)

    def test_conllu_file_requires_binding(self, tmp_path):
        f = tmp_path / "deps.conllu"
        f.write_text("1\tw\tw\tX\t_\t_\t0\troot\t_\t_\n")
        with pytest.raises(MalformedLine):
            read_conllu_file(f)

    def test_conllu_file_keys(self, tmp_path):
        f = tmp_path / "deps.conllu"
        f.write_text(conllu_block([0, 1], passage="p2", sentence="s9"))
        sents = read_conllu_file(f)
        assert list(sents) == [("p2", "s9")]
