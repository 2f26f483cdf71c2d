from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from newslens.entities import (
    AnchorTable,
    build_anchor_table,
    build_anchor_table_from_counts,
    detect_mentions,
    link_mention,
    load_anchor_table,
    load_catalog,
    read_anchor_tsv,
    save_anchor_table,
    save_catalog,
    top_k_entities,
)
from newslens.synthetic import SyntheticSpec, generate_corpus

from conftest import handle_from_records

# Gazetteer for the golden linking set. Counts are chosen so every argmax
# decision below is hand-checkable.
GOLDEN_ROWS = [
    ("4chan", "4chan", 4),
    ("Apple", "Apple Inc.", 6),
    ("Apple", "Apple (fruit)", 2),
    ("Berlin", "Berlin", 5),
    ("Brussels", "Brussels", 4),
    ("Capitol", "United States Capitol", 5),
    ("Congress", "United States Congress", 9),
    ("East River", "East River", 3),
    ("George Washington", "George Washington", 10),
    ("Jaguar", "Jaguar Cars", 3),
    ("Jaguar", "Jaguar", 1),
    ("Mercury", "Mercury (element)", 4),
    ("Mercury", "Mercury (planet)", 4),
    ("Mount Rainier", "Mount Rainier", 4),
    ("New York", "New York City", 9),
    ("New York", "New York (state)", 6),
    ("New York City", "New York City", 11),
    ("Paris", "Paris", 9),
    ("Paris", "Paris, Texas", 1),
    ("Potomac", "Potomac River", 3),
    ("Senate", "United States Senate", 8),
    ("Senate", "Senate of Canada", 2),
    ("Turkey", "Turkey", 6),
    ("Turkey", "Turkey (bird)", 3),
    ("United States", "United States", 50),
    ("United States Senate", "United States Senate", 12),
    ("Washington", "George Washington", 5),
    ("Washington", "Washington (state)", 3),
    ("White House", "White House", 8),
    ("the Fed", "Federal Reserve", 5),
]

# 50 hand-annotated sentences: expected (surface, resolved title) in order.
GOLDEN_SENTENCES = [
    ("The United States Senate voted on the bill.",
     [("United States Senate", "United States Senate")]),
    ("Apple unveiled a new phone on Tuesday.", [("Apple", "Apple Inc.")]),
    ("He ate an apple for lunch.", []),
    ("Jaguar unveiled a sleek coupe at the show.", [("Jaguar", "Jaguar Cars")]),
    ("Mercury levels rose in the bay.", [("Mercury", "Mercury (element)")]),
    ("George Washington crossed the Delaware at night.",
     [("George Washington", "George Washington")]),
    ("Washington signed the treaty reluctantly.", [("Washington", "George Washington")]),
    ("New York City raised parking fines.", [("New York City", "New York City")]),
    ("New York passed a new budget.", [("New York", "New York City")]),
    ("Paris hosted the climate summit.", [("Paris", "Paris")]),
    ("Turkey signed the accord with Berlin.",
     [("Turkey", "Turkey"), ("Berlin", "Berlin")]),
    ("The Senate adjourned early.", [("Senate", "United States Senate")]),
    ("Congress passed the measure at midnight.",
     [("Congress", "United States Congress")]),
    ("Protesters gathered near the Capitol.", [("Capitol", "United States Capitol")]),
    ("The White House issued a statement.", [("White House", "White House")]),
    ("4chan users flooded the online poll.", [("4chan", "4chan")]),
    ("Smoke drifted over Mount Rainier.", [("Mount Rainier", "Mount Rainier")]),
    ("Ships anchored in the East River.", [("East River", "East River")]),
    ("They drove along the Potomac at dawn.", [("Potomac", "Potomac River")]),
    ("Brussels summoned the envoy.", [("Brussels", "Brussels")]),
    ("the Fed raised rates again.", []),
    ('"Apple," she said, "is late again."', [("Apple", "Apple Inc.")]),
    ("Berlin, Paris, and Brussels agreed.",
     [("Berlin", "Berlin"), ("Paris", "Paris"), ("Brussels", "Brussels")]),
    ("The United States and Turkey negotiated for weeks.",
     [("United States", "United States"), ("Turkey", "Turkey")]),
    ("United States Senate leaders met Paris officials.",
     [("United States Senate", "United States Senate"), ("Paris", "Paris")]),
    ("NEW YORK shut its subway.", [("NEW YORK", "New York City")]),
    ("He visited Paris, Texas last summer.", [("Paris", "Paris")]),
    ("Nothing notable happened today.", []),
    ("The delegation reached Berlin.", [("Berlin", "Berlin")]),
    ("Turkey farmers reported losses.", [("Turkey", "Turkey")]),
    ("Reporters toured the White House and the Capitol.",
     [("White House", "White House"), ("Capitol", "United States Capitol")]),
    ("Mercury and Jaguar both saw sales dip.",
     [("Mercury", "Mercury (element)"), ("Jaguar", "Jaguar Cars")]),
    ("George Washington never visited Paris.",
     [("George Washington", "George Washington"), ("Paris", "Paris")]),
    ("The United States Senate and the White House clashed.",
     [("United States Senate", "United States Senate"),
      ("White House", "White House")]),
    ("Is Congress listening?", [("Congress", "United States Congress")]),
    ("Senate? Not before the recess.", [("Senate", "United States Senate")]),
    ("A jaguar prowled the ruins.", []),
    ("Economists praised Brussels and Berlin alike.",
     [("Brussels", "Brussels"), ("Berlin", "Berlin")]),
    ("Washington and New York disagree on the tax.",
     [("Washington", "George Washington"), ("New York", "New York City")]),
    ("Congress, the Senate, and the White House all balked.",
     [("Congress", "United States Congress"), ("Senate", "United States Senate"),
      ("White House", "White House")]),
    ("(Apple) topped the index.", [("Apple", "Apple Inc.")]),
    ("They hiked Mount Rainier before the storm closed in.",
     [("Mount Rainier", "Mount Rainier")]),
    ("The United States reopened talks with the United States Senate observers.",
     [("United States", "United States"),
      ("United States Senate", "United States Senate")]),
    ("Paris! What a week.", [("Paris", "Paris")]),
    ("4chan and Apple rarely share headlines.",
     [("4chan", "4chan"), ("Apple", "Apple Inc.")]),
    ("The east river path was closed.", []),
    ("Maps showed the Potomac and the East River.",
     [("Potomac", "Potomac River"), ("East River", "East River")]),
    ("Turkey, Berlin, and the White House issued one statement.",
     [("Turkey", "Turkey"), ("Berlin", "Berlin"), ("White House", "White House")]),
    ("New York City and New York split the cost.",
     [("New York City", "New York City"), ("New York", "New York City")]),
    ("Voters asked whether Washington, George Washington, or Congress would act.",
     [("Washington", "George Washington"), ("George Washington", "George Washington"),
      ("Congress", "United States Congress")]),
]


@pytest.fixture(scope="module")
def golden_table() -> AnchorTable:
    return build_anchor_table_from_counts(GOLDEN_ROWS, prune_total=2)


class TestBuildTable:
    def test_direct_counting(self):
        triples = [("A", "jaguar", "Jaguar Cars")] * 3 + [("B", "jaguar", "Jaguar")]
        table = build_anchor_table(triples, prune_total=1)
        assert table.entries["jaguar"] == {"Jaguar": 1, "Jaguar Cars": 3}
        assert table.totals["jaguar"] == 4

    def test_empty_stream(self):
        assert len(build_anchor_table([])) == 0

    def test_group_by_oracle_on_1000_triples(self):
        # Independent oracle: plain Counter group-by over the same rows.
        import random

        rng = random.Random(4)
        anchors = ["Alpha", "Beta", "Gamma", "Delta"]
        titles = ["T1", "T2", "T3"]
        triples = [
            (f"page{i}", rng.choice(anchors), rng.choice(titles)) for i in range(1000)
        ]
        oracle = Counter((a, t) for _, a, t in triples)
        table = build_anchor_table(triples, prune_total=1)
        for (anchor, title), count in oracle.items():
            assert table.entries[anchor][title] == count
        assert sum(table.totals.values()) == 1000

    def test_malformed_triples_skipped_and_counted(self):
        triples = [("p", "Good", "T"), ("p", "", "T"), ("bad",), ("p", "Good", "T")]
        table = build_anchor_table(triples, prune_total=1)
        assert table.skipped == 2
        assert table.entries["Good"]["T"] == 2

    def test_pruning_threshold(self):
        rows = [("Rare", "T", 1), ("Common", "T", 2)]
        table = build_anchor_table_from_counts(rows, prune_total=2)
        assert "Common" in table.entries
        assert "Rare" not in table.entries


class TestLinkMention:
    def test_strict_majority(self, golden_table):
        assert link_mention("Jaguar", golden_table) == "Jaguar Cars"

    def test_unseen_mention(self, golden_table):
        assert link_mention("zzz", golden_table) is None

    def test_lexicographic_tie_break(self, golden_table):
        # Mercury counts are 4 and 4; enumerate both orders to pin determinism.
        assert link_mention("Mercury", golden_table) == "Mercury (element)"
        flipped = build_anchor_table_from_counts(
            [("Mercury", "Mercury (planet)", 4), ("Mercury", "Mercury (element)", 4)],
            prune_total=1,
        )
        assert link_mention("Mercury", flipped) == "Mercury (element)"

    def test_case_fold_on_remainder_only(self, golden_table):
        assert link_mention("JAGUAR", golden_table) == "Jaguar Cars"
        assert link_mention("jaguar", golden_table) is None

    @given(st.integers(min_value=1, max_value=1000))
    def test_argmax_scale_invariance(self, scale):
        base = [("M", "A", 3), ("M", "B", 5), ("N", "C", 2), ("N", "D", 2)]
        t1 = build_anchor_table_from_counts(base, prune_total=1)
        t2 = build_anchor_table_from_counts(
            [(m, t, c * scale) for m, t, c in base], prune_total=1
        )
        for mention in ("M", "N"):
            assert link_mention(mention, t1) == link_mention(mention, t2)


class TestDetectMentions:
    def test_leftmost_longest(self, golden_table):
        got = detect_mentions("The United States Senate voted.", golden_table)
        assert [(m.surface, m.entity) for m in got] == [
            ("United States Senate", "United States Senate")
        ]

    def test_no_hits(self, golden_table):
        assert detect_mentions("nothing to see here", golden_table) == []

    def test_spans_match_surfaces_and_do_not_overlap(self, golden_table):
        sent = "Turkey, Berlin, and the White House issued one statement."
        got = detect_mentions(sent, golden_table)
        prev_end = -1
        for m in got:
            start, end = m.span
            assert sent[start:end] == m.surface
            assert start >= prev_end
            prev_end = end

    def test_golden_fifty_sentences(self, golden_table):
        # Acceptance criterion: 100% agreement with the hand annotations.
        assert len(GOLDEN_SENTENCES) == 50
        for sentence, expected in GOLDEN_SENTENCES:
            got = [(m.surface, m.entity) for m in detect_mentions(sentence, golden_table)]
            assert got == expected, f"sentence: {sentence!r}"

    def test_scaling_counts_by_seven_changes_nothing(self, golden_table):
        scaled = build_anchor_table_from_counts(
            [(a, t, c * 7) for a, t, c in GOLDEN_ROWS], prune_total=2
        )
        for sentence, _ in GOLDEN_SENTENCES:
            a = [(m.surface, m.entity) for m in detect_mentions(sentence, golden_table)]
            b = [(m.surface, m.entity) for m in detect_mentions(sentence, scaled)]
            assert a == b


class TestTopK:
    def make_corpus(self):
        records = [
            {"id": "a1", "source": "s1", "date": "2020-01-01", "title": "",
             "content": "Paris met Berlin. Paris slept. Berlin froze over."},
            {"id": "a2", "source": "s2", "date": "2020-01-02", "title": "",
             "content": "Paris won again. Turkey watched. Paris. Paris waits."},
        ]
        return handle_from_records(records)

    def test_most_frequent_first(self, golden_table):
        catalog = top_k_entities(self.make_corpus(), golden_table, k=1)
        assert catalog.entries == (("Paris", 5),)

    def test_k_saturation(self, golden_table):
        catalog = top_k_entities(self.make_corpus(), golden_table, k=99)
        assert [t for t, _ in catalog.entries] == ["Paris", "Berlin", "Turkey"]

    def test_rejects_nonpositive_k(self, golden_table):
        with pytest.raises(ValueError):
            top_k_entities(self.make_corpus(), golden_table, k=0)

    def test_matches_independent_recount(self, golden_table):
        # Brute-force oracle over the synthetic corpus' known per-sentence pairs.
        corpus = generate_corpus(SyntheticSpec(
            n_left=2, n_right=2, n_center=1, n_pairs=8, n_planted=2, seed=31))
        handle = handle_from_records(corpus.articles)
        table = build_anchor_table_from_counts(corpus.anchor_rows)
        expected = Counter()
        for (source, pair), n in corpus.expected_counts.items():
            expected[pair.first] += n
            expected[pair.second] += n
        catalog = top_k_entities(handle, table, k=10)
        got = dict(catalog.entries)
        ranked = sorted(expected.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
        assert got == dict(ranked)

    def test_stable_across_reruns(self, golden_table):
        handle = self.make_corpus()
        assert (
            top_k_entities(handle, golden_table, k=5).entries
            == top_k_entities(handle, golden_table, k=5).entries
        )


class TestPersistence:
    def test_tsv_round_trip_byte_identical(self, golden_table, tmp_path):
        p1 = tmp_path / "anchors.tsv"
        save_anchor_table(golden_table, p1)
        reloaded = load_anchor_table(p1)
        assert reloaded.entries == golden_table.entries
        p2 = tmp_path / "again.tsv"
        save_anchor_table(reloaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_tsv_format_autodetect(self, tmp_path):
        agg = tmp_path / "agg.tsv"
        agg.write_text("Paris\tParis\t3\nBerlin\tBerlin\t2\n", encoding="utf-8")
        raw = tmp_path / "raw.tsv"
        raw.write_text("page1\tParis\tParis\npage2\tParis\tParis\n", encoding="utf-8")
        t_agg = read_anchor_tsv(agg, prune_total=1)
        t_raw = read_anchor_tsv(raw, prune_total=1)
        assert t_agg.entries["Paris"]["Paris"] == 3
        assert t_raw.entries["Paris"]["Paris"] == 2

    def test_catalog_round_trip(self, golden_table, tmp_path):
        catalog = top_k_entities(
            handle_from_records(
                [{"id": "a", "source": "s", "date": "2020-01-01", "title": "",
                  "content": "Paris met Berlin."}]
            ),
            golden_table,
            k=5,
        )
        path = tmp_path / "entities.csv"
        save_catalog(catalog, path)
        assert load_catalog(path).entries == catalog.entries
        assert path.read_text(encoding="utf-8").startswith("# schema=")
