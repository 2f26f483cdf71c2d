from hypothesis import given
from hypothesis import strategies as st

from newslens.segment import split_sentences, split_spans


class TestBoundaries:
    def test_three_terminators(self):
        got = split_sentences("Alpha runs. Beta hides? Gamma wins!")
        assert got == ["Alpha runs.", "Beta hides?", "Gamma wins!"]

    def test_abbreviation_guard(self):
        assert split_sentences("The U.S. Senate voted.") == ["The U.S. Senate voted."]

    def test_title_abbreviation(self):
        got = split_sentences("Mr. Smith arrived. He sat down.")
        assert got == ["Mr. Smith arrived.", "He sat down."]

    def test_single_initial(self):
        got = split_sentences("George W. Bush spoke. Applause followed.")
        assert got == ["George W. Bush spoke.", "Applause followed."]

    def test_empty_body(self):
        assert split_sentences("") == []
        assert split_sentences("   \t ") == []

    def test_no_split_before_lowercase(self):
        text = "The ruling came down. and the case was closed."
        assert split_sentences(text) == [text]

    def test_tail_without_terminator(self):
        got = split_sentences("First point. second half is one unit")
        assert got == ["First point. second half is one unit"]

    def test_multi_punctuation_run(self):
        got = split_sentences("Really?! Yes.")
        assert got == ["Really?!", "Yes."]


class TestReconstruction:
    @given(st.text(alphabet=st.sampled_from("Aa b.?! U.S.\nMr."), max_size=120))
    def test_spans_cover_with_whitespace_gaps(self, text):
        spans = split_spans(text)
        # spans ordered, non-overlapping, and everything outside them is whitespace
        prev_end = 0
        for start, end in spans:
            assert prev_end <= start < end <= len(text)
            assert text[prev_end:start].strip() == ""
            prev_end = end
        assert text[prev_end:].strip() == ""

    @given(st.text(max_size=200))
    def test_concatenation_reconstructs_content(self, text):
        pieces = split_sentences(text)
        squash = lambda s: "".join(s.split())
        assert squash("".join(pieces)) == squash(text)
