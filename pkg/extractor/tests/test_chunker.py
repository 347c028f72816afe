"""Chunk-rule tests: NP/VP shapes, blockers, offsets, and overlap merging."""

from spanextract.chunker import annotate_text, chunk_segment, merge_overlaps, word_ranges


def phrase_texts(text, phrases):
    return [(text[s:e], lab) for s, e, lab in phrases]


class TestWordRanges:
    def test_basic(self):
        assert word_ranges("the cat sat") == [(0, 3), (4, 7), (8, 11)]

    def test_leading_trailing_and_multiple_spaces(self):
        assert word_ranges("  a  b ") == [(2, 3), (5, 6)]

    def test_empty(self):
        assert word_ranges("") == []
        assert word_ranges("   ") == []

    def test_offsets_are_unicode_scalars(self):
        # "é" and "🦊" are single scalar values regardless of their UTF-8 width
        assert word_ranges("café 🦊 ran") == [(0, 4), (5, 6), (7, 10)]


class TestNounPhrases:
    def test_det_adj_noun(self):
        _, phrases = annotate_text("the slow tortoise")
        assert phrase_texts("the slow tortoise", phrases) == [("the slow tortoise", "NP")]

    def test_adverb_modified_adjective(self):
        text = "too many times"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [("too many times", "NP")]

    def test_pronoun_stands_alone(self):
        text = "he wanted the cheese for himself"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [
            ("he", "NP"), ("wanted", "VP"), ("the cheese", "NP"), ("himself", "NP"),
        ]

    def test_numeral_prefix(self):
        text = "the two red cats"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [("the two red cats", "NP")]

    def test_preposition_splits_noun_phrases(self):
        text = "a piece of cheese"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [("a piece", "NP"), ("cheese", "NP")]

    def test_no_verb_means_empty_vp_list(self):
        words, phrases = annotate_text("the red fox")
        assert words == [(0, 3), (4, 7), (8, 11)]
        assert phrases == [(0, 11, "NP")]


class TestVerbPhrases:
    def test_auxiliary_chain(self):
        text = "could move the traveler"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [("could move", "VP"), ("the traveler", "NP")]

    def test_negation_stays_inside(self):
        text = "he could not reach them"
        _, phrases = annotate_text(text)
        assert ("could not reach", "VP") in phrase_texts(text, phrases)

    def test_infinitival_chain(self):
        text = "tried to please every stranger"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [
            ("tried to please", "VP"), ("every stranger", "NP"),
        ]

    def test_bare_copula(self):
        text = "the race was long"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [("the race", "NP"), ("was", "VP")]

    def test_adverb_before_verb(self):
        text = "never won the race"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [("never won", "VP"), ("the race", "NP")]

    def test_prepositional_object_not_absorbed(self):
        text = "walked among the flock"
        _, phrases = annotate_text(text)
        assert phrase_texts(text, phrases) == [("walked", "VP"), ("the flock", "NP")]


class TestBlockersAndEdges:
    def test_empty_string(self):
        assert annotate_text("") == ([], [])

    def test_whitespace_only(self):
        assert annotate_text("   ") == ([], [])

    def test_punctuation_token_blocks_and_is_not_a_word(self):
        text = "the cat | sat"
        words, phrases = annotate_text(text)
        assert words == [(0, 3), (4, 7), (10, 13)]
        assert phrases == [(0, 7, "NP"), (10, 13, "VP")]

    def test_symbol_word_excluded_but_letters_kept(self):
        words, _ = annotate_text("🦊 ran")
        assert words == [(2, 5)]

    def test_base_offset_shifts_everything(self):
        words, phrases = chunk_segment("the cat sat", base=100)
        assert words == [(100, 103), (104, 107), (108, 111)]
        assert phrases == [(100, 107, "NP"), (108, 111, "VP")]

    def test_grammar_sentence_matches_generator_convention(self):
        text = "the red cat sat on a box"
        words, phrases = annotate_text(text)
        assert words == word_ranges(text)
        assert phrase_texts(text, phrases) == [
            ("the red cat", "NP"), ("sat", "VP"), ("a box", "NP"),
        ]


class TestMergeOverlaps:
    def test_disjoint_pass_through(self):
        spans = [(0, 3), (4, 7)]
        assert merge_overlaps(spans) == spans

    def test_adjacent_stay_separate(self):
        assert merge_overlaps([(0, 3), (3, 5)]) == [(0, 3), (3, 5)]

    def test_overlapping_merge(self):
        assert merge_overlaps([(0, 5), (3, 8)]) == [(0, 8)]

    def test_unsorted_input_is_sorted(self):
        assert merge_overlaps([(4, 7), (0, 3)]) == [(0, 3), (4, 7)]

    def test_label_of_first_span_wins(self):
        assert merge_overlaps([(0, 5, "NP"), (3, 8, "VP")]) == [(0, 8, "NP")]

    def test_containment(self):
        assert merge_overlaps([(0, 10, "NP"), (2, 4, "VP")]) == [(0, 10, "NP")]
