"""NP/VP chunking over one text segment, as character-offset spans.

The pipeline per segment: whitespace word segmentation, part-of-speech
tagging, then one regular-expression scan over the tag sequence. Chunk rules
(this is the whole grammar, versioned as CHUNKER_VERSION):

    NP := (DET|NUM)? (ADV* (ADJ|NUM))* NOUN+
        | PRON
    VP := (AUX|ADV|PART)* VERB+ ((PART|ADV)+ VERB+)* (PART|ADV)*
        | AUX+ (PART|ADV)*                            (bare copula)

The scan is left-to-right and non-overlapping, NP preferred when both rules
match at the same position. A verb group therefore keeps its auxiliaries,
negation, and infinitival "to" attached ("could not reach", "tried to
please"), prepositions and conjunctions chunk nothing, and a predicate
adjective is left bare. Tokens without a letter or digit (a lone "|", an em
dash) are segmentation blockers: no chunk crosses them and they are not
word spans themselves.

All offsets are Unicode scalar positions into the segment (Python string
indices), half-open. Bump CHUNKER_VERSION if any rule above changes;
downstream manifests pin it.
"""

import re

from spanextract import tagger

CHUNKER_VERSION = "rulechunk/1.0"

# One char per tag so the chunk rules can be ordinary regexes.
_TAG_CHARS = {
    tagger.DET: "D", tagger.NUM: "M", tagger.ADJ: "J", tagger.NOUN: "N",
    tagger.PRON: "P", tagger.VERB: "V", tagger.AUX: "A", tagger.ADV: "R",
    tagger.PART: "T", tagger.ADP: "I", tagger.CONJ: "C", tagger.X: "X",
}

_CHUNK = re.compile(
    r"(?P<NP>[DM]?(?:R*[JM])*N+|P)"
    r"|(?P<VP>[ART]*V+(?:[TR]+V+)*[TR]*|A+[TR]*)"
)

_WORD = re.compile(r"\S+")


def word_ranges(text: str) -> list[tuple[int, int]]:
    """Half-open offsets of every maximal non-whitespace run."""
    return [(m.start(), m.end()) for m in _WORD.finditer(text)]


def merge_overlaps(spans: list[tuple]) -> list[tuple]:
    """Sort spans and merge any that overlap; the earlier span keeps its
    extra fields (the label, for phrases). Adjacent spans stay separate."""
    merged: list[tuple] = []
    for span in sorted(spans, key=lambda sp: (sp[0], sp[1])):
        if merged and span[0] < merged[-1][1]:
            prev = merged[-1]
            merged[-1] = (prev[0], max(prev[1], span[1])) + prev[2:]
        else:
            merged.append(span)
    return merged


def chunk_segment(text: str, base: int = 0) -> tuple[list[tuple[int, int]], list[tuple[int, int, str]]]:
    """Chunk one segment into (words, phrases), offsets shifted by `base`.

    Words are the whitespace tokens that contain at least one letter or
    digit; phrases are (start, end, "NP"|"VP") character spans covering
    whole words. Both lists come back sorted and non-overlapping.
    """
    ranges = word_ranges(text)
    tokens = [text[s:e] for s, e in ranges]
    tags = tagger.tag_words(tokens)
    tagstr = "".join(_TAG_CHARS[t] for t in tags)

    words = [
        (s + base, e + base) for (s, e), tag in zip(ranges, tags) if tag != tagger.X
    ]
    phrases = []
    for m in _CHUNK.finditer(tagstr):
        label = "NP" if m.group("NP") else "VP"
        start = ranges[m.start()][0] + base
        end = ranges[m.end() - 1][1] + base
        phrases.append((start, end, label))
    return merge_overlaps(words), merge_overlaps(phrases)


def annotate_text(text: str) -> tuple[list[tuple[int, int]], list[tuple[int, int, str]]]:
    """Chunk a standalone text (single segment, offsets from zero)."""
    return chunk_segment(text, base=0)
