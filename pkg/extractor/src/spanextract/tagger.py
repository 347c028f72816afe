"""Deterministic part-of-speech tagging: lexicon first, then word shape.

The tagset is the coarse inventory the chunk rules need — DET, NUM, ADJ,
NOUN, PRON, VERB, AUX, ADV, PART, ADP, CONJ, X — nothing finer. Lookup is
case-insensitive on the word's core (leading/trailing punctuation stripped);
a core with no letters or digits tags X. Unknown words fall through shape
rules (digits, then a short suffix list) and default to NOUN, the usual
open-class guess. Three context repairs run after the initial pass:

  - "to"        -> PART before a verb or auxiliary, otherwise ADP
  - "his"/"her" -> DET before a noun, adjective, or numeral, otherwise PRON
  - VERB or AUX immediately after DET/ADJ/NUM -> NOUN ("the walks", "a will")

Known limits, pinned rather than patched: bare third-person verbs outside
the lexicon tag NOUN ("the hare runs" loses its VP), and noun/verb pairs
the corpus uses nominally (sleep, race, water) are simply not in the verb
list. A statistical tagger would trade those for nondeterminism; this one
keeps re-runs byte-identical.
"""

import re

DET = "DET"
NUM = "NUM"
ADJ = "ADJ"
NOUN = "NOUN"
PRON = "PRON"
VERB = "VERB"
AUX = "AUX"
ADV = "ADV"
PART = "PART"
ADP = "ADP"
CONJ = "CONJ"
X = "X"

_DETS = (
    "the a an this these those each every either neither some any no all both "
    "another his her its their my your our"
).split()
_PRONS = (
    "i you he she it we they me him us them myself yourself himself herself "
    "itself ourselves yourselves themselves who whom which what someone somebody "
    "something anyone anybody anything everyone everybody everything nobody "
    "nothing none mine yours hers ours theirs"
).split()
_AUXES = (
    "am is are was were be been being do does did have has had having will "
    "would shall should can could may might must"
).split()
_ADPS = (
    "about above across after against along among around at before behind below "
    "beneath beside besides between beyond by down during for from in inside "
    "into near of off on onto out outside over past per since through till to "
    "toward towards under underneath until unto up upon via with within without"
).split()
_CONJS = (
    "and but or nor so yet although though because while when whenever where "
    "wherever if unless that than as"
).split()
_ADVS = (
    "not very too quite rather almost also always never often soon again away "
    "still just then there here now today already perhaps maybe even only ever "
    "once twice"
).split()
_NUMS = (
    "one two three four five six seven eight nine ten eleven twelve twenty "
    "thirty forty fifty hundred thousand million"
).split()
_ADJS = (
    "red old tiny slow long small tall high golden greedy great thirsty safe "
    "real sour good bad big little new young free full hot cold happy sad many "
    "much more most few other same own such last first second third next early "
    "late hard fast strong weak rich poor deep wide busy easy heavy unseen"
).split()
# Irregular pasts, corpus base forms, and common base/3sg pairs; regular
# -ed/-ing forms come from the suffix rules instead.
_VERBS = (
    "run runs ran go goes went come comes came see sees saw make makes made "
    "take takes took give gives gave find finds found keep keeps kept let lets "
    "leave leaves left mean means meant meet meets met pay pays paid put puts "
    "read reads say says said sell sells sold send sends sent set sets sit sits "
    "sat speak speaks spoke stand stands stood tell tells told think thinks "
    "thought win wins won write writes wrote eat eats ate fall falls fell feel "
    "feels felt get gets got grow grows grew hear hears heard hide hides hid "
    "hold holds held know knows knew lay lays laid lead leads led rise rises "
    "rose wear wears wore wake wakes woke bring brings brought buy buys bought "
    "catch catches caught teach teaches taught move moves please reach reaches "
    "try tries walk walks laugh laughs sing sings sang cry cries call calls "
    "carry carries drop drops store stores spare spares want wants"
).split()
# -ing nouns the VERB suffix rule would otherwise claim.
_ING_NOUNS = "thing things king kings morning evening wing wings ring rings spring string".split()

LEXICON: dict[str, str] = {}
for _words, _tag in (
    (_DETS, DET), (_PRONS, PRON), (_AUXES, AUX), (_ADPS, ADP), (_CONJS, CONJ),
    (_ADVS, ADV), (_NUMS, NUM), (_ADJS, ADJ), (_VERBS, VERB), (_ING_NOUNS, NOUN),
):
    for _w in _words:
        LEXICON[_w] = _tag
LEXICON["not"] = PART  # joins verb groups: "could not reach"

_SUFFIXES = (  # (suffix, tag, minimum core length)
    ("ly", ADV, 4),
    ("ing", VERB, 5),
    ("ed", VERB, 4),
    ("ous", ADJ, 5),
    ("ful", ADJ, 5),
    ("ive", ADJ, 5),
    ("less", ADJ, 6),
    ("able", ADJ, 6),
    ("ible", ADJ, 6),
)

_DIGITS = re.compile(r"^\d+([.,]\d+)*$")


def word_core(word: str) -> str:
    """Lowercased word with leading/trailing non-alphanumerics stripped."""
    lo, hi = 0, len(word)
    while lo < hi and not word[lo].isalnum():
        lo += 1
    while hi > lo and not word[hi - 1].isalnum():
        hi -= 1
    return word[lo:hi].lower()


def _initial_tag(word: str) -> str:
    core = word_core(word)
    if not core:
        return X
    if _DIGITS.match(core):
        return NUM
    if core in LEXICON:
        return LEXICON[core]
    for suffix, tag, min_len in _SUFFIXES:
        if len(core) >= min_len and core.endswith(suffix):
            return tag
    return NOUN


def tag_words(words: list[str]) -> list[str]:
    """Tag a segment's words; repairs see initial tags on the right and
    repaired tags on the left, one deterministic left-to-right pass."""
    initial = [_initial_tag(w) for w in words]
    tags: list[str] = []
    for i, word in enumerate(words):
        tag = initial[i]
        core = word_core(word)
        nxt = initial[i + 1] if i + 1 < len(words) else None
        if core == "to":
            tag = PART if nxt in (VERB, AUX) else ADP
        elif core in ("his", "her"):
            tag = DET if nxt in (NOUN, ADJ, NUM) else PRON
        elif tag in (VERB, AUX) and tags and tags[-1] in (DET, ADJ, NUM):
            tag = NOUN
        tags.append(tag)
    return tags
