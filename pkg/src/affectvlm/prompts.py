"""Deterministic textual prompt engine and tokenizer.

Expands (emotion, subject metadata) into natural-language prompt variations
from a fixed template bank plus per-emotion phrase tables. Phrase vocabularies
are disjoint across emotions, so no emotion's wording leaks into another
class's prompts. Tokenization hashes lowercase words into a fixed 4096-bucket
vocabulary with FNV-1a 64, so token ids are stable across runs and platforms.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from importlib import resources
from itertools import product

from .datagen import AGE_GROUPS, EMOTIONS, ETHNICITIES, GENDERS, SubjectMeta
from .errors import InvalidInputError
from .rng import stream

logger = logging.getLogger("affectvlm.prompts")

VOCAB_SIZE = 4096

_SLOT_RE = re.compile(r"\{([A-Za-z_0-9]+)\}")
_META_SLOTS = {"A", "a", "age", "gnoun", "gnoun2", "eth", "eth_lc"}
_EMOTION_SLOTS = ("adj_np", "base", "noun", "noun2", "noun3", "participle", "gerund_phrase")

# Per-emotion phrase tables; every word is unique to its emotion.
EMOTION_PHRASES = {
    "happy": {
        "adj_np": ("joyful", "cheerful"),
        "base": ("happy", "delighted"),
        "noun": ("happiness",),
        "noun2": ("joy",),
        "noun3": ("smile",),
        "participle": ("smiling",),
        "gerund_phrase": ("smiling brightly", "beaming warmly"),
    },
    "sad": {
        "adj_np": ("sorrowful", "mournful"),
        "base": ("sad", "dejected"),
        "noun": ("sadness",),
        "noun2": ("sorrow",),
        "noun3": ("frown",),
        "participle": ("frowning",),
        "gerund_phrase": ("frowning gloomily", "weeping quietly"),
    },
    "angry": {
        "adj_np": ("furious", "enraged"),
        "base": ("angry", "irate"),
        "noun": ("anger",),
        "noun2": ("rage",),
        "noun3": ("scowl",),
        "participle": ("scowling",),
        "gerund_phrase": ("scowling fiercely", "glaring hotly"),
    },
    "disgust": {
        "adj_np": ("repulsed", "nauseated"),
        "base": ("disgusted", "revolted"),
        "noun": ("disgust",),
        "noun2": ("revulsion",),
        "noun3": ("grimace",),
        "participle": ("grimacing",),
        "gerund_phrase": ("grimacing sourly", "sneering grossly"),
    },
    "fear": {
        "adj_np": ("fearful", "frightened"),
        "base": ("afraid", "scared"),
        "noun": ("fear",),
        "noun2": ("dread",),
        "noun3": ("wince",),
        "participle": ("trembling",),
        "gerund_phrase": ("trembling anxiously", "cowering nervously"),
    },
    "surprise": {
        "adj_np": ("astonished", "startled"),
        "base": ("surprised", "amazed"),
        "noun": ("surprise",),
        "noun2": ("astonishment",),
        "noun3": ("gasp",),
        "participle": ("gasping",),
        "gerund_phrase": ("gasping suddenly", "staring agape"),
    },
}


@dataclass(frozen=True)
class PromptTemplate:
    id: int
    template: str

    def __post_init__(self):
        slots = _SLOT_RE.findall(self.template)
        if len(slots) != len(set(slots)):
            raise InvalidInputError(f"template {self.id}: slot used more than once")
        unknown = set(slots) - _META_SLOTS - set(_EMOTION_SLOTS)
        if unknown:
            raise InvalidInputError(f"template {self.id}: unknown slots {sorted(unknown)}")

    def emotion_slots(self) -> list[str]:
        return [s for s in _SLOT_RE.findall(self.template) if s in _EMOTION_SLOTS]


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]

    def __post_init__(self):
        if any(not (0 <= i < VOCAB_SIZE) for i in self.ids):
            raise InvalidInputError(f"token ids must lie in [0, {VOCAB_SIZE})")

    def __len__(self):
        return len(self.ids)


def _load_templates() -> tuple[PromptTemplate, ...]:
    text = resources.files("affectvlm").joinpath("assets/templates.txt").read_text("utf-8")
    bank = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tid, template = line.split("|", 1)
        bank.append(PromptTemplate(id=int(tid), template=template))
    return tuple(bank)


TEMPLATE_BANK = _load_templates()

_VOWELS = "aeiouAEIOU"


def _resolve_articles(text: str) -> str:
    def sub(m):
        article, nxt = m.group(1), m.group(2)
        an = nxt[0] in _VOWELS
        word = ("An" if an else "A") if article == "A" else ("an" if an else "a")
        return f"{word} {nxt}"

    return re.sub(r"\{(A|a)\} (\S+)", sub, text)


def _meta_fillers(meta: SubjectMeta) -> dict:
    return {
        "age": meta.age_group,
        "gnoun": "woman" if meta.gender == "female" else "man",
        "gnoun2": meta.gender,
        "eth": meta.ethnicity,
        "eth_lc": meta.ethnicity.lower(),
    }


def render_template(template: PromptTemplate, emotion: str, meta: SubjectMeta,
                    variant: int = 0) -> str:
    """Render one template; `variant` indexes the emotion-phrase alternatives."""
    if emotion not in EMOTIONS:
        raise InvalidInputError(f"emotion {emotion!r} not in {EMOTIONS}")
    phrases = EMOTION_PHRASES[emotion]
    fillers = _meta_fillers(meta)
    for slot in template.emotion_slots():
        options = phrases[slot]
        fillers[slot] = options[variant % len(options)]
    text = template.template
    for slot, value in fillers.items():
        text = text.replace("{" + slot + "}", value)
    return _resolve_articles(text)


def _variant_count(template: PromptTemplate, emotion: str) -> int:
    counts = [len(EMOTION_PHRASES[emotion][s]) for s in template.emotion_slots()]
    return max(counts) if counts else 1


def expand(emotion: str, meta: SubjectMeta, n: int, seed: int = 0) -> list[str]:
    """n distinct prompts for (emotion, meta), seeded order.

    If fewer than n distinct renderings exist, returns the full distinct set
    and logs a truncation warning.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rendered = []
    seen = set()
    for template in TEMPLATE_BANK:
        for variant in range(_variant_count(template, emotion)):
            text = render_template(template, emotion, meta, variant)
            if text not in seen:
                seen.add(text)
                rendered.append(text)
    order = stream(seed, EMOTIONS.index(emotion), meta.subject_id, 0x9C0).permutation(len(rendered))
    shuffled = [rendered[i] for i in order]
    if n > len(shuffled):
        logger.warning(
            "expand(%s): requested %d prompts but only %d distinct renderings exist; truncating",
            emotion, n, len(shuffled),
        )
        return shuffled
    return shuffled[:n]


def _meta_cycle() -> list[SubjectMeta]:
    """Fixed cross-product order, gender fastest so short prefixes stay balanced."""
    combos = []
    for eth, age, gender in product(ETHNICITIES, AGE_GROUPS, GENDERS):
        combos.append(SubjectMeta(subject_id=0, age_group=age, gender=gender, ethnicity=eth))
    return combos


def class_prompt_set(emotion: str, n_per_class: int, seed: int = 0) -> list[str]:
    """Balanced prompt set for one class: cycles templates and the metadata
    cross-product from a seeded start offset."""
    if n_per_class < 1:
        raise InvalidInputError("n_per_class must be >= 1")
    combos = _meta_cycle()
    start = int(stream(seed, EMOTIONS.index(emotion), 0xC1A55).integers(len(combos)))
    out = []
    seen = set()
    i = 0
    while len(out) < n_per_class and i < 8 * len(combos):
        template = TEMPLATE_BANK[i % len(TEMPLATE_BANK)]
        meta = combos[(start + i) % len(combos)]
        variant = (i // len(TEMPLATE_BANK)) % 2
        text = render_template(template, emotion, meta, variant)
        if text not in seen:
            seen.add(text)
            out.append(text)
        i += 1
    return out


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_WORD_RE = re.compile(r"[^a-z0-9\s]+")


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def words_of(prompt: str) -> list[str]:
    cleaned = _WORD_RE.sub("", prompt.lower())
    return cleaned.split()


def tokenize(prompt: str) -> TokenSeq:
    """Lowercase, strip punctuation, split on whitespace, FNV-1a 64 mod 4096."""
    if not isinstance(prompt, str) or not prompt.strip():
        raise InvalidInputError("prompt must be a nonempty string")
    words = words_of(prompt)
    if not words:
        raise InvalidInputError("prompt contains no tokenizable words")
    return TokenSeq(ids=tuple(fnv1a64(w.encode("utf-8")) % VOCAB_SIZE for w in words))


def bank_vocabulary() -> list[str]:
    """Every word the shipped bank can emit, across all emotions/metas/variants."""
    seen = set()
    for emotion in EMOTIONS:
        for meta in _meta_cycle():
            for template in TEMPLATE_BANK:
                for variant in range(_variant_count(template, emotion)):
                    seen.update(words_of(render_template(template, emotion, meta, variant)))
    return sorted(seen)
