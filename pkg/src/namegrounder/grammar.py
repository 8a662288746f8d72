"""Template grammar: normalization, vocabulary, instruction templates, surfaces.

One grammar is shared between generation (langgen) and parsing (grounder), so
every generated instruction parses back to its gold structure exactly -- the
closure property the zero-noise evaluation relies on.

Normalization is length-preserving (punctuation becomes spaces), so character
spans computed on normalized text index the original string directly.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError
from .scene import ObjectLibrary

INSTRUCTION_CLASSES = ("naming-object", "pick-and-place", "instruction-not-supported")
POSITIVE_CLASSES = ("naming-object", "pick-and-place")
SLOT_ROLES = ("SRC", "DST", "NAME", "OBJ_TO_NAME")
ENTITY_TYPES = ("name", "object_to_be_named", "src", "dst")

DETERMINERS = ("a", "an", "that", "the", "this")
PRONOUN_WORDS = ("it", "that", "this")
SIZE_CANONICAL = {
    "small": "small", "little": "small", "tiny": "small",
    "medium": "medium",
    "large": "large", "big": "large", "huge": "large",
}
SIZE_SURFACES = {
    "small": ("small", "little", "tiny"),
    "medium": ("medium",),
    "large": ("large", "big", "huge"),
}
POLITENESS_WORD = "please"

_TOKEN_RE = re.compile(r"\S+")
_SLOT_RE = re.compile(r"^\{(SRC|DST|NAME|OBJ_TO_NAME)\}$")


def normalize(text: str) -> str:
    """Lowercase and replace non-alphanumeric characters with spaces.

    Length-preserving: len(normalize(t)) == len(t) for all t, so spans on
    the normalized text index the original directly. Characters whose
    lowercase form expands (e.g. Turkish dotted I) are kept as-is.
    """
    out = []
    for ch in text:
        low = ch.lower()
        if len(low) != 1:
            low = ch
        out.append(low if low.isalnum() or low == " " else " ")
    return "".join(out)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class Vocabulary:
    """Attribute and function-word lexicon derived from an object library."""

    categories: tuple[str, ...]
    alias_pairs: tuple[tuple[str, str], ...]  # (alias, category)
    colors: tuple[str, ...]
    shapes: tuple[str, ...]

    @classmethod
    def from_library(cls, library: ObjectLibrary) -> "Vocabulary":
        aliases = []
        for s in library:
            for a in s.aliases:
                aliases.append((a, s.category))
        colors = sorted({c for s in library for c in s.colors})
        return cls(
            categories=library.categories(),
            alias_pairs=tuple(sorted(set(aliases))),
            colors=tuple(colors),
            shapes=library.shapes(),
        )

    @property
    def alias_to_category(self) -> dict[str, str]:
        return dict(self.alias_pairs)

    @property
    def size_words(self) -> tuple[str, ...]:
        return tuple(sorted(SIZE_CANONICAL))

    def descriptor_tokens(self) -> frozenset[str]:
        """Every token a descriptor phrase may consist of."""
        return frozenset(DETERMINERS) | frozenset(PRONOUN_WORDS) \
            | frozenset(self.colors) | frozenset(self.size_words) \
            | frozenset(self.shapes) | frozenset(self.categories) \
            | frozenset(a for a, _ in self.alias_pairs)


@dataclass(frozen=True)
class Descriptor:
    """Attribute-level reference to an object; the 'it' form sets pronoun."""

    category: str | None = None
    colors: tuple[str, ...] = ()
    size_class: str | None = None
    shape: str | None = None
    pronoun: bool = False
    unmatched: tuple[str, ...] = ()

    def __post_init__(self):
        if self.pronoun and (self.category or self.colors or self.size_class
                             or self.shape or self.unmatched):
            raise ValueError("pronoun descriptor must carry no other fields")
        if not (self.pronoun or self.category or self.colors or self.size_class
                or self.shape or self.unmatched):
            raise ValueError("descriptor must have at least one field")

    def field_count(self) -> int:
        return sum((self.category is not None, bool(self.colors),
                    self.size_class is not None, self.shape is not None))


def parse_descriptor_phrase(phrase: str, vocab: Vocabulary) -> Descriptor:
    """Map a slot phrase to attribute fields via the vocabulary.

    Unknown content tokens are retained in `unmatched`; determiners are
    dropped. A phrase of only pronouns/determiners is the pronoun form.
    """
    toks = tokenize(normalize(phrase))
    alias_map = vocab.alias_to_category
    if toks and all(t in DETERMINERS or t in PRONOUN_WORDS for t in toks):
        return Descriptor(pronoun=True)
    category = None
    colors: list[str] = []
    size_class = None
    shape = None
    unmatched: list[str] = []
    for t in toks:
        if t in DETERMINERS or t in PRONOUN_WORDS:
            continue
        if t in vocab.colors:
            if t not in colors:
                colors.append(t)
        elif t in SIZE_CANONICAL:
            size_class = SIZE_CANONICAL[t]
        elif t in vocab.shapes:
            shape = t
        elif t in vocab.categories:
            if category is None:
                category = t
            else:
                unmatched.append(t)
        elif t in alias_map:
            if category is None:
                category = alias_map[t]
            else:
                unmatched.append(t)
        else:
            unmatched.append(t)
    return Descriptor(category=category, colors=tuple(sorted(colors)),
                      size_class=size_class, shape=shape,
                      unmatched=tuple(unmatched))


@dataclass(frozen=True)
class Template:
    template_id: str
    instruction_class: str
    items: tuple[str, ...]          # literal tokens and {ROLE} slot markers
    regex: re.Pattern = None        # compiled against normalized text
    literal_tokens: tuple[str, ...] = ()
    slot_roles: tuple[str, ...] = ()

    def has_slot(self, role: str) -> bool:
        return role in self.slot_roles


@dataclass(frozen=True)
class TemplateMatch:
    template: Template
    coverage: float                       # matched literal tokens / total tokens
    slots: tuple[tuple[str, int, int], ...]  # (role, start, end) on the text
    literal_hits: int


def _slot_pattern(vocab: Vocabulary) -> str:
    toks = sorted(vocab.descriptor_tokens(), key=lambda t: (-len(t), t))
    alt = "|".join(re.escape(t) for t in toks)
    vocab_run = rf"(?:{alt})(?:\s+(?:{alt}))*"
    any_run_lazy = r"\S+(?:\s+\S+)*?"
    return f"(?:{vocab_run}|{any_run_lazy})"


def _compile_template(items: tuple[str, ...], slot_re: str) -> tuple[re.Pattern, tuple[str, ...], tuple[str, ...]]:
    parts = [r"\s*", rf"(?:(?P<pre>{POLITENESS_WORD})\s+)?"]
    literals: list[str] = []
    roles: list[str] = []
    for i, item in enumerate(items):
        sep = "" if i == 0 else r"\s+"
        m = _SLOT_RE.match(item)
        if m:
            roles.append(m.group(1))
            parts.append(f"{sep}(?P<g{len(roles) - 1}>{slot_re})")
        else:
            literals.append(item)
            parts.append(sep + re.escape(item))
    parts.append(rf"(?:\s+(?P<suf>{POLITENESS_WORD}))?\s*")
    return re.compile("".join(parts)), tuple(literals), tuple(roles)


class TemplateBank:
    """Instruction templates compiled against one vocabulary."""

    def __init__(self, templates: tuple[Template, ...], vocab: Vocabulary):
        self.templates = templates
        self.vocab = vocab

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary) -> "TemplateBank":
        slot_re = _slot_pattern(vocab)
        templates: list[Template] = []
        seen: set[str] = set()
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise FormatError("template row needs 3 tab-separated columns",
                                  line=lineno)
            template_id, icls, pattern = (c.strip() for c in cols)
            if icls not in INSTRUCTION_CLASSES:
                raise FormatError(f"unknown instruction class {icls!r}",
                                  line=lineno, field="class")
            if template_id in seen:
                raise FormatError(f"duplicate template_id {template_id!r}",
                                  line=lineno, field="template_id")
            seen.add(template_id)
            items = tuple(pattern.split())
            regex, literals, roles = _compile_template(items, slot_re)
            _check_slot_invariants(template_id, icls, roles, lineno)
            templates.append(Template(
                template_id=template_id, instruction_class=icls, items=items,
                regex=regex, literal_tokens=literals, slot_roles=roles,
            ))
        return cls(tuple(templates), vocab)

    def by_class(self, instruction_class: str) -> tuple[Template, ...]:
        return tuple(t for t in self.templates
                     if t.instruction_class == instruction_class)

    def match(self, text: str) -> TemplateMatch | None:
        """Best full match: most matched literal tokens, then template_id."""
        norm = normalize(text)
        total = max(1, len(tokenize(norm)))
        best: TemplateMatch | None = None
        best_key = None
        for t in self.templates:
            m = t.regex.fullmatch(norm)
            if m is None:
                continue
            hits = len(t.literal_tokens)
            hits += 1 if m.group("pre") else 0
            hits += 1 if m.group("suf") else 0
            key = (-hits, t.template_id)
            if best_key is None or key < best_key:
                slots = tuple(
                    (role, m.start(f"g{i}"), m.end(f"g{i}"))
                    for i, role in enumerate(t.slot_roles)
                )
                best = TemplateMatch(template=t, coverage=hits / total,
                                     slots=slots, literal_hits=hits)
                best_key = key
        return best


def _check_slot_invariants(template_id: str, icls: str,
                           roles: tuple[str, ...], lineno: int) -> None:
    if icls == "naming-object":
        if "NAME" not in roles or "OBJ_TO_NAME" not in roles:
            raise FormatError(
                f"{template_id}: naming-object patterns need NAME and OBJ_TO_NAME",
                line=lineno)
    elif icls == "pick-and-place":
        if "SRC" not in roles:
            raise FormatError(f"{template_id}: pick-and-place patterns need SRC",
                              line=lineno)
    elif roles:
        raise FormatError(
            f"{template_id}: instruction-not-supported patterns take no slots",
            line=lineno)


# Referring-expression surfaces, keyed by attribute pattern. Letters:
# K color, S size, H shape, C category; PRON is the pronoun form.
REFERRING_KEYS = ("PRON", "C", "KC", "SC", "HC", "SKC", "KHC", "SHC", "SKHC")
LEVEL_COMBOS: dict[int, tuple[tuple[str, ...], ...]] = {
    1: ((),),
    2: (("color",), ("size",), ("shape",)),
    3: (("size", "color"), ("color", "shape"), ("size", "shape"),
        ("size", "color", "shape")),
}


def combo_key(combo: tuple[str, ...]) -> str:
    key = ""
    if "size" in combo:
        key += "S"
    if "color" in combo:
        key += "K"
    if "shape" in combo:
        key += "H"
    return key + "C"


class ReferringBank:
    """Surface realizations per attribute pattern (see docs/formats.md)."""

    def __init__(self, surfaces: dict[str, tuple[str, ...]]):
        self.surfaces = surfaces

    @classmethod
    def load(cls, path: str | Path) -> "ReferringBank":
        table: dict[str, list[str]] = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise FormatError("referring row needs 2 tab-separated columns",
                                  line=lineno)
            key, surface = cols[0].strip(), cols[1].strip()
            if key not in REFERRING_KEYS:
                raise FormatError(f"unknown referring pattern key {key!r}",
                                  line=lineno, field="pattern")
            table.setdefault(key, []).append(surface)
        return cls({k: tuple(v) for k, v in table.items()})

    def realize(self, key: str, r, *, category: str | None = None,
                aliases: tuple[str, ...] = (), color: str | None = None,
                size_class: str | None = None, shape: str | None = None) -> str:
        """Fill one surface of the given pattern with concrete attribute words."""
        surface = r.choice(self.surfaces[key])
        out: list[str] = []
        for tok in surface.split():
            if tok == "{cat}":
                out.append(category)
            elif tok == "{alias}":
                out.append(r.choice(aliases) if aliases else category)
            elif tok == "{color}":
                out.append(color)
            elif tok == "{size}":
                out.append(r.choice(SIZE_SURFACES[size_class]))
            elif tok == "{shape}":
                out.append(shape)
            else:
                out.append(tok)
        # indefinite-article agreement
        for i, w in enumerate(out[:-1]):
            if w == "a" and out[i + 1][:1] in "aeiou":
                out[i] = "an"
        return " ".join(out)


def load_names(path: str | Path) -> tuple[str, ...]:
    """Name lexicon: one display-form name per line; # comments allowed."""
    names: list[str] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key = normalize(line)
        if key in seen:
            raise FormatError(f"duplicate name {line!r}", line=lineno)
        seen.add(key)
        names.append(line)
    return tuple(names)


def load_confusions(path: str | Path) -> dict[str, tuple[str, ...]]:
    """Category confusion table: rows of `category<TAB>confused_with`."""
    table: dict[str, list[str]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise FormatError("confusion row needs 2 tab-separated columns",
                              line=lineno)
        src, dst = cols[0].strip(), cols[1].strip()
        table.setdefault(src, []).append(dst)
    return {k: tuple(v) for k, v in table.items()}
