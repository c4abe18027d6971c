"""Corpus handling: text normalization, BMES label codec, vocabularies and
criterion-augmented model inputs.

Corpora are whitespace-segmented UTF-8 files, one sentence per line. A
sentence is preprocessed into a flat token sequence (one token per CJK
character, with Latin/digit runs collapsed to ``<eng>``/``<num>``) plus gold
word spans in token coordinates.
"""

import hashlib
import re
from dataclasses import dataclass, field

from .errors import ConfigError, DataError

# Reserved unigram tokens. Criterion tokens (<pku>, ...) follow immediately
# after these, then corpus tokens.
PAD, UNK, BOS, ENG, NUM = "<pad>", "<unk>", "<bos>", "<eng>", "<num>"
RESERVED = (PAD, UNK, BOS, ENG, NUM)
PAD_ID, UNK_ID, BOS_ID, ENG_ID, NUM_ID = range(5)

# Reserved bigram ids.
BI_PAD_ID, BI_UNK_ID = 0, 1

# Label alphabet; ids are positions in this string.
LABELS = "BMES"
B, M, E, S = range(4)

_FULLWIDTH_LO, _FULLWIDTH_HI = 0xFF01, 0xFF5E
_WIDTH_TABLE = {cp: cp - 0xFEE0 for cp in range(_FULLWIDTH_LO, _FULLWIDTH_HI + 1)}
_WIDTH_TABLE[0x3000] = 0x20  # ideographic space

_RUN_RE = re.compile(r"([A-Za-z]+)|([0-9]+)|(.)", re.DOTALL)

_CRITERION_NAME_RE = re.compile(r"^[a-z0-9_\-]+$")


def normalize_width(text: str) -> str:
    """Map full-width ASCII (U+FF01..U+FF5E) and U+3000 to half-width.

    Total and length-preserving: every other codepoint passes through.
    """
    return text.translate(_WIDTH_TABLE)


def replace_runs(text: str) -> list[str]:
    """Tokenize width-normalized text, one token per codepoint, except that
    each maximal run of Latin letters becomes <eng> and each maximal digit
    run becomes <num>."""
    return [tok for tok, _ in replace_runs_with_spans(text)]


def replace_runs_with_spans(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Like replace_runs but each token carries its (start, end) codepoint
    span in the input, so predictions can be mapped back to original text."""
    out = []
    for m in _RUN_RE.finditer(text):
        if m.group(1) is not None:
            out.append((ENG, m.span()))
        elif m.group(2) is not None:
            out.append((NUM, m.span()))
        else:
            out.append((m.group(3), m.span()))
    return out


def word_tokens(word: str) -> list[str]:
    """Preprocess one gold word into its token sequence."""
    return replace_runs(normalize_width(word))


def word_surface(word: str) -> str:
    """Canonical word surface used for lexicon membership (OOV accounting)."""
    return "".join(word_tokens(word))


def encode_bmes(spans: list[tuple[int, int]], length: int) -> list[int]:
    """Encode a span partition of [0, length) as per-character BMES ids.

    Raises DataError if the spans do not exactly partition [0, length).
    """
    labels = []
    pos = 0
    for start, end in spans:
        if start != pos or end <= start:
            raise DataError(f"spans do not partition [0,{length}): bad span ({start},{end}) at {pos}")
        if end - start == 1:
            labels.append(S)
        else:
            labels.append(B)
            labels.extend([M] * (end - start - 2))
            labels.append(E)
        pos = end
    if pos != length:
        raise DataError(f"spans cover [0,{pos}) but length is {length}")
    return labels


def decode_bmes(labels) -> list[tuple[int, int]]:
    """Decode a BMES sequence into word spans, repairing invalid label
    sequences deterministically.

    Left-to-right scan: B closes any open word and opens a new one; M/E
    extend the open word (E also closes it), or open one if none is open;
    S closes any open word as-is, then emits a singleton; the end of the
    sequence closes any open word. Total: every input yields a partition.
    """
    ids = [LABELS.index(l) if isinstance(l, str) else l for l in labels]
    spans = []
    open_start = None
    for t, y in enumerate(ids):
        if y == B:
            if open_start is not None:
                spans.append((open_start, t))
            open_start = t
        elif y == M:
            if open_start is None:
                open_start = t
        elif y == E:
            if open_start is None:
                open_start = t
            spans.append((open_start, t + 1))
            open_start = None
        elif y == S:
            if open_start is not None:
                spans.append((open_start, t))
                open_start = None
            spans.append((t, t + 1))
        else:
            raise DataError(f"label id {y} outside BMES alphabet")
    if open_start is not None:
        spans.append((open_start, len(ids)))
    return spans


def labels_to_str(labels: list[int]) -> str:
    return "".join(LABELS[y] for y in labels)


@dataclass
class RawSentence:
    """A gold-segmented sentence straight from a corpus file."""

    words: list[str]
    criterion_id: int = 0


@dataclass
class Sentence:
    """A preprocessed sentence ready for the model.

    gold_spans partition [0, len(tokens)) in token coordinates.
    """

    tokens: list[str]
    chars: list[int]
    bigrams: list[int]
    criterion_id: int
    gold_spans: list[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.tokens)


def load_corpus(path, criterion_id: int = 0) -> list[RawSentence]:
    """Read a whitespace-segmented corpus file; blank lines are skipped.

    Invalid UTF-8 is reported with its line number.
    """
    sentences = []
    try:
        with open(path, "rb") as fh:
            for lineno, raw in enumerate(fh, start=1):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as exc:
                    raise DataError(f"{path}: line {lineno}: invalid UTF-8 ({exc})") from exc
                words = line.split()
                if not words:
                    continue
                sentences.append(RawSentence(words=words, criterion_id=criterion_id))
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    return sentences


def split_long(raw: RawSentence, max_tokens: int) -> list[RawSentence]:
    """Split an over-long sentence at word boundaries into chunks whose
    preprocessed token count fits max_tokens. A single word longer than the
    limit cannot be split and raises DataError."""
    lengths = [len(word_tokens(w)) for w in raw.words]
    if sum(lengths) <= max_tokens:
        return [raw]
    chunks = []
    cur: list[str] = []
    cur_len = 0
    for w, wlen in zip(raw.words, lengths):
        if wlen > max_tokens:
            raise DataError(f"word {w!r} alone exceeds the {max_tokens}-token limit")
        if cur and cur_len + wlen > max_tokens:
            chunks.append(RawSentence(words=cur, criterion_id=raw.criterion_id))
            cur, cur_len = [], 0
        cur.append(w)
        cur_len += wlen
    if cur:
        chunks.append(RawSentence(words=cur, criterion_id=raw.criterion_id))
    return chunks


@dataclass
class Vocab:
    """Token tables for unigrams, bigrams and criteria, plus the per-criterion
    training word lexicons used for OOV accounting.

    Ids are dense from 0 with reserved entries first; a frozen Vocab is
    immutable in spirit and safe to share.
    """

    unigrams: dict[str, int]
    bigrams: dict[str, int]
    criteria: dict[str, int]
    lexicons: dict[str, list[str]] = field(default_factory=dict)

    FORMAT = "mccws-vocab"
    VERSION = 1

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, train_corpora: dict[str, list[RawSentence]]) -> "Vocab":
        """Build all tables from training corpora, one entry per criterion.

        Criterion ids follow sorted name order; token ids follow first
        appearance, so identical inputs give identical vocabularies.
        """
        if not train_corpora:
            raise ConfigError("at least one training corpus is required")
        names = sorted(train_corpora)
        for name in names:
            if not _CRITERION_NAME_RE.match(name):
                raise ConfigError(f"criterion name {name!r} must match [a-z0-9_-]+")
        criteria = {name: i for i, name in enumerate(names)}
        unigrams = {tok: i for i, tok in enumerate(RESERVED)}
        for name in names:
            unigrams[f"<{name}>"] = len(unigrams)
        bigrams = {PAD: BI_PAD_ID, UNK: BI_UNK_ID}
        lexicons: dict[str, list[str]] = {name: [] for name in names}
        for name in names:
            seen_words = set()
            for raw in train_corpora[name]:
                tokens: list[str] = []
                for word in raw.words:
                    toks = word_tokens(word)
                    surface = "".join(toks)
                    if surface not in seen_words:
                        seen_words.add(surface)
                        lexicons[name].append(surface)
                    tokens.extend(toks)
                for tok in tokens:
                    if tok not in unigrams:
                        unigrams[tok] = len(unigrams)
                prev = BOS
                for tok in tokens:
                    pair = prev + tok
                    if pair not in bigrams:
                        bigrams[pair] = len(bigrams)
                    prev = tok
        return cls(unigrams=unigrams, bigrams=bigrams, criteria=criteria, lexicons=lexicons)

    # -- lookups -------------------------------------------------------------

    def uni_id(self, token: str) -> int:
        return self.unigrams.get(token, UNK_ID)

    def bigram_id(self, pair: str) -> int:
        return self.bigrams.get(pair, BI_UNK_ID)

    @property
    def num_criteria(self) -> int:
        return len(self.criteria)

    @property
    def criterion_names(self) -> list[str]:
        names = [None] * len(self.criteria)
        for name, cid in self.criteria.items():
            names[cid] = name
        return names

    def criterion_token_id(self, criterion_id: int) -> int:
        names = self.criterion_names
        if not 0 <= criterion_id < len(names):
            raise ConfigError(f"unknown criterion id {criterion_id}; registered: {names}")
        return self.unigrams[f"<{names[criterion_id]}>"]

    def lexicon(self, criterion_name: str) -> frozenset:
        if criterion_name not in self.lexicons:
            raise ConfigError(f"no lexicon for criterion {criterion_name!r}")
        return frozenset(self.lexicons[criterion_name])

    # -- serialization -------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"{self.FORMAT}\t{self.VERSION}"]
        lines.append("reserved\t" + ",".join(f"{tok}={i}" for i, tok in enumerate(RESERVED)))
        lines.append("[criteria]")
        for name, cid in self.criteria.items():
            lines.append(f"{name}\t{cid}")
        lines.append("[unigrams]")
        for tok, i in self.unigrams.items():
            lines.append(f"{tok}\t{i}")
        lines.append("[bigrams]")
        for pair, i in self.bigrams.items():
            lines.append(f"{pair}\t{i}")
        for name in self.criteria:
            lines.append(f"[lexicon:{name}]")
            lines.extend(self.lexicons.get(name, []))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Vocab":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(cls.FORMAT + "\t"):
            raise DataError("not a vocab file (bad header)")
        version = lines[0].split("\t", 1)[1]
        if version != str(cls.VERSION):
            raise DataError(f"unsupported vocab version {version}")
        criteria: dict[str, int] = {}
        unigrams: dict[str, int] = {}
        bigrams: dict[str, int] = {}
        lexicons: dict[str, list[str]] = {}
        section = None
        for line in lines[1:]:
            if line.startswith("reserved\t"):
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1]
                if section.startswith("lexicon:"):
                    lexicons[section.split(":", 1)[1]] = []
                continue
            if section == "criteria":
                name, cid = line.split("\t")
                criteria[name] = int(cid)
            elif section == "unigrams":
                tok, i = line.split("\t")
                unigrams[tok] = int(i)
            elif section == "bigrams":
                pair, i = line.split("\t")
                bigrams[pair] = int(i)
            elif section is not None and section.startswith("lexicon:"):
                lexicons[section.split(":", 1)[1]].append(line)
            else:
                raise DataError(f"vocab line outside any section: {line!r}")
        for i, tok in enumerate(RESERVED):
            if unigrams.get(tok) != i:
                raise DataError(f"reserved token {tok} has id {unigrams.get(tok)}, expected {i}")
        return cls(unigrams=unigrams, bigrams=bigrams, criteria=criteria, lexicons=lexicons)

    @classmethod
    def load(cls, path) -> "Vocab":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise DataError(f"cannot read vocab {path}: {exc}") from exc

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


# -- model input assembly ----------------------------------------------------

def make_bigrams(tokens: list[str], vocab: Vocab) -> list[int]:
    """Bigram id per position: (previous token, this token), with <bos>
    standing in for the missing left neighbor at position 0. Unseen pairs
    map to the unknown-bigram id."""
    ids = []
    prev = BOS
    for tok in tokens:
        ids.append(vocab.bigram_id(prev + tok))
        prev = tok
    return ids


def prepare_sentence(raw: RawSentence, vocab: Vocab) -> Sentence:
    """Normalize, tokenize and index one gold sentence; word boundaries
    become gold spans in token coordinates."""
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    for word in raw.words:
        toks = word_tokens(word)
        if not toks:
            raise DataError(f"word {word!r} vanished during preprocessing")
        spans.append((len(tokens), len(tokens) + len(toks)))
        tokens.extend(toks)
    return Sentence(
        tokens=tokens,
        chars=[vocab.uni_id(t) for t in tokens],
        bigrams=make_bigrams(tokens, vocab),
        criterion_id=raw.criterion_id,
        gold_spans=spans,
    )


def augment(sentence: Sentence, vocab: Vocab) -> list[int]:
    """Prepend the criterion token id to the sentence's character ids."""
    return [vocab.criterion_token_id(sentence.criterion_id)] + list(sentence.chars)
