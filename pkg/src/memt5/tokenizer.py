"""Byte-level BPE tokenizer with T5 control and sentinel tokens.

Id layout for a vocabulary of size ``V``:

* ``0`` ``<pad>``, ``1`` ``</s>``, ``2`` ``<unk>``
* ``3 .. 258`` the 256 single bytes
* ``259 .. V-101`` merged tokens, in the order the merges were learned
* ``V-100 .. V-1`` sentinels; ``<extra_id_k>`` has id ``V-1-k``

Whitespace rule: every whitespace run collapses to one space and
leading/trailing whitespace is dropped (``" ".join(text.split())``, which is
idempotent). Each word keeps its preceding space as its first byte, so
``decode(encode(t)) == normalize_whitespace(t)``. Special-token literals
such as ``</s>`` or ``<extra_id_3>`` in the text map to their reserved ids.

Because every byte has an id, ``encode`` never needs ``<unk>``; the id is
reserved for compatibility with the T5 layout.

Training is deterministic: the most frequent adjacent pair is merged first
and ties are broken by the lexicographic order of the pair's byte strings.
A pair whose merged bytes already name a token is never merged, which keeps
the token/id mapping bijective.

Vocabulary file::

    #memt5-vocab version=1 vocab_size=1000
    <pad>
    </s>
    <unk>
    \\x00
    ...
    t he
    \\x20t he
    ...
    <extra_id_99>
    ...
    <extra_id_0>

Line ``i`` after the header describes id ``i``. Bytes outside printable
ASCII, the space and the backslash are written as ``\\xHH``; a merged token
is written as its two escaped parts separated by one space.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import os
import re
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence
from functools import lru_cache
from pathlib import Path

from memt5.config import MIN_VOCAB_SIZE, NUM_SENTINELS
from memt5.events import EVENT_TOKENIZER_TRAINED
from memt5.exceptions import CorpusTooSmallError, TokenizerError

logger = logging.getLogger(__name__)

PAD_ID = 0
EOS_ID = 1
UNK_ID = 2
BYTE_OFFSET = 3
FIRST_MERGE_ID = BYTE_OFFSET + 256

PAD_TOKEN = "<pad>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"
CONTROL_TOKENS = (PAD_TOKEN, EOS_TOKEN, UNK_TOKEN)

VOCAB_FORMAT_VERSION = 1
_HEADER_RE = re.compile(r"^#memt5-vocab version=(\d+) vocab_size=(\d+)$")
_SPECIAL_RE = re.compile(r"(<pad>|</s>|<unk>|<extra_id_(?:[1-9][0-9]|[0-9])>)")
_PRETOKEN_RE = re.compile(r" ?[^ ]+| ")
_ESCAPE_RE = re.compile(r"\\x([0-9a-f]{2})")


def sentinel_token(k: int) -> str:
    return f"<extra_id_{k}>"


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to one space and strip the ends."""
    return " ".join(text.split())


def _escape(raw: bytes) -> str:
    return "".join(
        chr(b) if 0x21 <= b <= 0x7E and b != 0x5C else f"\\x{b:02x}" for b in raw
    )


def _unescape(text: str) -> bytes:
    out = bytearray()
    pos = 0
    while pos < len(text):
        if text[pos] == "\\":
            match = _ESCAPE_RE.match(text, pos)
            if match is None:
                raise TokenizerError(f"bad escape in vocabulary entry {text!r}")
            out.append(int(match.group(1), 16))
            pos = match.end()
        else:
            code = ord(text[pos])
            if not 0x21 <= code <= 0x7E:
                raise TokenizerError(f"unescaped byte in vocabulary entry {text!r}")
            out.append(code)
            pos += 1
    return bytes(out)


def _split_specials(text: str) -> list[str]:
    """Alternate text segments and special literals (odd indices are specials)."""
    return _SPECIAL_RE.split(text)


class Vocab:
    """Immutable trained vocabulary; ``encode``/``decode`` are thread-safe."""

    def __init__(self, vocab_size: int, merges: Sequence[tuple[int, int]]) -> None:
        expected = vocab_size - MIN_VOCAB_SIZE
        if vocab_size < MIN_VOCAB_SIZE or len(merges) != expected:
            raise TokenizerError(
                f"vocab_size={vocab_size} needs {max(expected, 0)} merges, got {len(merges)}"
            )
        self.vocab_size = vocab_size
        self.merges: tuple[tuple[int, int], ...] = tuple(merges)

        self._bytes: list[bytes] = [b""] * BYTE_OFFSET + [bytes([b]) for b in range(256)]
        for index, (left, right) in enumerate(self.merges):
            new_id = FIRST_MERGE_ID + index
            if not (BYTE_OFFSET <= left < new_id and BYTE_OFFSET <= right < new_id):
                raise TokenizerError(f"merge {index} references unknown ids ({left}, {right})")
            self._bytes.append(self._bytes[left] + self._bytes[right])

        self._tokens: list[str] = list(CONTROL_TOKENS)
        self._tokens.extend(_escape(raw) for raw in self._bytes[BYTE_OFFSET:])
        self._tokens.extend(sentinel_token(k) for k in reversed(range(NUM_SENTINELS)))
        self._ids = {token: i for i, token in enumerate(self._tokens)}
        if len(self._ids) != vocab_size:
            raise TokenizerError("vocabulary contains duplicate tokens")

        self._ranks = {pair: FIRST_MERGE_ID + i for i, pair in enumerate(self.merges)}
        self._encode_word = lru_cache(maxsize=65536)(self._bpe)

    # ----- lookups ---------------------------------------------------------

    def __len__(self) -> int:
        return self.vocab_size

    @property
    def first_sentinel_id(self) -> int:
        return self.vocab_size - NUM_SENTINELS

    def sentinel_id(self, k: int) -> int:
        if not 0 <= k < NUM_SENTINELS:
            raise TokenizerError(f"sentinel index {k} outside [0, {NUM_SENTINELS})")
        return self.vocab_size - 1 - k

    def is_sentinel(self, token_id: int) -> bool:
        return self.first_sentinel_id <= token_id < self.vocab_size

    def is_special(self, token_id: int) -> bool:
        return token_id < BYTE_OFFSET or self.is_sentinel(token_id)

    def id_to_token(self, token_id: int) -> str:
        if not 0 <= token_id < self.vocab_size:
            raise TokenizerError(f"token id {token_id} outside [0, {self.vocab_size})")
        return self._tokens[token_id]

    def token_to_id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise TokenizerError(f"unknown token {token!r}") from None

    # ----- encode / decode -------------------------------------------------

    def _bpe(self, word: bytes) -> tuple[int, ...]:
        symbols = [BYTE_OFFSET + b for b in word]
        while len(symbols) > 1:
            best_rank = None
            best_pos = -1
            for pos in range(len(symbols) - 1):
                rank = self._ranks.get((symbols[pos], symbols[pos + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_pos = rank, pos
            if best_rank is None:
                break
            pair = (symbols[best_pos], symbols[best_pos + 1])
            merged: list[int] = []
            pos = 0
            while pos < len(symbols):
                if pos < len(symbols) - 1 and (symbols[pos], symbols[pos + 1]) == pair:
                    merged.append(best_rank)
                    pos += 2
                else:
                    merged.append(symbols[pos])
                    pos += 1
            symbols = merged
        return tuple(symbols)

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for index, segment in enumerate(_split_specials(normalize_whitespace(text))):
            if index % 2:
                ids.append(self._ids[segment])
                continue
            for pretoken in _PRETOKEN_RE.findall(segment):
                ids.extend(self._encode_word(pretoken.encode("utf-8")))
        return ids

    def decode(self, ids: Iterable[int], skip_special_tokens: bool = False) -> str:
        parts: list[str] = []
        pending = bytearray()
        for raw_id in ids:
            token_id = int(raw_id)
            if not 0 <= token_id < self.vocab_size:
                raise TokenizerError(f"token id {token_id} outside [0, {self.vocab_size})")
            if self.is_special(token_id):
                if pending:
                    parts.append(pending.decode("utf-8", errors="replace"))
                    pending.clear()
                if not skip_special_tokens:
                    parts.append(self._tokens[token_id])
                continue
            pending.extend(self._bytes[token_id])
        if pending:
            parts.append(pending.decode("utf-8", errors="replace"))
        return "".join(parts)

    # ----- persistence -----------------------------------------------------

    def to_text(self) -> str:
        lines = [f"#memt5-vocab version={VOCAB_FORMAT_VERSION} vocab_size={self.vocab_size}"]
        lines.extend(CONTROL_TOKENS)
        lines.extend(_escape(bytes([b])) for b in range(256))
        lines.extend(
            f"{_escape(self._bytes[left])} {_escape(self._bytes[right])}"
            for left, right in self.merges
        )
        lines.extend(sentinel_token(k) for k in reversed(range(NUM_SENTINELS)))
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        """sha256 of the serialized vocabulary; stored in checkpoints."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.to_text(), encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def from_text(cls, text: str) -> Vocab:
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise TokenizerError("vocabulary file is empty")
        header = _HEADER_RE.match(lines[0])
        if header is None:
            raise TokenizerError(f"bad vocabulary header {lines[0]!r}")
        version, vocab_size = int(header.group(1)), int(header.group(2))
        if version != VOCAB_FORMAT_VERSION:
            raise TokenizerError(f"unsupported vocabulary format version {version}")
        body = lines[1:]
        if len(body) != vocab_size:
            raise TokenizerError(f"header says vocab_size={vocab_size} but file has {len(body)}")

        for token_id, token in enumerate(CONTROL_TOKENS):
            if body[token_id] != token:
                raise TokenizerError(f"line for id {token_id} must be {token!r}")
        for b in range(256):
            if _unescape(body[BYTE_OFFSET + b]) != bytes([b]):
                raise TokenizerError(f"line for byte id {BYTE_OFFSET + b} is corrupt")

        by_bytes = {bytes([b]): BYTE_OFFSET + b for b in range(256)}
        merges: list[tuple[int, int]] = []
        for token_id in range(FIRST_MERGE_ID, vocab_size - NUM_SENTINELS):
            parts = body[token_id].split(" ")
            if len(parts) != 2:
                raise TokenizerError(f"merge line for id {token_id} must hold two parts")
            left, right = (_unescape(p) for p in parts)
            if left not in by_bytes or right not in by_bytes:
                raise TokenizerError(f"merge line for id {token_id} uses undefined parts")
            merges.append((by_bytes[left], by_bytes[right]))
            by_bytes[left + right] = token_id
        for k in range(NUM_SENTINELS):
            if body[vocab_size - 1 - k] != sentinel_token(k):
                raise TokenizerError(
                    f"line for id {vocab_size - 1 - k} must be {sentinel_token(k)}"
                )
        return cls(vocab_size, merges)

    @classmethod
    def load(cls, path: Path) -> Vocab:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise TokenizerError(f"cannot read vocabulary {path}: {exc.strerror or exc}") from exc
        return cls.from_text(text)


# ----- training --------------------------------------------------------------


def _word_counts(corpus: Iterable[str]) -> Counter[bytes]:
    counts: Counter[bytes] = Counter()
    for document in corpus:
        for index, segment in enumerate(_split_specials(normalize_whitespace(document))):
            if index % 2 == 0:
                counts.update(p.encode("utf-8") for p in _PRETOKEN_RE.findall(segment))
    return counts


def train_tokenizer(corpus: Iterable[str], vocab_size: int = 32000) -> Vocab:
    """Learn ``vocab_size - 359`` merges from ``corpus`` (an iterable of documents).

    Raises:
        TokenizerError: corpus is empty or ``vocab_size`` is below the reserved layout
        CorpusTooSmallError: the corpus runs out of mergeable pairs first
    """
    if vocab_size < MIN_VOCAB_SIZE:
        raise TokenizerError(f"vocab_size must be >= {MIN_VOCAB_SIZE}, got {vocab_size}")
    counts = _word_counts(corpus)
    if not counts:
        raise TokenizerError("corpus is empty")

    words = [[BYTE_OFFSET + b for b in word] for word in sorted(counts)]
    freqs = [counts[word] for word in sorted(counts)]
    token_bytes: list[bytes] = [b""] * BYTE_OFFSET + [bytes([b]) for b in range(256)]
    known = set(token_bytes[BYTE_OFFSET:])
    blocked: set[tuple[int, int]] = set()

    pair_counts: defaultdict[tuple[int, int], int] = defaultdict(int)
    pair_words: defaultdict[tuple[int, int], set[int]] = defaultdict(set)
    for index, symbols in enumerate(words):
        for pair in zip(symbols, symbols[1:], strict=False):
            pair_counts[pair] += freqs[index]
            pair_words[pair].add(index)

    heap: list[tuple[int, bytes, bytes, int, int]] = []

    def push(pair: tuple[int, int]) -> None:
        count = pair_counts.get(pair, 0)
        if count > 0 and pair not in blocked:
            heapq.heappush(heap, (-count, token_bytes[pair[0]], token_bytes[pair[1]], *pair))

    for pair in pair_counts:
        push(pair)

    merges: list[tuple[int, int]] = []
    target = vocab_size - MIN_VOCAB_SIZE
    while len(merges) < target:
        pair = None
        while heap:
            neg_count, left_b, right_b, left, right = heapq.heappop(heap)
            candidate = (left, right)
            if candidate in blocked or pair_counts.get(candidate, 0) != -neg_count:
                continue
            if left_b + right_b in known:
                blocked.add(candidate)
                continue
            pair = candidate
            break
        if pair is None:
            raise CorpusTooSmallError(vocab_size, MIN_VOCAB_SIZE + len(merges))

        new_id = FIRST_MERGE_ID + len(merges)
        merges.append(pair)
        token_bytes.append(token_bytes[pair[0]] + token_bytes[pair[1]])
        known.add(token_bytes[new_id])

        touched: set[tuple[int, int]] = set()
        for index in sorted(pair_words.pop(pair, set())):
            symbols = words[index]
            freq = freqs[index]
            for old in zip(symbols, symbols[1:], strict=False):
                pair_counts[old] -= freq
                touched.add(old)
            merged: list[int] = []
            pos = 0
            while pos < len(symbols):
                if pos < len(symbols) - 1 and (symbols[pos], symbols[pos + 1]) == pair:
                    merged.append(new_id)
                    pos += 2
                else:
                    merged.append(symbols[pos])
                    pos += 1
            words[index] = merged
            for new in zip(merged, merged[1:], strict=False):
                pair_counts[new] += freq
                pair_words[new].add(index)
                touched.add(new)
        pair_counts.pop(pair, None)
        for changed in sorted(touched):
            if pair_counts.get(changed, 0) <= 0:
                pair_counts.pop(changed, None)
            else:
                push(changed)

    vocab = Vocab(vocab_size, merges)
    logger.info(
        "tokenizer trained",
        extra={
            "event": EVENT_TOKENIZER_TRAINED,
            "vocab_size": vocab_size,
            "merges": len(merges),
            "distinct_words": len(words),
        },
    )
    return vocab
