"""Skip-gram token embeddings trained over method token streams.

One method = one sentence. Training is single-threaded and fully
deterministic under a fixed seed; lookups are read-only. Rare tokens are
folded into a reserved UNK entry so out-of-vocabulary tokens keep a
nonzero vector inside attention.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpus, FormatError
from .lexcat import TokenStream

__all__ = [
    "EMBED_DIM",
    "UNK_TOKEN",
    "EmbedConfig",
    "Vocabulary",
    "EmbeddingTable",
    "build_vocab",
    "train_word2vec",
    "lookup",
    "token_cosine",
    "save_table",
    "load_table",
]

EMBED_DIM = 100
UNK_TOKEN = "<unk>"
EMBED_MAGIC = b"CCEMB1"

# exponent of the unigram distribution used for negative sampling
_NOISE_POWER = 0.75
_MIN_LR_FRACTION = 1e-4


@dataclass
class EmbedConfig:
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_count: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")


class Vocabulary:
    """Dense token ids with a reserved UNK at id 0."""

    def __init__(self, tokens: Sequence[str], freqs: Sequence[int]):
        if not tokens or tokens[0] != UNK_TOKEN:
            raise ValueError("vocabulary must start with the UNK token")
        self.tokens = list(tokens)
        self.freqs = list(freqs)
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def unk_id(self) -> int:
        return 0

    def id_for(self, token: str) -> int:
        return self.token_to_id.get(token, 0)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def frequency(self, token: str) -> int:
        return self.freqs[self.id_for(token)]


def _corpus_sentences(corpus: Iterable[TokenStream]) -> list[list[str]]:
    return [ts.lexemes() for ts in corpus]


def build_vocab(corpus: Iterable[TokenStream], min_count: int = 1) -> Vocabulary:
    """Count lexemes; tokens under min_count fold into UNK."""
    return _vocab_from_sentences(_corpus_sentences(corpus), min_count)


def _vocab_from_sentences(sentences: list[list[str]], min_count: int) -> Vocabulary:
    raw: dict[str, int] = {}
    for sent in sentences:
        for tok in sent:
            raw[tok] = raw.get(tok, 0) + 1
    if not raw:
        raise EmptyCorpus("no tokens in corpus")
    # frequency-descending, lexeme as tiebreak: ids are reproducible
    kept = sorted(
        ((t, c) for t, c in raw.items() if c >= min_count),
        key=lambda tc: (-tc[1], tc[0]),
    )
    unk_freq = sum(c for _, c in raw.items() if c < min_count)
    tokens = [UNK_TOKEN] + [t for t, _ in kept]
    freqs = [unk_freq] + [c for _, c in kept]
    return Vocabulary(tokens, freqs)


class EmbeddingTable:
    """token -> 100-d vector map; rows are float32, finite."""

    def __init__(self, vocab: Vocabulary, matrix: np.ndarray):
        if matrix.shape != (len(vocab), EMBED_DIM):
            raise ValueError(f"matrix shape {matrix.shape} != ({len(vocab)}, {EMBED_DIM})")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("embedding matrix contains non-finite entries")
        self.vocab = vocab
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)

    @property
    def dim(self) -> int:
        return EMBED_DIM

    def lookup(self, lexeme: str) -> np.ndarray:
        return self.matrix[self.vocab.id_for(lexeme)]

    def save(self, path) -> None:
        save_table(self, path)


def lookup(table: EmbeddingTable, lexeme: str) -> np.ndarray:
    return table.lookup(lexeme)


def token_cosine(table: EmbeddingTable, t1: str, t2: str) -> float:
    v1 = table.lookup(t1).astype(np.float64)
    v2 = table.lookup(t2).astype(np.float64)
    n1 = np.linalg.norm(v1)
    n2 = np.linalg.norm(v2)
    if n1 == 0.0 or n2 == 0.0:
        return 0.0
    return float(np.dot(v1, v2) / (n1 * n2))


def _noise_cumdist(vocab: Vocabulary) -> np.ndarray:
    weights = np.array(vocab.freqs, dtype=np.float64) ** _NOISE_POWER
    weights[weights == 0.0] = 0.0
    total = weights.sum()
    if total == 0.0:
        # degenerate corpus where only UNK exists with zero count
        weights[:] = 1.0
        total = weights.sum()
    return np.cumsum(weights / total)


def train_word2vec(corpus: Iterable[TokenStream], config: EmbedConfig | None = None) -> EmbeddingTable:
    """Skip-gram with negative sampling.

    Single-threaded; the update order, window shrinking and negative draws
    all come from one seeded generator, so the result is a pure function
    of (corpus, config).
    """
    config = config or EmbedConfig()
    config.validate()
    sentences = _corpus_sentences(corpus)
    vocab = _vocab_from_sentences(sentences, config.min_count)

    rng = np.random.default_rng(config.seed)
    vsize = len(vocab)
    syn0 = ((rng.random((vsize, EMBED_DIM)) - 0.5) / EMBED_DIM).astype(np.float64)
    syn1 = np.zeros((vsize, EMBED_DIM), dtype=np.float64)
    cumdist = _noise_cumdist(vocab)

    ids_per_sentence = [
        np.array([vocab.id_for(t) for t in sent], dtype=np.int64)
        for sent in sentences
        if sent
    ]
    total_words = sum(len(s) for s in ids_per_sentence)
    planned = max(1, config.epochs * total_words)
    processed = 0

    for _epoch in range(config.epochs):
        for ids in ids_per_sentence:
            n = len(ids)
            for pos in range(n):
                alpha = config.lr * max(_MIN_LR_FRACTION, 1.0 - processed / planned)
                processed += 1
                center = ids[pos]
                shrink = int(rng.integers(1, config.window + 1))
                lo = max(0, pos - shrink)
                hi = min(n, pos + shrink + 1)
                for cpos in range(lo, hi):
                    if cpos == pos:
                        continue
                    context = ids[cpos]
                    _sgns_update(syn0, syn1, center, context,
                                 config.negatives, cumdist, rng, alpha)

    return EmbeddingTable(vocab, syn0.astype(np.float32))


def _sgns_update(syn0, syn1, center, context, negatives, cumdist, rng, alpha) -> None:
    # one positive (the true context) plus k noise targets
    targets = np.empty(negatives + 1, dtype=np.int64)
    labels = np.zeros(negatives + 1, dtype=np.float64)
    targets[0] = context
    labels[0] = 1.0
    draws = rng.random(negatives)
    for i, u in enumerate(draws):
        t = int(np.searchsorted(cumdist, u, side="right"))
        if t == context:
            t = (t + 1) % len(cumdist)
        targets[i + 1] = t
    v = syn0[center]
    out = syn1[targets]                       # (k+1, dim)
    f = 1.0 / (1.0 + np.exp(-out @ v))        # sigmoid scores
    g = (labels - f) * alpha                  # (k+1,)
    dv = g @ out
    syn1[targets] += np.outer(g, v)
    syn0[center] += dv


# --- serialization ------------------------------------------------------


def save_table(table: EmbeddingTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(struct.pack("<II", len(table.vocab), EMBED_DIM))
        for token in table.vocab.tokens:
            raw = token.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(table.matrix, dtype="<f4").tobytes())


def load_table(path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(EMBED_MAGIC)] != EMBED_MAGIC:
        raise FormatError(f"bad magic in embedding file {path}")
    off = len(EMBED_MAGIC)
    try:
        vsize, dim = struct.unpack_from("<II", data, off)
    except struct.error as exc:
        raise FormatError(f"truncated embedding file {path}") from exc
    off += 8
    if dim != EMBED_DIM:
        raise FormatError(f"embedding dim {dim} != {EMBED_DIM} in {path}")
    tokens = []
    try:
        for _ in range(vsize):
            (tlen,) = struct.unpack_from("<I", data, off)
            off += 4
            if off + tlen > len(data):
                raise FormatError(f"truncated embedding file {path}")
            tokens.append(data[off : off + tlen].decode("utf-8"))
            off += tlen
    except struct.error as exc:
        raise FormatError(f"truncated embedding file {path}") from exc
    need = vsize * EMBED_DIM * 4
    if len(data) - off < need:
        raise FormatError(f"truncated embedding file {path}")
    if len(data) - off > need:
        raise FormatError(f"trailing bytes in embedding file {path}")
    matrix = np.frombuffer(data[off : off + need], dtype="<f4").reshape(vsize, EMBED_DIM)
    vocab = Vocabulary(tokens, [0] * vsize)
    return EmbeddingTable(vocab, matrix.copy())
