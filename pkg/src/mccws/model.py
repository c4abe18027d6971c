"""The unified segmentation network.

Input is a criterion-token-augmented character id sequence. A trainable
transformer encoder produces hidden states H (row 0 belongs to the criterion
token); character rows are blended with bigram embeddings through a sigmoid
fusion gate, contextualized by one more multi-head attention block, and
decoded per position into BMES label logits. The criterion-token row feeds
an auxiliary criterion classifier so criterion information survives the
forward pass.

Weight matrices are stored [out, in]; activations are row-major
[batch, position, features].
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import corpus as cp
from .autodiff import (
    Tensor, cross_entropy, dropout, embedding_lookup, get_dtype, layer_norm,
    no_grad, parameter, softmax,
)
from .errors import ConfigError, DataError

NEG_INF = -1e9


@dataclass
class ModelConfig:
    num_criteria: int
    d_h: int = 64
    d_e: int = 32
    encoder_layers: int = 2
    heads: int = 4
    d_ff: int = 256
    max_len: int = 128
    dropout_p: float = 0.1
    label_count: int = 4
    use_bigram: bool = True

    def __post_init__(self):
        for name in ("num_criteria", "d_h", "d_e", "encoder_layers", "heads", "d_ff", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_h % self.heads:
            raise ConfigError(f"d_h={self.d_h} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must be in [0, 1)")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ForwardOutput:
    """Per-batch forward results; tensors keep their tape links."""

    hidden: Tensor          # [B, L+1, d_h]
    fused: Tensor           # [B, L, d_h]
    contextual: Tensor      # [B, L, d_h]
    label_logits: Tensor    # [B, L, label_count]
    criterion_logits: Tensor  # [B, num_criteria]
    gate_means: np.ndarray  # [B, L], mean gate activation per position
    attn: dict = field(default_factory=dict)  # optional attention probs


def param_shapes(config: ModelConfig, n_unigrams: int, n_bigrams: int) -> dict[str, tuple]:
    """Stable name -> shape map for every trainable tensor."""
    d_h, d_e = config.d_h, config.d_e
    shapes: dict[str, tuple] = {
        "tok_emb": (n_unigrams, d_h),
        "pos_emb": (config.max_len, d_h),
    }
    def attn_block(prefix):
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{w}"] = (d_h, d_h)
        for b in ("bq", "bk", "bv", "bo"):
            shapes[f"{prefix}.{b}"] = (d_h,)
    for i in range(config.encoder_layers):
        attn_block(f"enc{i}.attn")
        shapes[f"enc{i}.ln1.gain"] = (d_h,)
        shapes[f"enc{i}.ln1.bias"] = (d_h,)
        shapes[f"enc{i}.ffn.w1"] = (config.d_ff, d_h)
        shapes[f"enc{i}.ffn.b1"] = (config.d_ff,)
        shapes[f"enc{i}.ffn.w2"] = (d_h, config.d_ff)
        shapes[f"enc{i}.ffn.b2"] = (d_h,)
        shapes[f"enc{i}.ln2.gain"] = (d_h,)
        shapes[f"enc{i}.ln2.bias"] = (d_h,)
    shapes["fuse.w_h"] = (d_h, d_h)
    shapes["fuse.b_h"] = (d_h,)
    if config.use_bigram:
        shapes["bigram_emb"] = (n_bigrams, d_e)
        shapes["fuse.w_e"] = (d_h, d_e)
        shapes["fuse.b_e"] = (d_h,)
        shapes["fuse.w_fh"] = (d_h, d_h)
        shapes["fuse.w_fe"] = (d_h, d_e)
        shapes["fuse.b_f"] = (d_h,)
    attn_block("ctx.attn")
    shapes["ctx.ln.gain"] = (d_h,)
    shapes["ctx.ln.bias"] = (d_h,)
    shapes["dec.w_o"] = (config.label_count, d_h)
    shapes["dec.b_o"] = (config.label_count,)
    shapes["cls.w_c"] = (config.num_criteria, d_h)
    shapes["cls.b_c"] = (config.num_criteria,)
    return shapes


def init_params(config: ModelConfig, n_unigrams: int, n_bigrams: int,
                rng: np.random.Generator) -> dict[str, Tensor]:
    """Truncated-normal (std 0.02, clipped at 2 sigma) for matrices and
    embeddings, ones for layer-norm gains, zeros for every bias."""
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(config, n_unigrams, n_bigrams).items():
        if name.endswith(".gain"):
            data = np.ones(shape)
        elif len(shape) >= 2:
            data = np.clip(rng.normal(0.0, 0.02, size=shape), -0.04, 0.04)
        else:
            data = np.zeros(shape)
        params[name] = parameter(data)
    return params


def _linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = x.matmul(w.transpose())
    return y + b if b is not None else y


class Model:
    """Configuration + parameters + the forward pieces."""

    def __init__(self, config: ModelConfig, n_unigrams: int, n_bigrams: int,
                 params: dict[str, Tensor] | None = None, seed: int = 0):
        self.config = config
        self.n_unigrams = n_unigrams
        self.n_bigrams = n_bigrams
        if params is None:
            from .autodiff import make_rng
            params = init_params(config, n_unigrams, n_bigrams, make_rng(seed))
        self.params = params

    @classmethod
    def for_vocab(cls, config: ModelConfig, vocab: cp.Vocab, seed: int = 0) -> "Model":
        if config.num_criteria != vocab.num_criteria:
            raise ConfigError(
                f"config expects {config.num_criteria} criteria, vocab has {vocab.num_criteria}")
        return cls(config, len(vocab.unigrams), len(vocab.bigrams), seed=seed)

    # -- attention ----------------------------------------------------------

    def _mha(self, x: Tensor, prefix: str, key_valid: np.ndarray,
             training: bool, rng) -> tuple[Tensor, Tensor]:
        """Multi-head self-attention over x [B, L, d_h]; key_valid [B, L]
        marks positions allowed to be attended to."""
        p = self.params
        B, L, d = x.shape
        H = self.config.heads
        dk = d // H

        def split_heads(t):
            return t.reshape(B, L, H, dk).transpose(0, 2, 1, 3)  # [B,H,L,dk]

        q = split_heads(_linear(x, p[f"{prefix}.wq"], p[f"{prefix}.bq"]))
        k = split_heads(_linear(x, p[f"{prefix}.wk"], p[f"{prefix}.bk"]))
        v = split_heads(_linear(x, p[f"{prefix}.wv"], p[f"{prefix}.bv"]))

        scores = q.matmul(k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dk))  # [B,H,L,L]
        bias = np.where(key_valid, 0.0, NEG_INF).astype(get_dtype())
        mask = Tensor(np.broadcast_to(bias[:, None, None, :], (B, H, L, L)))
        attn = softmax(scores + mask, axis=-1)
        ctx = attn.matmul(v).transpose(0, 2, 1, 3).reshape(B, L, d)
        out = _linear(ctx, p[f"{prefix}.wo"], p[f"{prefix}.bo"])
        return out, attn

    def _drop(self, x: Tensor, training: bool, rng) -> Tensor:
        return dropout(x, self.config.dropout_p, training, rng)

    # -- encoder ---------------------------------------------------------------

    def encode_batch(self, ids: np.ndarray, key_valid: np.ndarray,
                     training: bool = False, rng=None, attn_out: dict | None = None) -> Tensor:
        """Token + position embeddings through the encoder stack.

        ids: [B, L] augmented and padded; key_valid: [B, L] with padding False.
        Returns H [B, L, d_h]; row 0 of every sentence is its criterion token.
        """
        p = self.params
        B, L = ids.shape
        if L > self.config.max_len:
            raise DataError(f"sequence length {L} exceeds max_len {self.config.max_len}")
        tok = embedding_lookup(p["tok_emb"], ids)
        pos = embedding_lookup(p["pos_emb"], np.broadcast_to(np.arange(L), (B, L)))
        h = self._drop(tok + pos, training, rng)
        for i in range(self.config.encoder_layers):
            a, attn = self._mha(h, f"enc{i}.attn", key_valid, training, rng)
            if attn_out is not None:
                attn_out[f"enc{i}"] = attn.data
            h = layer_norm(h + self._drop(a, training, rng),
                           p[f"enc{i}.ln1.gain"], p[f"enc{i}.ln1.bias"])
            f = _linear(_linear(h, p[f"enc{i}.ffn.w1"], p[f"enc{i}.ffn.b1"]).relu(),
                        p[f"enc{i}.ffn.w2"], p[f"enc{i}.ffn.b2"])
            h = layer_norm(h + self._drop(f, training, rng),
                           p[f"enc{i}.ln2.gain"], p[f"enc{i}.ln2.bias"])
        return h

    def encode(self, augmented_ids, training: bool = False, rng=None) -> Tensor:
        """Single-sentence convenience: ids length T+1 -> H [T+1, d_h]."""
        ids = np.asarray(augmented_ids, dtype=np.int64)[None, :]
        valid = np.ones_like(ids, dtype=bool)
        return self.encode_batch(ids, valid, training=training, rng=rng)[0]

    # -- fusion gate -------------------------------------------------------------

    def fuse_batch(self, h: Tensor, e: Tensor | None) -> tuple[Tensor, Tensor | None]:
        """Blend character hidden states with bigram embeddings.

        h: [..., d_h] character rows (criterion row excluded); e: [..., d_e].
        Returns (fused, gate); gate is None when bigrams are disabled.
        """
        p = self.params
        h_proj = _linear(h, p["fuse.w_h"], p["fuse.b_h"]).tanh()
        if not self.config.use_bigram:
            return h_proj, None
        if e is None:
            raise ConfigError("bigram embeddings required when use_bigram is set")
        e_proj = _linear(e, p["fuse.w_e"], p["fuse.b_e"]).tanh()
        gate = (_linear(h, p["fuse.w_fh"]) + _linear(e, p["fuse.w_fe"]) + p["fuse.b_f"]).sigmoid()
        fused = gate * h_proj + (1.0 - gate) * e_proj
        return fused, gate

    def fuse(self, h: Tensor, e: Tensor | None) -> tuple[Tensor, Tensor | None]:
        return self.fuse_batch(h, e)

    # -- contextualizer -------------------------------------------------------------

    def contextualize_batch(self, fused: Tensor, key_valid: np.ndarray,
                            training: bool = False, rng=None,
                            attn_out: dict | None = None) -> Tensor:
        """One attention block with residual and layer norm over the fused
        sequence; no feed-forward of its own."""
        p = self.params
        a, attn = self._mha(fused, "ctx.attn", key_valid, training, rng)
        if attn_out is not None:
            attn_out["ctx"] = attn.data
        return layer_norm(fused + self._drop(a, training, rng),
                          p["ctx.ln.gain"], p["ctx.ln.bias"])

    def contextualize(self, fused: Tensor, training: bool = False, rng=None) -> Tensor:
        t = fused.reshape(1, *fused.shape)
        valid = np.ones((1, fused.shape[0]), dtype=bool)
        return self.contextualize_batch(t, valid, training=training, rng=rng)[0]

    # -- decoders ----------------------------------------------------------------------

    def decode_labels(self, contextual: Tensor) -> Tensor:
        """Per-position logits over the BMES alphabet."""
        return _linear(contextual, self.params["dec.w_o"], self.params["dec.b_o"])

    def classify_criterion(self, hidden: Tensor) -> Tensor:
        """Criterion logits from the criterion-token row (row 0) only."""
        if hidden.ndim == 2:  # single sentence [T+1, d_h]
            return _linear(hidden[0:1, :], self.params["cls.w_c"], self.params["cls.b_c"])[0]
        h0 = hidden[:, 0, :]
        return _linear(h0, self.params["cls.w_c"], self.params["cls.b_c"])

    # -- full forward ----------------------------------------------------------------------

    def forward_batch(self, ids: np.ndarray, bigram_ids: np.ndarray | None,
                      lengths: np.ndarray, training: bool = False, rng=None,
                      collect_attn: bool = False) -> ForwardOutput:
        """ids: [B, L+1] augmented+padded; bigram_ids: [B, L]; lengths: [B]
        true character counts (excluding the criterion token)."""
        B, L1 = ids.shape
        L = L1 - 1
        positions = np.arange(L1)
        key_valid = positions[None, :] < (lengths + 1)[:, None]  # criterion token always valid
        attn_out: dict | None = {} if collect_attn else None
        H = self.encode_batch(ids, key_valid, training=training, rng=rng, attn_out=attn_out)
        h_chars = H[:, 1:, :]
        e = None
        if self.config.use_bigram:
            e = embedding_lookup(self.params["bigram_emb"], np.asarray(bigram_ids, dtype=np.int64))
        fused, gate = self.fuse_batch(h_chars, e)
        char_valid = key_valid[:, 1:]
        O = self.contextualize_batch(fused, char_valid, training=training, rng=rng, attn_out=attn_out)
        label_logits = self.decode_labels(O)
        criterion_logits = self.classify_criterion(H)
        gate_means = gate.data.mean(axis=-1) if gate is not None else np.zeros((B, L))
        return ForwardOutput(hidden=H, fused=fused, contextual=O,
                             label_logits=label_logits, criterion_logits=criterion_logits,
                             gate_means=gate_means, attn=attn_out or {})

    def forward(self, augmented_ids, bigram_ids=None, training: bool = False,
                rng=None, collect_attn: bool = False) -> ForwardOutput:
        """Single-sentence forward; squeezes the batch dim off every output."""
        ids = np.asarray(augmented_ids, dtype=np.int64)[None, :]
        T = ids.shape[1] - 1
        bi = np.asarray(bigram_ids, dtype=np.int64)[None, :] if bigram_ids is not None else None
        out = self.forward_batch(ids, bi, np.array([T]), training=training,
                                 rng=rng, collect_attn=collect_attn)
        return ForwardOutput(
            hidden=out.hidden[0],
            fused=out.fused[0],
            contextual=out.contextual[0],
            label_logits=out.label_logits[0],
            criterion_logits=out.criterion_logits[0],
            gate_means=out.gate_means[0],
            attn=out.attn,
        )

    # -- loss --------------------------------------------------------------------------------

    def loss_batch(self, ids, bigram_ids, lengths, labels, criterion_ids,
                   training: bool = False, rng=None) -> tuple[Tensor, ForwardOutput]:
        """Joint objective: summed per-position label NLL over real positions
        plus criterion NLL, averaged over the batch."""
        B, L1 = ids.shape
        if B == 0:
            raise DataError("empty batch")
        out = self.forward_batch(ids, bigram_ids, lengths, training=training, rng=rng)
        L = L1 - 1
        mask = (np.arange(L)[None, :] < lengths[:, None]).ravel()
        flat_logits = out.label_logits.reshape(B * L, self.config.label_count)
        label_nll = cross_entropy(flat_logits, np.asarray(labels).ravel(), mask=mask, reduction="sum")
        crit_nll = cross_entropy(out.criterion_logits, criterion_ids, reduction="sum")
        return (label_nll + crit_nll) * (1.0 / B), out

    # -- inference ------------------------------------------------------------------------------

    def predict_label_ids(self, sentences: list[cp.Sentence], vocab: cp.Vocab,
                          batch_size: int = 64) -> list[np.ndarray]:
        """Greedy per-position argmax labels for each sentence (no CRF)."""
        preds: list[np.ndarray] = []
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start:start + batch_size]
            ids, bi, lengths, _, _ = pack_batch(chunk, vocab)
            with no_grad():
                out = self.forward_batch(ids, bi, lengths)
            logits = out.label_logits.data
            for j, sent in enumerate(chunk):
                preds.append(np.argmax(logits[j, : len(sent)], axis=-1))
        return preds

    def segment_text(self, text: str, criterion_name: str, vocab: cp.Vocab) -> list[str]:
        """Segment raw text under the named criterion.

        Latin/digit runs are re-emitted verbatim from the original text.
        """
        if criterion_name not in vocab.criteria:
            raise ConfigError(
                f"unknown criterion {criterion_name!r}; registered: {sorted(vocab.criteria)}")
        toks_spans = cp.replace_runs_with_spans(cp.normalize_width(text))
        if not toks_spans:
            return []
        tokens = [t for t, _ in toks_spans]
        if len(tokens) + 1 > self.config.max_len:
            raise DataError(
                f"sentence of {len(tokens)} tokens exceeds max_len {self.config.max_len}")
        cid = vocab.criteria[criterion_name]
        aug = [vocab.criterion_token_id(cid)] + [vocab.uni_id(t) for t in tokens]
        bi = cp.make_bigrams(tokens, vocab)
        with no_grad():
            out = self.forward(aug, bi)
        labels = np.argmax(out.label_logits.data, axis=-1)
        words = []
        for s, e in cp.decode_bmes(labels.tolist()):
            lo = toks_spans[s][1][0]
            hi = toks_spans[e - 1][1][1]
            words.append(text[lo:hi])
        return words


def pack_batch(sentences: list[cp.Sentence], vocab: cp.Vocab):
    """Pad a list of sentences into dense arrays.

    Returns (ids [B, L+1], bigram_ids [B, L], lengths [B], labels [B, L],
    criterion_ids [B]) with zero padding beyond each sentence's length.
    """
    B = len(sentences)
    L = max((len(s) for s in sentences), default=0)
    ids = np.zeros((B, L + 1), dtype=np.int64)
    bi = np.zeros((B, L), dtype=np.int64)
    labels = np.zeros((B, L), dtype=np.int64)
    lengths = np.zeros(B, dtype=np.int64)
    criterion_ids = np.zeros(B, dtype=np.int64)
    for i, sent in enumerate(sentences):
        T = len(sent)
        lengths[i] = T
        criterion_ids[i] = sent.criterion_id
        ids[i, 0] = vocab.criterion_token_id(sent.criterion_id)
        ids[i, 1:T + 1] = sent.chars
        bi[i, :T] = sent.bigrams
        labels[i, :T] = cp.encode_bmes(sent.gold_spans, T)
    return ids, bi, lengths, labels, criterion_ids
