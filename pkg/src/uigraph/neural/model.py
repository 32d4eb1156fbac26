"""Toy autoregressive HTML decoder conditioned on vision and graph context.

Byte-level vocabulary (256 byte values plus six special tokens), learned
positional embeddings, and per-layer fusion of resampled vision tokens
and GCN node embeddings into the text stream via gated cross-attention.
Training is plain full-batch gradient descent with a fixed step size, so
runs are bitwise reproducible for a given seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..components import FEATURE_DIM, Component, feature_matrix
from ..errors import (
    CheckpointError,
    InvalidInputError,
    NumericError,
    PipelineError,
    VocabularyError,
)
from ..pagegraph import build_graph, normalized_adjacency
from ..raster import Raster
from . import autodiff as ad
from .autodiff import AutodiffTape, Tensor
from .kernels import GcaBlock, ResamplerBlock, attention, fusion_layer, gcn_forward, layer_norm, resample

N_BYTES = 256
TOK_GRAPH = 256
TOK_IMAGE = 257
TOK_HTML_OPEN = 258
TOK_HTML_CLOSE = 259
TOK_SOS = 260
TOK_PAD = 261
VOCAB_SIZE = 262

SPECIAL_TOKENS = {
    TOK_GRAPH: "<graph>",
    TOK_IMAGE: "<image>",
    TOK_HTML_OPEN: "<html>",
    TOK_HTML_CLOSE: "</html>",
    TOK_SOS: "<sos>",
    TOK_PAD: "<pad>",
}

PATCH_GRID = 8


@dataclass
class ModelConfig:
    d_model: int = 64
    n_fusion_layers: int = 1
    n_decoder_layers: int = 1
    n_latents: int = 64
    n_heads: int = 1
    gcn_layers: int = 2
    max_seq_len: int = 256
    seed: int = 0

    def __post_init__(self):
        for name in ("d_model", "n_fusion_layers", "n_decoder_layers", "n_latents",
                     "n_heads", "gcn_layers", "max_seq_len"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"config {name} must be positive")
        if self.n_fusion_layers > self.n_decoder_layers:
            raise InvalidInputError("cannot have more fusion layers than decoder layers")
        if self.d_model % self.n_heads:
            raise InvalidInputError("n_heads must divide d_model")

    @property
    def vocab_size(self) -> int:
        return VOCAB_SIZE


def encode_bytes(text: str) -> list[int]:
    return list(text.encode("utf-8"))


def detokenize(token_ids: list[int]) -> str:
    payload = bytes(t for t in token_ids if t < N_BYTES)
    return payload.decode("utf-8", errors="replace")


def build_prompt(html_tokens: list[int], mode: str) -> list[int]:
    """Assemble the decoder token sequence.

    train: [<graph>, <image>, <html>, ...content..., </html>, <sos>], not
    duplicating enclosing tags already present. infer: the three-token
    prefix [<graph>, <image>, <html>] that seeds generation.
    """
    if mode not in ("train", "infer"):
        raise InvalidInputError(f"unknown prompt mode {mode!r}")
    for t in html_tokens:
        if not 0 <= t < VOCAB_SIZE:
            raise VocabularyError(f"token id {t} outside vocabulary of {VOCAB_SIZE}")
    if mode == "infer":
        return [TOK_GRAPH, TOK_IMAGE, TOK_HTML_OPEN]
    body = list(html_tokens)
    while body and body[0] in (TOK_GRAPH, TOK_IMAGE):
        body = body[1:]
    if body and body[-1] == TOK_SOS:
        body = body[:-1]
    if not (body and body[0] == TOK_HTML_OPEN and body[-1] == TOK_HTML_CLOSE):
        body = [TOK_HTML_OPEN, *body, TOK_HTML_CLOSE]
    return [TOK_GRAPH, TOK_IMAGE, *body, TOK_SOS]


def patch_means(screenshot: Raster, grid: int = PATCH_GRID) -> np.ndarray:
    """Mean RGB of each cell of a grid x grid partition, flattened row-major."""
    out = np.zeros((grid * grid, 3), dtype=np.float64)
    for gy in range(grid):
        y0, y1 = gy * screenshot.height // grid, (gy + 1) * screenshot.height // grid
        for gx in range(grid):
            x0, x1 = gx * screenshot.width // grid, (gx + 1) * screenshot.width // grid
            cell = screenshot.pixels[y0:max(y1, y0 + 1), x0:max(x1, x0 + 1)]
            out[gy * grid + gx] = cell.reshape(-1, 3).mean(axis=0)
    return out


@dataclass
class DecoderLayer:
    ln1_gamma: Tensor
    ln1_beta: Tensor
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    w1: Tensor
    w2: Tensor

    @classmethod
    def init(cls, d: int, rng: np.random.Generator) -> "DecoderLayer":
        scale = 1.0 / np.sqrt(d)

        def w(rows, cols):
            return Tensor(rng.normal(0.0, scale, size=(rows, cols)), requires_grad=True)

        return cls(
            ln1_gamma=Tensor(np.ones(d), requires_grad=True),
            ln1_beta=Tensor(np.zeros(d), requires_grad=True),
            wq=w(d, d), wk=w(d, d), wv=w(d, d), wo=w(d, d),
            ln2_gamma=Tensor(np.ones(d), requires_grad=True),
            ln2_beta=Tensor(np.zeros(d), requires_grad=True),
            w1=w(d, 4 * d), w2=w(4 * d, d),
        )

    def params(self) -> list[Tensor]:
        return [self.ln1_gamma, self.ln1_beta, self.wq, self.wk, self.wv, self.wo,
                self.ln2_gamma, self.ln2_beta, self.w1, self.w2]


class Model:
    """All parameters plus the forward pass. Single-writer during training."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d = config.d_model
        scale = 1.0 / np.sqrt(d)

        def w(rows, cols, s=scale):
            return Tensor(rng.normal(0.0, s, size=(rows, cols)), requires_grad=True)

        self.tok_emb = w(VOCAB_SIZE, d, s=0.5)
        self.pos_emb = w(config.max_seq_len, d, s=0.5)
        self.w_vis = w(3, d, s=1.0)
        self.gcn_weights = [w(FEATURE_DIM if i == 0 else d, d, s=1.0)
                            for i in range(config.gcn_layers)]
        self.latents = w(config.n_latents, d, s=1.0)
        self.resampler = ResamplerBlock.init(d, rng)
        self.vision_blocks = [GcaBlock.init(d, rng) for _ in range(config.n_fusion_layers)]
        self.graph_blocks = [GcaBlock.init(d, rng) for _ in range(config.n_fusion_layers)]
        self.decoder_layers = [DecoderLayer.init(d, rng) for _ in range(config.n_decoder_layers)]
        self.lnf_gamma = Tensor(np.ones(d), requires_grad=True)
        self.lnf_beta = Tensor(np.zeros(d), requires_grad=True)
        self.w_out = w(d, VOCAB_SIZE)

    # --- parameter bookkeeping ---

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {
            "tok_emb": self.tok_emb,
            "pos_emb": self.pos_emb,
            "w_vis": self.w_vis,
            "lnf_gamma": self.lnf_gamma,
            "lnf_beta": self.lnf_beta,
            "w_out": self.w_out,
            "latents": self.latents,
        }
        for i, t in enumerate(self.gcn_weights):
            out[f"gcn.{i}"] = t
        for prefix, block in (("resampler", self.resampler),):
            for fname, t in zip(("wq", "wk", "wv", "wo", "w1", "w2"), block.params()):
                out[f"{prefix}.{fname}"] = t
        gca_fields = ("wq", "wk", "wv", "wo", "w1", "w2",
                      "ln_gamma", "ln_beta", "g_attn", "g_ff")
        for i, block in enumerate(self.vision_blocks):
            for fname, t in zip(gca_fields, block.params()):
                out[f"fusion.{i}.vision.{fname}"] = t
        for i, block in enumerate(self.graph_blocks):
            for fname, t in zip(gca_fields, block.params()):
                out[f"fusion.{i}.graph.{fname}"] = t
        dec_fields = ("ln1_gamma", "ln1_beta", "wq", "wk", "wv", "wo",
                      "ln2_gamma", "ln2_beta", "w1", "w2")
        for i, layer in enumerate(self.decoder_layers):
            for fname, t in zip(dec_fields, layer.params()):
                out[f"decoder.{i}.{fname}"] = t
        return out

    def params(self) -> list[Tensor]:
        return list(self.named_params().values())

    # --- encoders ---

    def encode_vision(self, patch_features: np.ndarray) -> Tensor:
        """Project grid patch means to model width and resample to latents."""
        feats = Tensor(np.asarray(patch_features, dtype=np.float64))
        tokens = ad.matmul(feats, self.w_vis)
        return resample(tokens, self.latents, self.resampler)

    def encode_graph(
        self, components: list[Component], page_w: float, page_h: float
    ) -> Tensor:
        """GCN over the page graph; empty pages use one zero sentinel node."""
        if components:
            feats = feature_matrix(components, page_w, page_h)
            adj = normalized_adjacency(build_graph(components))
        else:
            feats = np.zeros((1, FEATURE_DIM))
            adj = np.ones((1, 1))
        return gcn_forward(Tensor(feats), Tensor(adj), self.gcn_weights)

    # --- decoding ---

    def forward(self, token_ids: list[int], x_vision: Tensor, z_graph: Tensor) -> Tensor:
        """Logits for every position of the token sequence."""
        n = len(token_ids)
        if n == 0:
            raise InvalidInputError("empty token sequence")
        if n > self.config.max_seq_len:
            raise InvalidInputError(
                f"sequence length {n} exceeds max_seq_len {self.config.max_seq_len}"
            )
        for t in token_ids:
            if not 0 <= t < VOCAB_SIZE:
                raise VocabularyError(f"token id {t} outside vocabulary")
        e = ad.add(
            ad.gather_rows(self.tok_emb, token_ids),
            ad.gather_rows(self.pos_emb, list(range(n))),
        )
        mask = np.triu(np.full((n, n), -1e30), k=1)
        for i, layer in enumerate(self.decoder_layers):
            if i < self.config.n_fusion_layers:
                e = fusion_layer(
                    x_vision, z_graph, e, self.vision_blocks[i], self.graph_blocks[i],
                    n_heads=self.config.n_heads,
                )
            a = layer_norm(e, layer.ln1_gamma, layer.ln1_beta)
            attn = attention(
                ad.matmul(a, layer.wq),
                ad.matmul(a, layer.wk),
                ad.matmul(a, layer.wv),
                mask=mask,
                n_heads=self.config.n_heads,
            )
            e = ad.add(e, ad.matmul(attn, layer.wo))
            h = layer_norm(e, layer.ln2_gamma, layer.ln2_beta)
            e = ad.add(e, ad.matmul(ad.relu(ad.matmul(h, layer.w1)), layer.w2))
        return ad.matmul(layer_norm(e, self.lnf_gamma, self.lnf_beta), self.w_out)


@dataclass
class DecodeResult:
    tokens: list[int]
    truncated: bool

    @property
    def html(self) -> str:
        return detokenize(self.tokens)


def decode_step(model: Model, x_vision: Tensor, z_graph: Tensor, tokens: list[int]) -> int:
    """Next token id under greedy argmax for the given prefix."""
    if not tokens:
        raise InvalidInputError("prompt must not be empty")
    logits = model.forward(tokens, x_vision, z_graph)
    return int(np.argmax(logits.data[-1]))


def greedy_decode(
    model: Model,
    x_vision: Tensor,
    z_graph: Tensor,
    prompt: list[int],
    max_len: int | None = None,
) -> DecodeResult:
    """Argmax decoding from the prompt until <sos> or the length cap.

    Returns the full sequence including the prompt; truncated is set when
    the cap stopped generation before the terminator. Deterministic for
    fixed weights and inputs.
    """
    if not prompt:
        raise InvalidInputError("prompt must not be empty")
    cap = max_len if max_len is not None else model.config.max_seq_len
    tokens = list(prompt)
    while len(tokens) < cap:
        next_id = decode_step(model, x_vision, z_graph, tokens)
        tokens.append(next_id)
        if next_id == TOK_SOS:
            return DecodeResult(tokens, truncated=False)
    return DecodeResult(tokens, truncated=tokens[-1] != TOK_SOS)


# --- toy training ---


@dataclass
class TrainSample:
    """One (page annotations, screenshot patches, target tokens) triple."""

    components: list[Component]
    page_w: float
    page_h: float
    patch_features: np.ndarray  # (grid*grid, 3)
    target_tokens: list[int] = field(repr=False, default_factory=list)


def train_toy(
    samples: list[TrainSample],
    config: ModelConfig,
    steps: int,
    lr: float = 1e-2,
) -> tuple[Model, list[float]]:
    """Full-batch gradient descent on next-token cross-entropy.

    Returns the trained model and a loss curve of steps+1 entries: the
    loss before each update plus the final loss. Identical seeds and
    inputs give bitwise-identical curves.
    """
    if not samples:
        raise InvalidInputError("need at least one training sample")
    if len(samples) > 16:
        raise InvalidInputError("toy trainer accepts at most 16 samples")
    if config.d_model > 64:
        raise InvalidInputError("toy trainer is limited to d_model <= 64")
    model = Model(config)
    sequences = [build_prompt(s.target_tokens, "train") for s in samples]
    for seq in sequences:
        if len(seq) > config.max_seq_len:
            raise InvalidInputError(
                f"training sequence of {len(seq)} tokens exceeds max_seq_len"
            )
    params = model.params()
    losses: list[float] = []
    for step in range(steps + 1):
        for p in params:
            p.zero_grad()
        with AutodiffTape() as tape:
            total = None
            for sample, seq in zip(samples, sequences):
                x = model.encode_vision(sample.patch_features)
                z = model.encode_graph(sample.components, sample.page_w, sample.page_h)
                logits = model.forward(seq[:-1], x, z)
                ce = ad.cross_entropy(logits, seq[1:])
                total = ce if total is None else ad.add(total, ce)
            loss = ad.mul(total, 1.0 / len(samples))
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at step {step}")
        losses.append(value)
        if step == steps:
            break
        tape.backward(loss)
        for p in params:
            if p.grad is not None:
                p.data -= lr * p.grad
    return model, losses


def run_inference_pipeline(
    components: list[Component],
    page_w: float,
    page_h: float,
    screenshot: Raster,
    model: Model,
    max_len: int | None = None,
) -> str:
    """Three-stage generation: build the page graph, seed the prompt, then
    encode both modalities and greedy-decode with fusion."""
    try:
        z_graph = model.encode_graph(components, page_w, page_h)
    except Exception as exc:
        raise PipelineError("graph", exc) from exc
    try:
        prompt = build_prompt([], "infer")
    except Exception as exc:  # pragma: no cover - static prompt cannot fail
        raise PipelineError("prompt", exc) from exc
    try:
        x_vision = model.encode_vision(patch_means(screenshot))
        result = greedy_decode(model, x_vision, z_graph, prompt, max_len=max_len)
    except Exception as exc:
        raise PipelineError("decode", exc) from exc
    return result.html


# --- checkpoints ---

CHECKPOINT_VERSION = 1


def save_checkpoint(model: Model, path) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "weights": {
            name: {"shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in model.named_params().items()
        },
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path, config: ModelConfig | None = None) -> Model:
    """Restore a model; a supplied config must match the stored one."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        version = doc["format_version"]
        stored = ModelConfig(**doc["config"])
        weights = doc["weights"]
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if config is not None and asdict(config) != asdict(stored):
        raise CheckpointError(
            f"checkpoint config {asdict(stored)} does not match requested {asdict(config)}"
        )
    model = Model(stored)
    named = model.named_params()
    if set(weights) != set(named):
        missing = sorted(set(named) ^ set(weights))
        raise CheckpointError(f"checkpoint weight names do not match model: {missing}")
    for name, t in named.items():
        rec = weights[name]
        arr = np.asarray(rec["data"], dtype=np.float64)
        if list(t.data.shape) != list(rec["shape"]) or arr.size != t.data.size:
            raise CheckpointError(
                f"weight {name} shape {rec['shape']} does not match {list(t.data.shape)}"
            )
        t.data = arr.reshape(t.data.shape)
    return model
