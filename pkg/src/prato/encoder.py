"""One transformer encoder block: multi-head self-attention plus feed-forward.

The default wiring follows the fused form with a single residual
spanning both sublayers:

    out = ffn(LN(attn(LN(x)))) + x

``residual="sublayer"`` switches to the conventional two-residual
layout (x + attn(LN(x)), then + ffn(LN(.))). Attention is softmax(Q K^T
/ sqrt(d_h)) V per head, heads concatenated and output-projected; the
feed-forward uses a GELU between a 4x expansion and contraction. No
bias terms.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ShapeError
from .numerics import as_matrix, gaussian_matrix, layer_norm, make_rng, softmax_rows
from .numerics import load_matrix, save_matrix
from .tokens import TokenGrid


@dataclass
class BlockWeights:
    """Per-head QKV projections, output projection, FFN, and LN affine pairs."""

    wq: list  # h matrices, each (width, d_h)
    wk: list
    wv: list
    wo: np.ndarray  # (width, width)
    ffn_in: np.ndarray  # (width, 4*width)
    ffn_out: np.ndarray  # (4*width, width)
    ln1_gamma: np.ndarray = field(default=None)
    ln1_beta: np.ndarray = field(default=None)
    ln2_gamma: np.ndarray = field(default=None)
    ln2_beta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.wq = [as_matrix(w, "wq") for w in self.wq]
        self.wk = [as_matrix(w, "wk") for w in self.wk]
        self.wv = [as_matrix(w, "wv") for w in self.wv]
        self.wo = as_matrix(self.wo, "wo")
        self.ffn_in = as_matrix(self.ffn_in, "ffn_in")
        self.ffn_out = as_matrix(self.ffn_out, "ffn_out")
        width = self.wo.shape[0]
        h = len(self.wq)
        if not (len(self.wk) == len(self.wv) == h) or h == 0:
            raise ShapeError("wq/wk/wv must hold the same nonzero number of heads")
        d_h = self.wq[0].shape[1]
        if h * d_h != width:
            raise ShapeError(f"{h} heads of width {d_h} do not tile embed width {width}")
        for w in (*self.wq, *self.wk, *self.wv):
            if w.shape != (width, d_h):
                raise ShapeError(f"head projection shape {w.shape} != ({width}, {d_h})")
        if self.ffn_in.shape != (width, 4 * width) or self.ffn_out.shape != (4 * width, width):
            raise ShapeError(
                f"ffn shapes {self.ffn_in.shape}/{self.ffn_out.shape} do not match "
                f"({width}, {4 * width})/({4 * width}, {width})"
            )
        ones = np.ones(width)
        zeros = np.zeros(width)
        if self.ln1_gamma is None:
            self.ln1_gamma = ones.copy()
        if self.ln1_beta is None:
            self.ln1_beta = zeros.copy()
        if self.ln2_gamma is None:
            self.ln2_gamma = ones.copy()
        if self.ln2_beta is None:
            self.ln2_beta = zeros.copy()

    @property
    def heads(self) -> int:
        return len(self.wq)

    @property
    def width(self) -> int:
        return self.wo.shape[0]


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def init_block_weights(width: int, heads: int, seed: int = 0, std: float = 0.02) -> BlockWeights:
    """Seeded Gaussian initialization, LN affine at identity."""
    if width % heads != 0:
        raise ShapeError(f"embed width {width} is not divisible by {heads} heads")
    d_h = width // heads
    rng = make_rng(seed)
    draw = lambda r, c: gaussian_matrix(rng, r, c, std)
    return BlockWeights(
        wq=[draw(width, d_h) for _ in range(heads)],
        wk=[draw(width, d_h) for _ in range(heads)],
        wv=[draw(width, d_h) for _ in range(heads)],
        wo=draw(width, width),
        ffn_in=draw(width, 4 * width),
        ffn_out=draw(4 * width, width),
    )


def zero_block_weights(width: int, heads: int) -> BlockWeights:
    d_h = width // heads
    z = lambda r, c: np.zeros((r, c))
    return BlockWeights(
        wq=[z(width, d_h) for _ in range(heads)],
        wk=[z(width, d_h) for _ in range(heads)],
        wv=[z(width, d_h) for _ in range(heads)],
        wo=z(width, width),
        ffn_in=z(width, 4 * width),
        ffn_out=z(4 * width, width),
    )


def _attention(x: np.ndarray, w: BlockWeights) -> np.ndarray:
    d_h = x.shape[1] // w.heads
    scale = 1.0 / np.sqrt(d_h)
    outs = []
    for h in range(w.heads):
        q = x @ w.wq[h]
        k = x @ w.wk[h]
        v = x @ w.wv[h]
        attn = softmax_rows(q @ k.T * scale)
        outs.append(attn @ v)
    return np.concatenate(outs, axis=1) @ w.wo


def encode_tokens(
    x: np.ndarray,
    w: BlockWeights,
    residual: str = "block",
    ln_eps: float = 1e-6,
) -> np.ndarray:
    """Run one encoder block over a raw (n, width) token matrix."""
    x = as_matrix(x, "tokens")
    if x.shape[1] != w.width:
        raise ShapeError(f"token width {x.shape[1]} does not match block width {w.width}")
    if residual == "block":
        inner = _attention(layer_norm(x, w.ln1_gamma, w.ln1_beta, ln_eps), w)
        mixed = layer_norm(inner, w.ln2_gamma, w.ln2_beta, ln_eps)
        return gelu(mixed @ w.ffn_in) @ w.ffn_out + x
    if residual == "sublayer":
        x = x + _attention(layer_norm(x, w.ln1_gamma, w.ln1_beta, ln_eps), w)
        h = layer_norm(x, w.ln2_gamma, w.ln2_beta, ln_eps)
        return x + gelu(h @ w.ffn_in) @ w.ffn_out
    raise ShapeError(f"unknown residual mode {residual!r}")


def encode_block(
    grid: TokenGrid,
    w: BlockWeights,
    residual: str = "block",
    ln_eps: float = 1e-6,
) -> TokenGrid:
    """Encoder block over a TokenGrid; grid geometry is untouched."""
    out = encode_tokens(grid.tokens, w, residual=residual, ln_eps=ln_eps)
    return TokenGrid(
        tokens=out,
        grid_h=grid.grid_h,
        grid_w=grid.grid_w,
        patch_size=grid.patch_size,
        token_index_map=grid.token_index_map,
    )


def attention_map(grid: TokenGrid, w: BlockWeights, head: int, ln_eps: float = 1e-6) -> np.ndarray:
    """Row-stochastic (Z, Z) attention matrix of one head, for inspection."""
    if not 0 <= head < w.heads:
        raise IndexError(f"head {head} out of range for {w.heads} heads")
    x = layer_norm(grid.tokens, w.ln1_gamma, w.ln1_beta, ln_eps)
    d_h = x.shape[1] // w.heads
    q = x @ w.wq[head]
    k = x @ w.wk[head]
    return softmax_rows(q @ k.T / np.sqrt(d_h))


_PARAM_LISTS = ("wq", "wk", "wv")
_PARAM_MATS = ("wo", "ffn_in", "ffn_out")
_PARAM_VECS = ("ln1_gamma", "ln1_beta", "ln2_gamma", "ln2_beta")


def save_block_weights(w: BlockWeights, out_dir) -> None:
    """One binary matrix file per parameter plus a manifest of names and shapes."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"heads": w.heads, "width": w.width, "params": {}}

    def _put(name, mat):
        mat = np.atleast_2d(mat)
        save_matrix(os.path.join(out_dir, name + ".prtm"), mat)
        manifest["params"][name] = list(mat.shape)

    for attr in _PARAM_LISTS:
        for h, mat in enumerate(getattr(w, attr)):
            _put(f"{attr}{h}", mat)
    for attr in _PARAM_MATS:
        _put(attr, getattr(w, attr))
    for attr in _PARAM_VECS:
        _put(attr, getattr(w, attr))
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def load_block_weights(in_dir) -> BlockWeights:
    with open(os.path.join(in_dir, "manifest.json")) as f:
        manifest = json.load(f)
    heads = manifest["heads"]

    def _get(name):
        return load_matrix(os.path.join(in_dir, name + ".prtm"))

    kwargs = {attr: [_get(f"{attr}{h}") for h in range(heads)] for attr in _PARAM_LISTS}
    kwargs.update({attr: _get(attr) for attr in _PARAM_MATS})
    kwargs.update({attr: _get(attr).ravel() for attr in _PARAM_VECS})
    return BlockWeights(**kwargs)
