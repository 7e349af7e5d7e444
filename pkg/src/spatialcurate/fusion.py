"""Reference forward math for geometric token fusion and the embodied sequence layout.

Everything here is a deterministic, dimension-generic forward pass over
plain float matrices (rows = tokens, cols = features); weights are inputs,
never learned state. A neural implementation can therefore be validated
token-for-token against this module. GELU uses the exact erf form
``0.5 * x * (1 + erf(x / sqrt(2)))`` so cross-implementation comparisons
share one convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import erf

from . import _kernels
from .errors import DataError
from .types import default_head_count

# Reference dimensions of the concrete fusion stack these operations model.
SEMANTIC_DIM = 8192       # 2D semantic token width
GEOMETRY_DIM = 1024       # 3D geometry token width (dual-stream encoders emit 2x this)
GEOMETRY_TOKENS = 1369    # 37 x 37 patch grid
HEAD_DIM = 128            # channels per attention head
LATENT_REASONING_TOKENS = 10
COMPACT_CUE_TOKENS = 64
COMPACT_REDUCTION = 8     # compact cue tokens vs. raw modality token budget

RMS_NORM_EPS = 1e-6


def bilinear_resample(grid: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Resample a (T, C, H, W) feature grid to spatial size ``target``.

    Source coordinates use the half-pixel-center convention
    ``src = (i + 0.5) * (in / out) - 0.5`` clamped to the valid range; each
    output pixel blends its four nearest source pixels. A same-size resample
    returns the input exactly.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 4:
        raise ValueError(f"expected a (T, C, H, W) grid, got shape {grid.shape}")
    out_h, out_w = target
    if out_h < 1 or out_w < 1 or min(grid.shape) < 1:
        raise ValueError("all dimensions must be >= 1")
    return _kernels.bilinear(grid, int(out_h), int(out_w))


def rms_norm(x: np.ndarray, gain: np.ndarray, eps: float = RMS_NORM_EPS) -> np.ndarray:
    """Per-row root-mean-square normalization with learned gain:
    ``y = x / sqrt(mean(x^2) + eps) * gain``."""
    x = np.asarray(x, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    if gain.shape != (x.shape[-1],):
        raise ValueError(f"gain length {gain.shape} does not match features {x.shape[-1]}")
    scale = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + eps)
    return x / scale * gain


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU: ``0.5 * x * (1 + erf(x / sqrt(2)))``."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_attention(
    q_tokens: np.ndarray,
    kv_tokens: np.ndarray,
    wq: np.ndarray,
    wk: np.ndarray,
    wv: np.ndarray,
    wo: np.ndarray,
    *,
    n_heads: Optional[int] = None,
    return_weights: bool = False,
) -> Union[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Multi-head scaled dot-product attention of queries over key/value tokens.

    ``q_tokens @ wq`` forms Q and ``kv_tokens @ wk`` / ``kv_tokens @ wv`` form
    K and V; per head the output is ``softmax(Q K^T / sqrt(d_head)) V``, all
    heads concatenated and projected through ``wo``. ``n_heads`` defaults to
    ``max(1, d_model // 128)`` and must divide the model width. With
    ``return_weights=True`` the (n_heads, n_q, n_kv) row-stochastic attention
    weights come back alongside the output.
    """
    q_tokens = np.asarray(q_tokens, dtype=np.float64)
    kv_tokens = np.asarray(kv_tokens, dtype=np.float64)
    wq, wk, wv, wo = (np.asarray(w, dtype=np.float64) for w in (wq, wk, wv, wo))

    if q_tokens.ndim != 2 or kv_tokens.ndim != 2:
        raise ValueError("token matrices must be 2-D (tokens x features)")
    if wq.shape[0] != q_tokens.shape[1]:
        raise ValueError(f"wq rows {wq.shape[0]} != query features {q_tokens.shape[1]}")
    if wk.shape[0] != kv_tokens.shape[1] or wv.shape[0] != kv_tokens.shape[1]:
        raise ValueError("wk/wv rows must match key/value features")
    d_model = wq.shape[1]
    if wk.shape[1] != d_model or wv.shape[1] != d_model:
        raise ValueError("wq, wk, wv must project to the same model width")
    if wo.shape[0] != d_model:
        raise ValueError(f"wo rows {wo.shape[0]} != model width {d_model}")

    heads = n_heads if n_heads is not None else default_head_count(d_model)
    if heads < 1 or d_model % heads != 0:
        raise ValueError(f"head count {heads} must divide model width {d_model}")
    d_head = d_model // heads

    q = q_tokens @ wq
    k = kv_tokens @ wk
    v = kv_tokens @ wv
    n_q, n_kv = q.shape[0], k.shape[0]

    qh = q.reshape(n_q, heads, d_head).transpose(1, 0, 2)
    kh = k.reshape(n_kv, heads, d_head).transpose(1, 0, 2)
    vh = v.reshape(n_kv, heads, d_head).transpose(1, 0, 2)

    logits = qh @ kh.transpose(0, 2, 1) / np.sqrt(d_head)
    weights = _softmax_rows(logits)
    heads_out = weights @ vh
    concat = heads_out.transpose(1, 0, 2).reshape(n_q, d_model)
    out = concat @ wo
    if return_weights:
        return out, weights
    return out


def fuse_residual(e_2d: np.ndarray, attended: np.ndarray) -> np.ndarray:
    """Residual fusion that keeps the original stream intact: ``e_2d + attended``."""
    e_2d = np.asarray(e_2d, dtype=np.float64)
    attended = np.asarray(attended, dtype=np.float64)
    if e_2d.shape != attended.shape:
        raise ValueError(f"shape mismatch: {e_2d.shape} vs {attended.shape}")
    return e_2d + attended


def mlp_project(
    x: np.ndarray, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray
) -> np.ndarray:
    """Two-layer projection with GELU: ``gelu(x @ w1 + b1) @ w2 + b2``."""
    x = np.asarray(x, dtype=np.float64)
    w1, b1, w2, b2 = (np.asarray(a, dtype=np.float64) for a in (w1, b1, w2, b2))
    if x.shape[-1] != w1.shape[0]:
        raise ValueError(f"input features {x.shape[-1]} != w1 rows {w1.shape[0]}")
    if w1.shape[1] != w2.shape[0]:
        raise ValueError(f"hidden width {w1.shape[1]} != w2 rows {w2.shape[0]}")
    if b1.shape != (w1.shape[1],) or b2.shape != (w2.shape[1],):
        raise ValueError("bias shapes must match layer outputs")
    return gelu(x @ w1 + b1) @ w2 + b2


# ---------------------------------------------------------------------------
# Embodied sequence layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    name: str
    kind: str  # "text" | "latent" | "marker" | "modality"
    start: int
    length: int


@dataclass(frozen=True)
class SequenceLayout:
    """Contiguous, non-overlapping segments covering [0, total)."""

    segments: tuple[Segment, ...]
    total: int

    def __post_init__(self) -> None:
        cursor = 0
        for seg in self.segments:
            if seg.start != cursor or seg.length < 0:
                raise ValueError(f"segment {seg.name} breaks contiguity at {cursor}")
            cursor += seg.length
        if cursor != self.total:
            raise ValueError(f"segments cover {cursor} positions, total says {self.total}")
        phy = [s for s in self.segments if s.kind == "marker" and s.name == "phy"]
        if len(phy) != 1:
            raise ValueError(f"expected exactly one phy marker, found {len(phy)}")
        latent = sum(s.length for s in self.segments if s.kind == "latent")
        if latent != LATENT_REASONING_TOKENS:
            raise ValueError(
                f"expected {LATENT_REASONING_TOKENS} latent positions, found {latent}"
            )

    def text_slice(self) -> slice:
        seg = next(s for s in self.segments if s.kind == "text")
        return slice(seg.start, seg.start + seg.length)


def build_eiea_layout(text_len: int, modality_lens: Sequence[int] = ()) -> SequenceLayout:
    """Token layout: text, 10 latent reasoning positions, the phy marker, then
    modality spans separated by mod markers.

    Total length is ``text_len + 10 + 1 + sum(modality_lens) +
    max(0, len(modality_lens) - 1)``.
    """
    if text_len < 1:
        raise ValueError(f"text_len must be >= 1, got {text_len}")
    if any(m < 0 for m in modality_lens):
        raise ValueError(f"modality lengths must be nonnegative, got {list(modality_lens)}")

    segments: list[Segment] = []
    cursor = 0

    def push(name: str, kind: str, length: int) -> None:
        nonlocal cursor
        segments.append(Segment(name=name, kind=kind, start=cursor, length=length))
        cursor += length

    push("text", "text", text_len)
    push("latent", "latent", LATENT_REASONING_TOKENS)
    push("phy", "marker", 1)
    for i, length in enumerate(modality_lens):
        if i > 0:
            push(f"mod_sep_{i - 1}", "marker", 1)
        push(f"modality_{i}", "modality", int(length))

    return SequenceLayout(segments=tuple(segments), total=cursor)


def extract_text_tokens(layout: SequenceLayout, tokens: np.ndarray) -> np.ndarray:
    """Slice out the text-position rows; always exactly ``text_len`` of them."""
    tokens = np.asarray(tokens)
    if tokens.shape[0] != layout.total:
        raise ValueError(
            f"token count {tokens.shape[0]} does not match layout total {layout.total}"
        )
    return tokens[layout.text_slice()]


# ---------------------------------------------------------------------------
# Oracle fixtures
# ---------------------------------------------------------------------------


def _array_to_obj(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _array_from_obj(obj: dict) -> np.ndarray:
    return np.asarray(obj["data"], dtype=np.float64).reshape(obj["shape"])


def write_fixture(
    path: Union[str, Path],
    op: str,
    inputs: dict[str, np.ndarray],
    expected: dict[str, np.ndarray],
    params: Optional[dict] = None,
    tolerance: float = 1e-6,
) -> None:
    payload = {
        "op": op,
        "tolerance": tolerance,
        "params": params or {},
        "inputs": {k: _array_to_obj(v) for k, v in inputs.items()},
        "expected": {k: _array_to_obj(v) for k, v in expected.items()},
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def _run_fixture_op(op: str, inputs: dict[str, np.ndarray], params: dict) -> dict[str, np.ndarray]:
    if op == "bilinear_resample":
        return {"out": bilinear_resample(inputs["grid"], tuple(params["target"]))}
    if op == "rms_norm":
        return {"out": rms_norm(inputs["x"], inputs["gain"], params.get("eps", RMS_NORM_EPS))}
    if op == "cross_attention":
        return {
            "out": cross_attention(
                inputs["q"], inputs["kv"],
                inputs["wq"], inputs["wk"], inputs["wv"], inputs["wo"],
                n_heads=params.get("n_heads"),
            )
        }
    if op == "fuse_residual":
        return {"out": fuse_residual(inputs["e_2d"], inputs["attended"])}
    if op == "mlp_project":
        return {
            "out": mlp_project(
                inputs["x"], inputs["w1"], inputs["b1"], inputs["w2"], inputs["b2"]
            )
        }
    raise DataError(f"unknown fixture op '{op}'")


def verify_fixture(path: Union[str, Path]) -> list[str]:
    """Recompute a fixture's outputs and diff against the bundled expectation.

    Returns a human-readable message per mismatch; an empty list means the
    fixture verifies.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"fixture not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"fixture is not valid json: {exc}") from exc
    for key in ("op", "inputs", "expected"):
        if key not in payload:
            raise DataError(f"fixture missing '{key}'")
    tolerance = float(payload.get("tolerance", 1e-6))
    inputs = {k: _array_from_obj(v) for k, v in payload["inputs"].items()}
    expected = {k: _array_from_obj(v) for k, v in payload["expected"].items()}
    actual = _run_fixture_op(payload["op"], inputs, payload.get("params", {}))

    diffs: list[str] = []
    for name, exp in expected.items():
        if name not in actual:
            diffs.append(f"output '{name}' was not produced")
            continue
        got = actual[name]
        if got.shape != exp.shape:
            diffs.append(f"output '{name}' shape {got.shape} != expected {exp.shape}")
            continue
        max_abs = float(np.max(np.abs(got - exp))) if exp.size else 0.0
        if max_abs > tolerance:
            diffs.append(
                f"output '{name}' max abs diff {max_abs:.3e} exceeds tolerance {tolerance:.3e}"
            )
    return diffs
