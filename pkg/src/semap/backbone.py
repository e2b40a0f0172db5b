"""Frozen toy classifier, prompt composition, and prompt-only gradients.

The backbone is a fixed two-layer MLP ``d*d -> hidden -> n`` (affine, ReLU,
affine) whose weights are drawn once from a seeded Rng and never change.
Weights are stored as float32; all arithmetic runs in float64 with
left-to-right accumulation, bitwise identical to a naive loop oracle.

A prompt is a d x d perturbation that lives only on its mask:

* ``padding``      - border band of width p; the downstream image
  (side ``d - 2p``) sits in the center.
* ``fixed_patch``  - square patch at a fixed location on a full d x d image.
* ``random_patch`` - square patch whose location is re-sampled per training
  batch from a seeded Rng; the learned patch content moves with it.

Composition places the image, adds the masked prompt, and clamps to [0, 1].
Gradients flow only to prompt pixels: the clamp subgradient is 1 wherever the
pre-clamp value lies in [0, 1] (clip is the identity there, boundary
included) and 0 for values pushed back from outside; ReLU subgradient at
exactly 0 is 0.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import FormatError, InvalidInputError, ShapeError
from .numerics import Rng

BACKBONE_MAGIC = "SEMAPBKB"
PROMPT_MAGIC = b"SEMAPPRM"

VARIANTS = ("padding", "fixed_patch", "random_patch")
_VARIANT_TAGS = {"padding": 0, "fixed_patch": 1, "random_patch": 2}
_TAG_VARIANTS = {tag: name for name, tag in _VARIANT_TAGS.items()}


@njit(cache=True)
def _affine(w, b, x, out):  # pragma: no cover - exercised via forward
    # out[i] = (sum_k w[i,k] * x[k]) + b[i], accumulated left to right
    for i in range(w.shape[0]):
        acc = 0.0
        for k in range(w.shape[1]):
            acc += w[i, k] * x[k]
        out[i] = acc + b[i]


@njit(cache=True)
def _affine_t(w, g, out):  # pragma: no cover
    # out[k] = sum_i w[i,k] * g[i]
    for k in range(w.shape[1]):
        acc = 0.0
        for i in range(w.shape[0]):
            acc += w[i, k] * g[i]
        out[k] = acc


@dataclass
class FrozenBackbone:
    """Immutable two-layer MLP; construct via make_backbone or load_backbone."""

    seed: int
    d: int
    hidden: int
    n: int
    w1: np.ndarray  # float32 (hidden, d*d)
    b1: np.ndarray  # float32 (hidden,)
    w2: np.ndarray  # float32 (n, hidden)
    b2: np.ndarray  # float32 (n,)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(self, name)
            arr.setflags(write=False)
            # float32 -> float64 is exact; the frozen values are unchanged
            setattr(self, f"_{name}_64", np.ascontiguousarray(arr, dtype=np.float64))

    def weight_checksum(self) -> str:
        """SHA-256 over the little-endian float32 bytes of all weight arrays."""
        digest = hashlib.sha256()
        for arr in (self.w1, self.b1, self.w2, self.b2):
            digest.update(arr.astype("<f4").tobytes())
        return digest.hexdigest()


def make_backbone(seed: int, d: int, hidden: int, n: int) -> FrozenBackbone:
    """Draw frozen weights from a seeded Rng.

    Per layer, weights then biases are drawn row-major, uniform in [-a, a]
    with a = sqrt(6 / (fan_in + fan_out)) (Glorot-style bound).
    """
    if d < 1 or hidden < 1 or n < 1:
        raise InvalidInputError("d, hidden and n must all be >= 1")
    rng = Rng(seed)

    def draw(rows: int, cols: int, bound: float) -> np.ndarray:
        flat = rng.uniforms(rows * cols, -bound, bound)
        return flat.reshape(rows, cols).astype(np.float32)

    a1 = np.sqrt(6.0 / (d * d + hidden))
    w1 = draw(hidden, d * d, a1)
    b1 = draw(1, hidden, a1)[0]
    a2 = np.sqrt(6.0 / (hidden + n))
    w2 = draw(n, hidden, a2)
    b2 = draw(1, n, a2)[0]
    return FrozenBackbone(int(seed), d, hidden, n, w1, b1, w2, b2)


def save_backbone(path: str | Path, backbone: FrozenBackbone) -> None:
    """Persist as seed + architecture; weights regenerate on load."""
    lines = [
        BACKBONE_MAGIC,
        f"seed: {backbone.seed}",
        f"d: {backbone.d}",
        f"hidden: {backbone.hidden}",
        f"n: {backbone.n}",
    ]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def load_backbone(path: str | Path) -> FrozenBackbone:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    lines = path.read_bytes().decode("utf-8").splitlines()
    if not lines or lines[0] != BACKBONE_MAGIC:
        raise FormatError(f"{path}: bad magic line, expected {BACKBONE_MAGIC!r}")
    fields = {}
    for lineno, line in enumerate(lines[1:], start=2):
        key, sep, value = line.partition(":")
        if not sep:
            raise FormatError(f"{path}: malformed line {lineno}: {line!r}")
        fields[key.strip()] = value.strip()
    try:
        return make_backbone(
            int(fields["seed"]), int(fields["d"]), int(fields["hidden"]), int(fields["n"])
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: missing or bad field ({exc})") from exc


@dataclass
class Prompt:
    """Trainable perturbation on a fixed mask; off-mask values are always 0."""

    variant: str
    d: int
    values: np.ndarray  # float64 (d, d)
    mask: np.ndarray  # bool (d, d)
    pad: int = 0  # padding band width (padding variant)
    patch_size: int = 0  # patch side length (patch variants)
    patch_row: int = 0
    patch_col: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"unknown prompt variant {self.variant!r}")
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.values.shape != (self.d, self.d) or self.mask.shape != (self.d, self.d):
            raise ShapeError(f"prompt arrays must be ({self.d}, {self.d})")
        if np.any(self.values[~self.mask] != 0.0):
            raise InvalidInputError("prompt values must be 0 off-mask")

    @property
    def image_side(self) -> int:
        """Expected downstream image side for this geometry."""
        return self.d - 2 * self.pad if self.variant == "padding" else self.d

    def remask(self) -> None:
        """Zero any off-mask drift (call after in-place value updates)."""
        self.values[~self.mask] = 0.0

    def with_values(self, values: np.ndarray) -> Prompt:
        return Prompt(
            self.variant, self.d, values, self.mask,
            self.pad, self.patch_size, self.patch_row, self.patch_col,
        )

    def resample_location(self, rng: Rng) -> None:
        """Move a random_patch to a fresh seeded location, carrying its content."""
        if self.variant != "random_patch":
            raise InvalidInputError("only random_patch prompts re-sample location")
        s = self.patch_size
        content = self.values[
            self.patch_row : self.patch_row + s, self.patch_col : self.patch_col + s
        ].copy()
        self.patch_row = rng.below(self.d - s + 1)
        self.patch_col = rng.below(self.d - s + 1)
        self.mask = _patch_mask(self.d, s, self.patch_row, self.patch_col)
        self.values = np.zeros((self.d, self.d), dtype=np.float64)
        self.values[
            self.patch_row : self.patch_row + s, self.patch_col : self.patch_col + s
        ] = content


def _patch_mask(d: int, size: int, row: int, col: int) -> np.ndarray:
    mask = np.zeros((d, d), dtype=bool)
    mask[row : row + size, col : col + size] = True
    return mask


def padding_prompt(d: int, pad: int) -> Prompt:
    """Zero-initialized border-band prompt; image side is d - 2*pad."""
    if pad < 0 or 2 * pad >= d:
        raise InvalidInputError(f"padding width {pad} invalid for canvas side {d}")
    mask = np.ones((d, d), dtype=bool)
    mask[pad : d - pad, pad : d - pad] = False
    return Prompt("padding", d, np.zeros((d, d)), mask, pad=pad)


def patch_prompt(d: int, size: int, row: int = 0, col: int = 0, random: bool = False) -> Prompt:
    """Zero-initialized square-patch prompt over a full d x d image."""
    if not 1 <= size <= d:
        raise InvalidInputError(f"patch size {size} invalid for canvas side {d}")
    if not (0 <= row <= d - size and 0 <= col <= d - size):
        raise InvalidInputError(f"patch at ({row}, {col}) exceeds the canvas")
    variant = "random_patch" if random else "fixed_patch"
    mask = _patch_mask(d, size, row, col)
    return Prompt(variant, d, np.zeros((d, d)), mask,
                  patch_size=size, patch_row=row, patch_col=col)


def default_pad(d: int) -> int:
    return d // 4


@dataclass
class PromptedImage:
    """A composed d x d canvas with entries clamped to [0, 1]."""

    canvas: np.ndarray

    def __post_init__(self):
        self.canvas = np.ascontiguousarray(self.canvas, dtype=np.float64)
        if self.canvas.ndim != 2 or self.canvas.shape[0] != self.canvas.shape[1]:
            raise ShapeError("canvas must be square")
        if np.any(self.canvas < 0.0) or np.any(self.canvas > 1.0):
            raise InvalidInputError("canvas entries must lie in [0, 1]")


def place_image(x: np.ndarray, prompt: Prompt) -> np.ndarray:
    """Pre-clamp canvas: the image placed per geometry, prompt not yet added."""
    x = np.asarray(x, dtype=np.float64)
    side = prompt.image_side
    if x.shape != (side, side):
        raise ShapeError(
            f"expected a {side}x{side} image for {prompt.variant} geometry, "
            f"got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("image contains non-finite values")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise InvalidInputError("image entries must lie in [0, 1]")
    canvas = np.zeros((prompt.d, prompt.d), dtype=np.float64)
    if prompt.variant == "padding":
        p = prompt.pad
        canvas[p : p + side, p : p + side] = x
    else:
        canvas[:, :] = x
    return canvas


def compose(x: np.ndarray, prompt: Prompt) -> PromptedImage:
    """Place the image, add the masked prompt, clamp to [0, 1]."""
    pre = place_image(x, prompt) + np.where(prompt.mask, prompt.values, 0.0)
    return PromptedImage(np.clip(pre, 0.0, 1.0))


def forward(backbone: FrozenBackbone, img: PromptedImage | np.ndarray) -> np.ndarray:
    """Pre-softmax scores for one canvas; float64, deterministic."""
    canvas = img.canvas if isinstance(img, PromptedImage) else np.asarray(img, dtype=np.float64)
    if canvas.shape != (backbone.d, backbone.d):
        raise ShapeError(f"expected a {backbone.d}x{backbone.d} canvas, got {canvas.shape}")
    x = np.ascontiguousarray(canvas.reshape(-1), dtype=np.float64)
    z1 = np.empty(backbone.hidden, dtype=np.float64)
    _affine(backbone._w1_64, backbone._b1_64, x, z1)
    a1 = np.maximum(z1, 0.0)
    z2 = np.empty(backbone.n, dtype=np.float64)
    _affine(backbone._w2_64, backbone._b2_64, a1, z2)
    return z2


@dataclass
class CompositeState:
    """Forward intermediates kept for the backward pass."""

    pre: np.ndarray  # canvas before clamping
    canvas: np.ndarray
    z1: np.ndarray
    logits: np.ndarray


def composite_forward(backbone: FrozenBackbone, x: np.ndarray, prompt: Prompt) -> CompositeState:
    """Compose and run forward, keeping intermediates for backward."""
    if prompt.d != backbone.d:
        raise ShapeError(f"prompt side {prompt.d} != backbone side {backbone.d}")
    pre = place_image(x, prompt) + np.where(prompt.mask, prompt.values, 0.0)
    canvas = np.clip(pre, 0.0, 1.0)
    flat = np.ascontiguousarray(canvas.reshape(-1))
    z1 = np.empty(backbone.hidden, dtype=np.float64)
    _affine(backbone._w1_64, backbone._b1_64, flat, z1)
    a1 = np.maximum(z1, 0.0)
    logits = np.empty(backbone.n, dtype=np.float64)
    _affine(backbone._w2_64, backbone._b2_64, a1, logits)
    return CompositeState(pre, canvas, z1, logits)


def backward_canvas(
    backbone: FrozenBackbone, state: CompositeState, upstream_grad: np.ndarray
) -> np.ndarray:
    """Gradient of ``upstream_grad . logits`` w.r.t. the pre-clamp canvas."""
    g = np.ascontiguousarray(upstream_grad, dtype=np.float64)
    if g.shape != (backbone.n,):
        raise ShapeError(f"expected upstream gradient of length {backbone.n}")
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("upstream gradient contains non-finite values")
    da1 = np.empty(backbone.hidden, dtype=np.float64)
    _affine_t(backbone._w2_64, g, da1)
    dz1 = np.ascontiguousarray(da1 * (state.z1 > 0.0))
    dflat = np.empty(backbone.d * backbone.d, dtype=np.float64)
    _affine_t(backbone._w1_64, dz1, dflat)
    dcanvas = dflat.reshape(backbone.d, backbone.d)
    # pixels exactly at 0 or 1 pass through clip unchanged, so they keep
    # subgradient 1; only values pushed back from outside the box get 0
    # (a zero-initialized prompt on a zero border must stay trainable)
    unclamped = (state.pre >= 0.0) & (state.pre <= 1.0)
    return dcanvas * unclamped


def grad_prompt(
    backbone: FrozenBackbone,
    x: np.ndarray,
    prompt: Prompt,
    upstream_grad: np.ndarray,
) -> np.ndarray:
    """Chain rule back to the prompt pixels; zero everywhere off-mask."""
    state = composite_forward(backbone, x, prompt)
    dcanvas = backward_canvas(backbone, state, upstream_grad)
    return np.where(prompt.mask, dcanvas, 0.0)


def save_prompt(path: str | Path, prompt: Prompt) -> None:
    """16-byte header (magic, u32 d, u32 variant tag), then d*d f32 values."""
    blob = PROMPT_MAGIC + struct.pack("<II", prompt.d, _VARIANT_TAGS[prompt.variant])
    blob += prompt.values.astype("<f4").tobytes()
    Path(path).write_bytes(blob)


def load_prompt(path: str | Path) -> tuple[np.ndarray, str, int]:
    """Returns (values, variant name, d); geometry is supplied by the caller."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    blob = path.read_bytes()
    if blob[:8] != PROMPT_MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0, expected {PROMPT_MAGIC!r}")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header at byte {len(blob)}")
    d, tag = struct.unpack_from("<II", blob, 8)
    if tag not in _TAG_VARIANTS:
        raise FormatError(f"{path}: unknown variant tag {tag}")
    payload = blob[16:]
    if len(payload) != d * d * 4:
        raise FormatError(
            f"{path}: payload size mismatch at byte 16: "
            f"expected {d * d * 4} bytes, found {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(d, d).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: non-finite prompt value")
    return values, _TAG_VARIANTS[tag], int(d)
