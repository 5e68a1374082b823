"""Feature-map containers, the geometry-prior encoder stand-in, and the
dimension-aligning MLP head.

The real 3-D foundation model is far too heavy for this harness, so
``stub_3dfm_encode`` synthesizes deterministic pseudo-random feature maps
from a counter-based generator. The 2-layer projection head (Linear, GeLU,
Linear) is real and its weights can be saved/loaded bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import binformat
from .errors import ContractViolationError, MissingFileError
from .geometry import Stream


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Row-major rows x cols grid of d-dimensional float32 feature vectors."""

    data: np.ndarray  # (rows, cols, dim)
    stream: Stream

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if arr.ndim != 3 or arr.size == 0:
            raise ContractViolationError(f"feature data must be (rows, cols, dim), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ContractViolationError("feature entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "stream", Stream(self.stream))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class MlpProjection:
    """Two-layer head mapping in_dim vectors to out_dim: w2 @ gelu(w1 x + b1) + b2."""

    w1: np.ndarray  # (hidden, in_dim) float32
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (out_dim, hidden)
    b2: np.ndarray  # (out_dim,)

    def __post_init__(self):
        w1 = np.ascontiguousarray(np.asarray(self.w1, dtype=np.float32))
        b1 = np.ascontiguousarray(np.asarray(self.b1, dtype=np.float32))
        w2 = np.ascontiguousarray(np.asarray(self.w2, dtype=np.float32))
        b2 = np.ascontiguousarray(np.asarray(self.b2, dtype=np.float32))
        if w1.ndim != 2 or w2.ndim != 2:
            raise ContractViolationError("weight matrices must be 2-D")
        hidden, in_dim = w1.shape
        out_dim = w2.shape[0]
        if w2.shape[1] != hidden or b1.shape != (hidden,) or b2.shape != (out_dim,):
            raise ContractViolationError(
                f"inconsistent MLP shapes: w1 {w1.shape}, b1 {b1.shape}, w2 {w2.shape}, b2 {b2.shape}"
            )
        for arr in (w1, b1, w2, b2):
            if not np.all(np.isfinite(arr)):
                raise ContractViolationError("MLP entries must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def seeded(cls, in_dim: int, hidden_dim: int, out_dim: int, seed: int) -> "MlpProjection":
        """Deterministic random init from the counter-based generator,
        scaled by 1/sqrt(fan_in) per layer. Biases start at zero."""
        w1 = stub_feature_values(derive_seed(seed, 101), 0, hidden_dim, in_dim, 1)[:, :, 0]
        w2 = stub_feature_values(derive_seed(seed, 102), 0, out_dim, hidden_dim, 1)[:, :, 0]
        w1 = w1 / np.sqrt(np.float32(in_dim))
        w2 = w2 / np.sqrt(np.float32(hidden_dim))
        return cls(w1, np.zeros(hidden_dim, np.float32), w2, np.zeros(out_dim, np.float32))


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GeLU, x * Phi(x), with Phi the standard normal CDF via erf.

    The erf form (not the tanh approximation) is used so the result is
    reproducible across languages and runtimes.
    """
    from scipy.special import erf  # deferred: keeps bare CLI startup cheap

    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def project_geometry_features(v: FeatureMap, mlp: MlpProjection) -> FeatureMap:
    """Apply the 2-layer head to every grid vector; the grid shape is
    preserved and only the channel dimension changes."""
    if v.dim != mlp.in_dim:
        raise ContractViolationError(
            f"feature dim {v.dim} does not match projection input dim {mlp.in_dim}"
        )
    x = v.data.reshape(-1, v.dim).astype(np.float64)
    h = gelu(x @ mlp.w1.T.astype(np.float64) + mlp.b1.astype(np.float64))
    y = h @ mlp.w2.T.astype(np.float64) + mlp.b2.astype(np.float64)
    out = y.astype(np.float32).reshape(v.rows, v.cols, mlp.out_dim)
    return FeatureMap(data=out, stream=v.stream)


# Counter-based generator: a SplitMix64 finalizer chained over the key tuple
# (seed, tag, frame, row, col, channel), mapped to uniform float32 in [-1, 1).
# Identical keys give bitwise-identical values on every platform.

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    # Wraparound modulo 2^64 is the point; silence numpy's overflow warnings.
    with np.errstate(over="ignore"):
        z = (z + _SM_GAMMA) & _MASK64
        z = ((z ^ (z >> np.uint64(30))) * _SM_M1) & _MASK64
        z = ((z ^ (z >> np.uint64(27))) * _SM_M2) & _MASK64
        return z ^ (z >> np.uint64(31))


def derive_seed(root: int, *tags: int) -> int:
    """Deterministically derive an independent 64-bit seed from a root seed
    and integer tags. Used to split one run seed into per-purpose streams."""
    h = np.uint64(root & 0xFFFFFFFFFFFFFFFF)
    for t in tags:
        h = _splitmix64(h ^ np.uint64(t & 0xFFFFFFFFFFFFFFFF))
    return int(h)


def stub_feature_values(seed: int, frame_index: int, rows: int, cols: int, dim: int) -> np.ndarray:
    """(rows, cols, dim) float32 grid of values uniform in [-1, 1), keyed on
    (seed, frame_index, row, col, channel).

    The key components are folded in one at a time with the SplitMix64
    finalizer; the top 24 bits of the final state select one of 2^24 evenly
    spaced float32 values. Every value is exactly representable, so the
    output is bitwise identical on every platform.
    """
    if rows < 1 or cols < 1 or dim < 1:
        raise ContractViolationError("stub feature dims must be >= 1")
    h = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(frame_index & 0xFFFFFFFFFFFFFFFF))
    r = np.arange(rows, dtype=np.uint64)[:, None, None]
    c = np.arange(cols, dtype=np.uint64)[None, :, None]
    ch = np.arange(dim, dtype=np.uint64)[None, None, :]
    h = _splitmix64(h ^ r)
    h = _splitmix64(h ^ c)
    h = _splitmix64(h ^ ch)
    top = (h >> np.uint64(40)).astype(np.float64)  # 24 bits
    vals = top * (1.0 / float(1 << 23)) - 1.0
    return vals.astype(np.float32)


def stub_3dfm_encode(frame_index: int, rows: int, cols: int, dim: int, seed: int) -> FeatureMap:
    """Deterministic stand-in for the pretrained 3-D geometry encoder."""
    return FeatureMap(data=stub_feature_values(seed, frame_index, rows, cols, dim), stream=Stream.GEOMETRY)


def stub_visual_encode(frame_index: int, rows: int, cols: int, dim: int, seed: int) -> FeatureMap:
    """Deterministic stand-in for the visual patch encoder. Same generator
    as the geometry stub; callers pass a stream-specific seed."""
    return FeatureMap(data=stub_feature_values(seed, frame_index, rows, cols, dim), stream=Stream.VISUAL)


def save_mlp_weights(mlp: MlpProjection, path) -> None:
    """Write the head to the binary weight-file format (bit-exact round trip)."""
    Path(path).write_bytes(binformat.pack_mlp_weights(mlp.w1, mlp.b1, mlp.w2, mlp.b2))


def load_mlp_weights(path) -> MlpProjection:
    p = Path(path)
    if not p.exists():
        raise MissingFileError(f"weight file not found: {p}")
    w1, b1, w2, b2 = binformat.unpack_mlp_weights(p.read_bytes(), name=p.name)
    return MlpProjection(w1, b1, w2, b2)
