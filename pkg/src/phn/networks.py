"""Target networks with externally supplied weights, and the hypernetwork.

The hypernetwork maps a preference vector ``r`` through a relu MLP trunk to
shared features, then one linear head per target tensor emits that tensor's
weights.  Everything is functional: parameters live in :class:`ParamVector`
values and a fresh :class:`~phn.autodiff.Tape` is used for each pass.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor

SIMPLEX_TOL = 1e-8
CHECKPOINT_MAGIC = b"PHNCKPT\x00"
CHECKPOINT_VERSION = 1


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class Slot:
    """One named tensor inside a flat parameter vector."""

    name: str
    shape: tuple[int, ...]
    kind: str = "weight"  # weight | bias | embedding | point

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


@dataclass(frozen=True)
class ParamLayout:
    slots: tuple[Slot, ...]

    @property
    def size(self) -> int:
        return sum(s.size for s in self.slots)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, pos = [], 0
        for s in self.slots:
            out.append(pos)
            pos += s.size
        return tuple(out)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.slots)

    def describe(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(s.name, s.shape) for s in self.slots]

    def to_json(self) -> list:
        return [[s.name, list(s.shape), s.kind] for s in self.slots]

    @classmethod
    def from_json(cls, obj) -> "ParamLayout":
        return cls(tuple(Slot(n, tuple(int(d) for d in shp), k) for n, shp, k in obj))


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat float64 parameters together with their tensor layout."""

    data: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64).reshape(-1)
        if data.size != self.layout.size:
            raise LayoutError(f"parameter vector has {data.size} entries, layout needs {self.layout.size}")
        object.__setattr__(self, "data", data)

    def __len__(self) -> int:
        return self.data.size

    def tensors(self) -> dict[str, np.ndarray]:
        """Views of each tensor, keyed by slot name."""
        return {
            s.name: self.data[o:o + s.size].reshape(s.shape)
            for s, o in zip(self.layout.slots, self.layout.offsets)
        }

    def on_tape(self, tape: Tape) -> dict[str, Tensor]:
        return {name: tape.leaf(arr) for name, arr in self.tensors().items()}

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), self.layout)

    def replace(self, data: np.ndarray) -> "ParamVector":
        return ParamVector(data, self.layout)


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

def embedding_dim(cardinality: int) -> int:
    """Width of the learned embedding for a categorical column."""
    return max(1, min(8, math.ceil(cardinality / 2)))


@dataclass(frozen=True)
class TargetSpec:
    """Feed-forward relu network with linear output heads.

    ``layer_sizes`` is ``(input_dim, hidden_1, ..., hidden_k)``; every head
    reads the last hidden layer (or the input when there are no hidden
    layers).  ``embeddings`` lists categorical cardinalities whose learned
    embeddings are concatenated onto the numeric input.
    """

    layer_sizes: tuple[int, ...]
    head_dims: tuple[int, ...] = (1,)
    embeddings: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(x) for x in self.layer_sizes))
        object.__setattr__(self, "head_dims", tuple(int(x) for x in self.head_dims))
        object.__setattr__(self, "embeddings", tuple(int(x) for x in self.embeddings))
        if len(self.layer_sizes) < 1 or not self.head_dims:
            raise ValueError("TargetSpec needs an input size and at least one head")
        if min(self.layer_sizes + self.head_dims) < 0 or min(self.head_dims) < 1:
            raise ValueError("layer sizes must be positive")

    @property
    def heads(self) -> int:
        return len(self.head_dims)

    @property
    def trunk_input(self) -> int:
        return self.layer_sizes[0] + sum(embedding_dim(k) for k in self.embeddings)

    @property
    def layout(self) -> ParamLayout:
        slots = [Slot(f"embed.{i}", (k, embedding_dim(k)), "embedding") for i, k in enumerate(self.embeddings)]
        width = self.trunk_input
        for i, h in enumerate(self.layer_sizes[1:]):
            slots.append(Slot(f"layer.{i}.weight", (width, h)))
            slots.append(Slot(f"layer.{i}.bias", (h,), "bias"))
            width = h
        for j, d in enumerate(self.head_dims):
            slots.append(Slot(f"head.{j}.weight", (width, d)))
            slots.append(Slot(f"head.{j}.bias", (d,), "bias"))
        return ParamLayout(tuple(slots))

    def to_json(self) -> dict:
        return {
            "type": "mlp",
            "layer_sizes": list(self.layer_sizes),
            "head_dims": list(self.head_dims),
            "embeddings": list(self.embeddings),
        }


@dataclass(frozen=True)
class PointSpec:
    """A bare parameter point (no network), used by analytic problems."""

    dim: int

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout((Slot("point", (int(self.dim),), "point"),))

    def to_json(self) -> dict:
        return {"type": "point", "dim": int(self.dim)}


def target_spec_from_json(obj: Mapping):
    if obj["type"] == "point":
        return PointSpec(obj["dim"])
    return TargetSpec(tuple(obj["layer_sizes"]), tuple(obj["head_dims"]), tuple(obj.get("embeddings", ())))


AnyTargetSpec = Union[TargetSpec, PointSpec]


@dataclass(frozen=True)
class HyperNetSpec:
    """MLP trunk over the preference vector plus one linear head per target slot."""

    input_dim: int
    target_layout: ParamLayout
    trunk_hidden: tuple[int, ...] = (100, 100)
    head_scale: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "trunk_hidden", tuple(int(x) for x in self.trunk_hidden))
        if self.input_dim < 1:
            raise ValueError("hypernetwork input_dim must be >= 1")

    @property
    def layout(self) -> ParamLayout:
        slots = []
        width = self.input_dim
        for i, h in enumerate(self.trunk_hidden):
            slots.append(Slot(f"trunk.{i}.weight", (width, h)))
            slots.append(Slot(f"trunk.{i}.bias", (h,), "bias"))
            width = h
        for s in self.target_layout.slots:
            slots.append(Slot(f"head[{s.name}].weight", (width, s.size), "head"))
            slots.append(Slot(f"head[{s.name}].bias", (s.size,), "bias"))
        return ParamLayout(tuple(slots))

    @property
    def output_size(self) -> int:
        return self.target_layout.size

    def to_json(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "trunk_hidden": list(self.trunk_hidden),
            "head_scale": self.head_scale,
            "target_layout": self.target_layout.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "HyperNetSpec":
        return cls(
            int(obj["input_dim"]),
            ParamLayout.from_json(obj["target_layout"]),
            tuple(obj["trunk_hidden"]),
            float(obj.get("head_scale", 0.1)),
        )


# ---------------------------------------------------------------------------
# init
# ---------------------------------------------------------------------------

def glorot_bound(shape: Sequence[int]) -> float:
    if len(shape) >= 2:
        fan_in, fan_out = shape[0], shape[-1]
    else:
        fan_in = fan_out = shape[0]
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(spec, seed: int) -> ParamVector:
    """Glorot-uniform weights, zero biases; hypernetwork heads are scaled down.

    ``spec`` is anything with a ``layout`` (TargetSpec, PointSpec,
    HyperNetSpec).
    """
    layout = spec.layout
    head_scale = getattr(spec, "head_scale", 1.0)
    rng = np.random.default_rng(seed)
    chunks = []
    for s in layout.slots:
        if s.kind == "bias":
            chunks.append(np.zeros(s.size))
            continue
        bound = glorot_bound(s.shape)
        if s.kind == "head":
            bound *= head_scale
        chunks.append(rng.uniform(-bound, bound, size=s.size))
    data = np.concatenate(chunks) if chunks else np.zeros(0)
    return ParamVector(data, layout)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _check_simplex(r: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    if r.ndim != 1 or not np.all(np.isfinite(r)):
        raise ValueError(f"preference must be a finite vector, got {r!r}")
    if np.any(r < -tol) or abs(r.sum() - 1.0) > tol:
        raise ValueError(f"preference {r.tolist()} is not on the simplex (sum={r.sum():.12g})")


def _bind(layout: ParamLayout, phi, tape: Tape) -> dict[str, Tensor]:
    if isinstance(phi, ParamVector):
        if phi.layout != layout:
            raise LayoutError(
                f"parameter layout mismatch: expected {layout.describe()}, got {phi.layout.describe()}"
            )
        return phi.on_tape(tape)
    expected = layout.describe()
    actual = [(k, tuple(v.shape)) for k, v in phi.items()]
    if actual != expected:
        raise LayoutError(f"parameter layout mismatch: expected {expected}, got {actual}")
    return dict(phi)


def target_forward(spec: AnyTargetSpec, phi, x, tape: Tape, categorical=None) -> list[Tensor]:
    """Per-head predictions of the target network.

    ``phi`` is a :class:`ParamVector` or a name -> Tensor mapping already on
    ``tape`` (e.g. the output of :func:`hypernet_forward`), in which case
    gradients flow back into whatever produced it.  ``categorical`` holds one
    integer code column per embedding.
    """
    params = _bind(spec.layout, phi, tape)
    if isinstance(spec, PointSpec):
        return [params["point"]]
    h = x if isinstance(x, Tensor) else tape.leaf(x)
    if h.data.ndim != 2 or h.shape[1] != spec.layer_sizes[0]:
        raise ad.ShapeError("target_forward", h.shape, (None, spec.layer_sizes[0]))
    if spec.embeddings:
        codes = np.asarray(categorical, dtype=np.int64)
        if codes.shape != (h.shape[0], len(spec.embeddings)):
            raise ad.ShapeError("target_forward", codes.shape, (h.shape[0], len(spec.embeddings)),
                                detail="categorical codes")
        parts = [h] + [ad.index(params[f"embed.{i}"], codes[:, i]) for i in range(len(spec.embeddings))]
        h = ad.concat(parts, axis=1)
    for i in range(len(spec.layer_sizes) - 1):
        h = ad.relu(ad.add(ad.matmul(h, params[f"layer.{i}.weight"]), params[f"layer.{i}.bias"]))
    return [
        ad.add(ad.matmul(h, params[f"head.{j}.weight"]), params[f"head.{j}.bias"])
        for j in range(spec.heads)
    ]


def hypernet_forward(spec: HyperNetSpec, theta, r, tape: Tape) -> dict[str, Tensor]:
    """Target weights ``phi(theta, r)`` as a name -> Tensor mapping on ``tape``.

    ``theta`` is the hypernetwork's ParamVector, or a mapping of its tensors
    already on the tape (so the caller can read gradients off them).
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (spec.input_dim,):
        raise ad.ShapeError("hypernet_forward", r.shape, (spec.input_dim,))
    _check_simplex(r)
    params = _bind(spec.layout, theta, tape)
    h = tape.leaf(r[None, :])
    for i in range(len(spec.trunk_hidden)):
        h = ad.relu(ad.add(ad.matmul(h, params[f"trunk.{i}.weight"]), params[f"trunk.{i}.bias"]))
    phi = {}
    for s in spec.target_layout.slots:
        flat = ad.add(ad.matmul(h, params[f"head[{s.name}].weight"]), params[f"head[{s.name}].bias"])
        phi[s.name] = ad.reshape(flat, s.shape)
    return phi


def hypernet_weights(spec: HyperNetSpec, theta: ParamVector, r) -> ParamVector:
    """Evaluate the hypernetwork without keeping the tape."""
    tape = Tape()
    phi = hypernet_forward(spec, theta, r, tape)
    data = np.concatenate([phi[s.name].data.reshape(-1) for s in spec.target_layout.slots])
    return ParamVector(data, spec.target_layout)


def flatten(tensors: Mapping[str, Tensor], layout: ParamLayout) -> np.ndarray:
    return np.concatenate([np.asarray(tensors[s.name].data).reshape(-1) for s in layout.slots])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: ParamVector, header: Mapping | None = None) -> Path:
    """Write magic, u64 header length, JSON header, then ``<f8`` parameters.

    The header always carries ``format_version`` and the parameter layout;
    callers add the spec echo, seed and step count.
    """
    path = Path(path)
    head = dict(header or {})
    head["format_version"] = CHECKPOINT_VERSION
    head["layout"] = params.layout.to_json()
    blob = json.dumps(head, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(params.data.astype("<f8").tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> tuple[ParamVector, dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise LayoutError(f"{path}: not a checkpoint file")
    pos = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack("<Q", raw[pos:pos + 8])
    pos += 8
    header = json.loads(raw[pos:pos + n].decode("utf-8"))
    pos += n
    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise LayoutError(f"{path}: unsupported checkpoint format_version {version!r}")
    layout = ParamLayout.from_json(header["layout"])
    data = np.frombuffer(raw[pos:], dtype="<f8").astype(np.float64)
    if data.size != layout.size:
        raise LayoutError(f"{path}: {data.size} stored values, layout needs {layout.size}")
    return ParamVector(data, layout), header
