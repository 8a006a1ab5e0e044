"""Input transformations: state vector in, network feature vector out.

Dense features are plain float64 arrays.  Tile codes are :class:`SparseBinary`
(sorted active indices plus the declared code length).  Every transform is a
small configured object that can be dumped to a JSON-compatible dict and
rebuilt bit-for-bit with :func:`transform_from_dict`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


# ------------------------------------------------------------ feature vectors


@dataclass(frozen=True, eq=False)
class SparseBinary:
    """Binary vector stored as its sorted active indices."""

    indices: np.ndarray
    length: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.length):
            raise ValueError("sparse indices must be strictly increasing and < length")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def trusted(cls, indices: np.ndarray, length: int) -> "SparseBinary":
        """Skip validation; for callers that construct sorted unique indices."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "indices", indices)
        object.__setattr__(obj, "length", length)
        return obj

    def to_dense(self) -> np.ndarray:
        x = np.zeros(self.length)
        x[self.indices] = 1.0
        return x

    @classmethod
    def from_dense(cls, x) -> "SparseBinary":
        x = np.asarray(x)
        if not np.all((x == 0) | (x == 1)):
            raise ValueError("only 0/1 vectors have a sparse-binary form")
        return cls(np.flatnonzero(x), x.size)

    def __len__(self):
        return self.length

    def __eq__(self, other):
        return (
            isinstance(other, SparseBinary)
            and self.length == other.length
            and np.array_equal(self.indices, other.indices)
        )


def feature_length(x) -> int:
    return x.length if isinstance(x, SparseBinary) else len(x)


# -------------------------------------------------------------- normalization


def normalize(state, bounds, diagnostics: dict | None = None) -> np.ndarray:
    """Affinely map each component from [lo, hi] to [-1, 1], clamping outliers."""
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    s = np.asarray(state, dtype=float)
    clamped = np.clip(s, lo, hi)
    if diagnostics is not None and not np.array_equal(clamped, s):
        diagnostics["clamped"] = diagnostics.get("clamped", 0) + 1
    return 2.0 * (clamped - lo) / (hi - lo) - 1.0


# ---------------------------------------------------------------- tile coding


def stable_hash(key: Sequence[int]) -> int:
    """Platform-independent 64-bit hash of an integer tuple."""
    data = np.asarray(key, dtype="<i8").tobytes()
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


@dataclass
class TileCodingConfig:
    num_tilings: int
    tiles_per_dim: Sequence[int]
    input_bounds: Sequence[Sequence[float]]
    mode: str = "joint"
    memory_size: int | None = None
    # tiling x dims displacements in tile widths; default k/N on every axis
    offsets: Sequence[Sequence[float]] | None = None
    hashing: str = "table"  # "table": index-hash table with canonical warm-up; "hash": pure hashing

    def __post_init__(self):
        self.tiles_per_dim = [int(t) for t in self.tiles_per_dim]
        self.input_bounds = [[float(lo), float(hi)] for lo, hi in self.input_bounds]
        if self.mode not in ("joint", "separate"):
            raise ValueError(f"unknown tile coding mode {self.mode!r}")
        if self.num_tilings < 1 or min(self.tiles_per_dim) < 1:
            raise ValueError("num_tilings and tiles_per_dim must be positive")
        if len(self.tiles_per_dim) != len(self.input_bounds):
            raise ValueError("tiles_per_dim and input_bounds disagree on dimension")
        if any(lo >= hi for lo, hi in self.input_bounds):
            raise ValueError("input bounds need lo < hi")
        if self.memory_size is not None and self.memory_size < 1:
            raise ValueError("memory_size must be positive")
        if self.hashing not in ("table", "hash"):
            raise ValueError(f"unknown hashing scheme {self.hashing!r}")
        if self.offsets is None:
            n, d = self.num_tilings, len(self.tiles_per_dim)
            self.offsets = [[k / n] * d for k in range(n)]
        else:
            self.offsets = [[float(o) for o in row] for row in self.offsets]

    @property
    def num_dims(self) -> int:
        return len(self.tiles_per_dim)


# Enumerating the tuple space for the warm-up table is skipped above this size.
_MAX_TABLE = 2_000_000


class _Block:
    """One independently indexed region of the code (all dims, or one dim)."""

    def __init__(self, dims, tiles, num_tilings, memory, hashing, salt):
        self.dims = np.asarray(dims)
        self.tiles = np.asarray(tiles)
        self.space = num_tilings * int(np.prod(self.tiles))
        self.memory = memory
        self.salt = salt
        self.table = None
        self.collisions = 0
        self._owner: dict[int, int] = {}
        self._counted: set[int] = set()
        if memory is None:
            self.length = self.space
            return
        self.length = memory
        if hashing == "table" and self.space <= _MAX_TABLE:
            # Canonical warm-up: tuples take the next free slot until memory is
            # full, the rest fall back to hashing.
            table = np.arange(self.space, dtype=np.int64)
            if self.space > memory:
                for c in range(memory, self.space):
                    table[c] = stable_hash((salt, c)) % memory
                self.collisions = self.space - memory
            self.table = table

    def index(self, canonical: np.ndarray) -> np.ndarray:
        if self.memory is None:
            return canonical
        if self.table is not None:
            return self.table[canonical]
        out = np.empty_like(canonical)
        for i, c in enumerate(canonical.tolist()):
            h = stable_hash((self.salt, c)) % self.memory
            owner = self._owner.setdefault(h, c)
            if owner != c and c not in self._counted:
                self._counted.add(c)
                self.collisions += 1
            out[i] = h
        return out


class TileCoder:
    name = "tile"
    sparse = True
    upward_dims: list[int] = []

    def __init__(self, cfg: TileCodingConfig):
        self.cfg = cfg
        bounds = np.asarray(cfg.input_bounds)
        self.lo = bounds[:, 0]
        tiles = np.asarray(cfg.tiles_per_dim)
        # Tiles are range/(tiles-1) wide so that every displaced tiling still
        # covers the bounds with exactly `tiles` cells per dimension.
        self.width = np.where(tiles > 1, (bounds[:, 1] - self.lo) / np.maximum(tiles - 1, 1), np.inf)
        self.tiles = tiles
        self.offsets = np.asarray(cfg.offsets, dtype=float)
        n = cfg.num_tilings
        if cfg.mode == "joint":
            self.blocks = [_Block(range(cfg.num_dims), tiles, n, cfg.memory_size, cfg.hashing, 0)]
        else:
            self.blocks = [
                _Block([d], [tiles[d]], n, cfg.memory_size, cfg.hashing, d) for d in range(cfg.num_dims)
            ]
        self.block_base = np.concatenate([[0], np.cumsum([b.length for b in self.blocks])[:-1]])
        self.n_features = int(sum(b.length for b in self.blocks))
        self._tiling_ids = np.arange(n)
        self._tiling_size = int(np.prod(tiles))
        self._strides = np.array([int(np.prod(tiles[d + 1 :])) for d in range(len(tiles))], dtype=np.int64)
        # fast path for separate unhashed / identity-table codes
        self._linear_separate = cfg.mode == "separate" and all(
            b.memory is None or (b.table is not None and b.space <= b.memory) for b in self.blocks
        )

    @property
    def collisions(self) -> int:
        return sum(b.collisions for b in self.blocks)

    @property
    def num_active(self) -> int:
        n = self.cfg.num_tilings
        return n if self.cfg.mode == "joint" else n * self.cfg.num_dims

    def cells(self, state) -> np.ndarray:
        """Cell coordinates, shape (num_tilings, num_dims)."""
        s = np.clip(np.asarray(state, dtype=float), self.lo, self.lo + self.width * np.maximum(self.tiles - 1, 1))
        u = np.where(np.isinf(self.width), 0.0, (s - self.lo) / self.width)
        c = np.floor(u[None, :] + self.offsets).astype(np.int64)
        return np.clip(c, 0, self.tiles - 1)

    def __call__(self, state) -> SparseBinary:
        cells = self.cells(state)
        n = self.cfg.num_tilings
        if self.cfg.mode == "joint":
            canonical = self._tiling_ids * self._tiling_size + cells @ self._strides
            block = self.blocks[0]
            if block.memory is None or (block.table is not None and block.space <= block.memory):
                return SparseBinary.trusted(canonical, self.n_features)
            return SparseBinary(np.unique(block.index(canonical)), self.n_features)
        canonical = self._tiling_ids[:, None] * self.tiles[None, :] + cells  # (n, d)
        if self._linear_separate:
            idx = (self.block_base[None, :] + canonical).T.ravel()
            return SparseBinary.trusted(idx, self.n_features)
        parts = [
            np.unique(b.index(canonical[:, d])) + self.block_base[d] for d, b in enumerate(self.blocks)
        ]
        return SparseBinary(np.concatenate(parts), self.n_features)

    def to_dict(self) -> dict:
        d = {"type": self.name, **vars(self.cfg)}
        d["tables"] = [None if b.table is None else b.table.tolist() for b in self.blocks]
        return d


def tile_code(state, cfg: TileCodingConfig) -> SparseBinary:
    return TileCoder(cfg)(state)


# --------------------------------------------------------- convex embeddings


@dataclass
class LiftProjectConfig:
    radius: float
    shift: float = 0.0
    mode: str = "joint"
    # separate mode: groups of input dims, each embedded on its own sphere
    partition: Sequence[Sequence[int]] | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.mode not in ("joint", "separate"):
            raise ValueError(f"unknown lift-project mode {self.mode!r}")
        if self.partition is not None:
            self.partition = [[int(i) for i in block] for block in self.partition]

    def blocks(self, n: int) -> list[list[int]]:
        if self.mode == "joint":
            return [list(range(n))]
        blocks = self.partition if self.partition is not None else [[i] for i in range(n)]
        flat = sorted(i for b in blocks for i in b)
        if flat != list(range(n)):
            raise ValueError("partition must cover every input dimension exactly once")
        return blocks


def _lift_project_block(x: np.ndarray, radius: float) -> np.ndarray:
    lifted = np.append(x, 1.0)
    return radius * lifted / np.linalg.norm(lifted)


def lift_project(x, cfg: LiftProjectConfig, shift: bool = True) -> np.ndarray:
    """Project (x, 1) onto the sphere of radius r, per block, then shift the
    extra coordinate(s) down by ``cfg.shift``."""
    x = np.asarray(x, dtype=float)
    out = []
    for block in cfg.blocks(x.size):
        f = _lift_project_block(x[block], cfg.radius)
        if shift:
            f[-1] -= cfg.shift
        out.append(f)
    return np.concatenate(out)


def lift_project_inverse(f, cfg: LiftProjectConfig, n: int, shifted: bool = True) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    x = np.empty(n)
    pos = 0
    for block in cfg.blocks(n):
        k = len(block)
        extra = f[pos + k] + (cfg.shift if shifted else 0.0)
        x[block] = f[pos : pos + k] / extra
        pos += k + 1
    return x


def lift_project_extra_dims(cfg: LiftProjectConfig, n: int) -> list[int]:
    """Output indices holding the lifted coordinate of each block."""
    dims, pos = [], 0
    for block in cfg.blocks(n):
        pos += len(block)
        dims.append(pos)
        pos += 1
    return dims


def squared_norm(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def epigraph_embed(x, g: Callable[[np.ndarray], float] = squared_norm) -> np.ndarray:
    """Embed x on the graph of a strictly convex g: (x, g(x))."""
    x = np.asarray(x, dtype=float)
    return np.append(x, g(x))


# ------------------------------------------------------------------------ RBF


@dataclass
class RbfConfig:
    centers: np.ndarray
    width: float
    sparsify_threshold: float | None = None

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if self.width <= 0:
            raise ValueError("RBF width must be positive")
        if self.sparsify_threshold is not None and self.sparsify_threshold < 0:
            raise ValueError("sparsify_threshold must be nonnegative")


def random_rbf_centers(num_centers: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(num_centers, dim))


def rbf_features(s, cfg: RbfConfig) -> np.ndarray:
    diff = cfg.centers - np.asarray(s, dtype=float)[None, :]
    x = np.exp(-np.einsum("ij,ij->i", diff, diff) / (2.0 * cfg.width**2))
    if cfg.sparsify_threshold is not None:
        x[x < cfg.sparsify_threshold] = 0.0
    return x


# ---------------------------------------------------------- transform objects


class Normalized:
    """Raw state scaled to [-1, 1]; the input for a plain network."""

    name = "identity"
    sparse = False

    def __init__(self, bounds):
        self.bounds = np.asarray(bounds, dtype=float)
        self.n_features = len(self.bounds)
        self.upward_dims: list[int] = []
        self.diagnostics: dict = {}

    def __call__(self, state) -> np.ndarray:
        return normalize(state, self.bounds, self.diagnostics)

    def to_dict(self) -> dict:
        return {"type": self.name, "bounds": self.bounds.tolist()}


class LiftProject(Normalized):
    name = "lift_project"

    def __init__(self, bounds, cfg: LiftProjectConfig):
        super().__init__(bounds)
        self.cfg = cfg
        n = len(self.bounds)
        self.upward_dims = lift_project_extra_dims(cfg, n)
        self.n_features = n + len(cfg.blocks(n))

    def __call__(self, state) -> np.ndarray:
        return lift_project(super().__call__(state), self.cfg)

    def to_dict(self) -> dict:
        return {"type": self.name, "bounds": self.bounds.tolist(), **vars(self.cfg)}


class Epigraph(Normalized):
    name = "epigraph"

    def __init__(self, bounds):
        super().__init__(bounds)
        self.n_features = len(self.bounds) + 1
        self.upward_dims = [len(self.bounds)]

    def __call__(self, state) -> np.ndarray:
        return epigraph_embed(super().__call__(state))


class Rbf(Normalized):
    name = "rbf"

    def __init__(self, bounds, cfg: RbfConfig):
        super().__init__(bounds)
        self.cfg = cfg
        self.n_features = len(cfg.centers)

    def __call__(self, state) -> np.ndarray:
        return rbf_features(super().__call__(state), self.cfg)

    def to_dict(self) -> dict:
        return {
            "type": self.name,
            "bounds": self.bounds.tolist(),
            "centers": self.cfg.centers.tolist(),
            "width": self.cfg.width,
            "sparsify_threshold": self.cfg.sparsify_threshold,
        }


def transform_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type")
    if kind == "identity":
        return Normalized(d["bounds"])
    if kind == "epigraph":
        return Epigraph(d["bounds"])
    if kind == "lift_project":
        bounds = d.pop("bounds")
        return LiftProject(bounds, LiftProjectConfig(**d))
    if kind == "rbf":
        return Rbf(d["bounds"], RbfConfig(d["centers"], d["width"], d["sparsify_threshold"]))
    if kind == "tile":
        tables = d.pop("tables", None)
        coder = TileCoder(TileCodingConfig(**d))
        if tables is not None:
            for block, table in zip(coder.blocks, tables):
                if table is not None:
                    block.table = np.asarray(table, dtype=np.int64)
        return coder
    raise ValueError(f"unknown transform type {kind!r}")


def make_transform(kind: str, bounds, rng: np.random.Generator | None = None, **params):
    """Build a named transform over an environment's state bounds.

    ``kind`` is one of identity, tile, lift_project, epigraph, rbf, srbf.
    """
    bounds = np.asarray(bounds, dtype=float)
    if kind == "identity":
        return Normalized(bounds)
    if kind == "epigraph":
        return Epigraph(bounds)
    if kind == "lift_project":
        return LiftProject(bounds, LiftProjectConfig(**params))
    if kind == "tile":
        params = dict(params)
        tiles = params.pop("tiles_per_dim")
        if isinstance(tiles, int):
            tiles = [tiles] * len(bounds)
        return TileCoder(TileCodingConfig(tiles_per_dim=tiles, input_bounds=bounds.tolist(), **params))
    if kind in ("rbf", "srbf"):
        if rng is None:
            raise ValueError("RBF centers need an rng")
        centers = random_rbf_centers(int(params["num_centers"]), len(bounds), rng)
        threshold = params.get("sparsify_threshold", 0.001 if kind == "srbf" else None)
        return Rbf(bounds, RbfConfig(centers, float(params["width"]), threshold))
    raise ValueError(f"unknown transform {kind!r}")
