"""Hidden-node response maps over a 2-D state space.

Matrices are indexed [velocity row, position column] with both axes
ascending.  PGM images are flipped vertically so the largest second-axis
value sits at the top, and each node is min-max scaled to 0..255.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from ..approximator import ReluNet
from ..evaluation import feature_matrix

_FOUR_NEIGHBOURS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


class HeatmapError(ValueError):
    pass


def state_grid(bounds, n: int) -> np.ndarray:
    """(n*n, 2) states; row-major over (second dim, first dim)."""
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != (2, 2):
        raise HeatmapError("response maps are defined for 2-D state spaces only")
    xs = np.linspace(bounds[0, 0], bounds[0, 1], n)
    ys = np.linspace(bounds[1, 0], bounds[1, 1], n)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def response_maps(net: ReluNet, transform, bounds, n: int, nodes=None) -> dict[int, np.ndarray]:
    if not isinstance(net, ReluNet):
        raise HeatmapError("response maps need a network with a hidden layer")
    grid = state_grid(bounds, n)
    X = feature_matrix(transform, grid)
    if X.shape[1] != net.shape[0]:
        raise HeatmapError(f"transform yields {X.shape[1]} features, checkpoint expects {net.shape[0]}")
    nodes = range(net.shape[1]) if nodes is None else nodes
    out = {}
    for k in nodes:
        if not 0 <= k < net.shape[1]:
            raise HeatmapError(f"node {k} out of range")
        out[int(k)] = np.maximum(X @ net.W1[k] + net.b1[k], 0.0).reshape(n, n)
    return out


def count_components(response: np.ndarray) -> int:
    """Connected components (4-neighbour) of the node's activation region."""
    _, n = ndimage.label(response > 0.0, structure=_FOUR_NEIGHBOURS)
    return int(n)


def to_gray(response: np.ndarray) -> np.ndarray:
    lo, hi = float(response.min()), float(response.max())
    if hi <= lo:
        return np.zeros(response.shape, dtype=np.uint8)
    return np.round((response - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image[::-1], dtype=np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise HeatmapError("not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    img = np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
    return img[::-1].copy()


def export_heatmaps(net, transform, bounds, n: int, out_dir, nodes=None) -> dict[int, int]:
    """Write node_XXXX.csv / .pgm per node plus components.csv; return the
    component count per node."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    maps = response_maps(net, transform, bounds, n, nodes)
    counts = {}
    for k, resp in maps.items():
        np.savetxt(out / f"node_{k:04d}.csv", resp, delimiter=",", fmt="%.17g")
        write_pgm(out / f"node_{k:04d}.pgm", to_gray(resp))
        counts[k] = count_components(resp)
    with open(out / "components.csv", "w", encoding="utf-8") as fh:
        fh.write("node,components\n")
        for k, c in counts.items():
            fh.write(f"{k},{c}\n")
    return counts
