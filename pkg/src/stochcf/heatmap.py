"""Adjacency-matrix pictures as binary PPM (P6) images."""

from __future__ import annotations

import numpy as np

from .network import Network

__all__ = ["adjacency_heatmap", "encode_ppm", "decode_ppm"]

WHITE = (255, 255, 255)
RED = (255, 0, 0)


def adjacency_heatmap(net: Network, z, scale: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Render the adjacency matrix with rows and columns grouped by cluster.

    Nodes are ordered by cluster (clusters in order of their smallest
    member, nodes by index within a cluster). Each matrix cell is a
    ``scale`` x ``scale`` square, white for no edge and darker for heavier
    edges. Red lines mark cluster boundaries, drawn over the first pixel
    row and column of every cluster after the first.

    Returns ``(image, order)``: an ``(N*scale, N*scale, 3)`` uint8 array and
    the node order used.
    """
    if scale < 1:
        raise ValueError("scale must be a positive integer")
    z = np.asarray(z, dtype=np.int64)
    if z.size != net.N:
        raise ValueError(f"clustering has {z.size} nodes, network has {net.N}")
    first = {}
    for i, c in enumerate(z):
        first.setdefault(int(c), i)
    order = np.array(sorted(range(net.N), key=lambda i: (first[int(z[i])], i)), dtype=np.int64)
    a = net.adjacency()[np.ix_(order, order)].astype(np.float64)
    top = a.max() if a.size else 0.0
    shade = np.full(a.shape, 255, dtype=np.uint8)
    if top > 0:
        # lightest edge is still clearly visible
        level = 200.0 * (1.0 - a / top)
        shade = np.where(a > 0, level.round(), 255).astype(np.uint8)
    img = np.repeat(np.repeat(shade, scale, axis=0), scale, axis=1)
    img = np.repeat(img[:, :, None], 3, axis=2)
    zo = z[order]
    for pos in range(1, net.N):
        if zo[pos] != zo[pos - 1]:
            img[pos * scale, :, :] = RED
            img[:, pos * scale, :] = RED
    return img, order


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    """Inverse of :func:`encode_ppm` (P6, maxval 255, no comments)."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6" or parts[2] != b"255":
        raise ValueError("unsupported PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)
