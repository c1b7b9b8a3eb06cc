"""Bundled benchmark networks with their reported factions."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .network import Network, parse_clustering, parse_edge_list

__all__ = ["load_karate", "load_monks", "dataset_text", "DATASETS"]

DATASETS = {
    "karate": ("karate.txt", "karate_factions.txt", True),
    "monks": ("monks.txt", "monks_factions.txt", False),
}


def dataset_text(name: str) -> tuple[str, str]:
    """Raw edge-list and faction file contents for a bundled dataset."""
    edges, factions, _ = DATASETS[name]
    root = resources.files("stochcf") / "data"
    return (root / edges).read_text(encoding="utf-8"), (root / factions).read_text(encoding="utf-8")


def _load(name: str, weighted: bool) -> tuple[Network, np.ndarray]:
    edges, factions = dataset_text(name)
    net = parse_edge_list(edges, directed=False, weighted=weighted,
                          binarize=not weighted and DATASETS[name][2])
    return net, parse_clustering(factions, net)


def load_karate(weighted: bool = True) -> tuple[Network, np.ndarray]:
    """Zachary's karate club: 34 members, 78 ties weighted by interaction contexts.

    The second value assigns each member to a faction (0 for the
    instructor's side, 1 for the officer's): 16 and 18 members. Member 9
    sides with the officer by friendship ties but joined the instructor's
    club; relabel him to get the 17/17 membership split.
    """
    return _load("karate", weighted)


def load_monks() -> tuple[Network, np.ndarray]:
    """Sampson's 18 novices, linked when either reported liking the other.

    Factions are 0 = Young Turks, 1 = Outcasts, 2 = Loyal Opposition in
    order of first appearance in the bundled file.
    """
    return _load("monks", False)
