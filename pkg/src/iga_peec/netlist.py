"""Equivalent-circuit stamping of the potential matrix and netlist file output.

Node numbering: ground is 0, element i connects at node i (1-based), and
the domain with tag d gets node N+d.  Each element carries a capacitor to
ground of value 1/P_ii, a zero-volt source in series that makes the branch
current observable, and one CCCS per other element expressing the mutual
coupling as a gain P_ij/P_ii on that element's branch current.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import NetlistStampError


@dataclass(frozen=True)
class Capacitor:
    name: str
    node_pos: int
    node_neg: int
    farad: float


@dataclass(frozen=True)
class VSource:
    name: str
    node_pos: int
    node_neg: int
    volt: float


@dataclass(frozen=True)
class Cccs:
    name: str
    node_pos: int
    node_neg: int
    control: str
    gain: float


@dataclass(frozen=True)
class Netlist:
    n_patches: int
    n_domains: int
    capacitors: tuple = field(default_factory=tuple)
    vsources: tuple = field(default_factory=tuple)
    cccs: tuple = field(default_factory=tuple)

    @property
    def component_count(self):
        return len(self.capacitors) + len(self.vsources) + len(self.cccs)


def domain_node(n_patches, tag):
    return n_patches + int(tag)


def stamp(matrix, domains):
    """Build the circuit for a symmetric potential matrix.

    ``domains`` is the per-element domain tag array (or an object with a
    ``domains`` attribute such as ElementMesh).
    """
    entries = getattr(matrix, "entries", matrix)
    entries = np.asarray(entries, dtype=float)
    tags = np.asarray(getattr(domains, "domains", domains), dtype=int)
    n = entries.shape[0]
    if tags.shape != (n,):
        raise NetlistStampError(
            f"domain tags have shape {tags.shape}, expected ({n},)")
    diag = np.diag(entries)
    if np.any(diag <= 0.0):
        i = int(np.argmin(diag))
        raise NetlistStampError(
            f"potential matrix diagonal entry {i + 1} is {diag[i]:.3e}; "
            "cannot stamp a non-positive self coefficient")

    caps = tuple(Capacitor(f"C_{i + 1}", 0, i + 1, 1.0 / diag[i])
                 for i in range(n))
    vsrc = tuple(VSource(f"V_{i + 1}", domain_node(n, tags[i]), i + 1, 0.0)
                 for i in range(n))
    cccs = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            cccs.append(Cccs(f"F_{i + 1}_{j + 1}", 0, i + 1, f"V_{j + 1}",
                             entries[i, j] / diag[i]))
    return Netlist(n, len(np.unique(tags)), caps, vsrc, tuple(cccs))


def _fmt(value):
    return f"{value:.5g}"


def write_netlist(netlist, path):
    """Write the circuit in SPICE-like card format, 5 significant digits."""
    lines = ["* iga-peec netlist"]
    for c in netlist.capacitors:
        lines.append(f"{c.name} {c.node_pos} {c.node_neg} {_fmt(c.farad)}")
    for v in netlist.vsources:
        lines.append(f"{v.name} {v.node_pos} {v.node_neg} {_fmt(v.volt)}")
    for f in netlist.cccs:
        lines.append(
            f"{f.name} {f.node_pos} {f.node_neg} {f.control} {_fmt(f.gain)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
