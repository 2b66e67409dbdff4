"""Modified nodal analysis for the stamped capacitor/CCCS circuit class.

This is the independent oracle for the netlist path: parse the card file,
solve the AC system at some angular frequency, and read element charges
back off the zero-volt sense currents as q = I/(i omega).  Unknowns are
the non-ground node voltages followed by one branch current per voltage
source; ground (node 0) is eliminated.
"""
import cmath

import numpy as np

from .errors import NetlistParseError, SingularMatrixError
from .netlist import Capacitor, Cccs, Netlist, VSource, domain_node, stamp
from .solver import solve_direct

_RESIDUAL_TOL = 1e-12


def parse_netlist(path):
    """Read a netlist card file back into memory.

    Accepts the write_netlist format plus optional `Vsrc_<d>` excitation
    cards; `*` lines and `;` suffixes are comments.
    """
    caps, vsrc, cccs = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split(";", 1)[0].strip()
            if not line or line.startswith("*"):
                continue
            tok = line.split()
            kind = tok[0][0].upper()
            try:
                if kind == "C":
                    if len(tok) != 4:
                        raise ValueError("capacitor card needs 4 fields")
                    caps.append(Capacitor(tok[0], int(tok[1]), int(tok[2]),
                                          float(tok[3])))
                elif kind == "V":
                    if len(tok) != 4:
                        raise ValueError("voltage-source card needs 4 fields")
                    vsrc.append(VSource(tok[0], int(tok[1]), int(tok[2]),
                                        float(tok[3])))
                elif kind == "F":
                    if len(tok) != 5:
                        raise ValueError("CCCS card needs 5 fields")
                    cccs.append(Cccs(tok[0], int(tok[1]), int(tok[2]),
                                     tok[3], float(tok[4])))
                else:
                    raise ValueError(f"unknown card type {tok[0]!r}")
            except ValueError as exc:
                raise NetlistParseError(str(exc), line=lineno) from None
    if not caps and not vsrc and not cccs:
        raise NetlistParseError(f"no components in {path}")
    names = {v.name for v in vsrc}
    for f in cccs:
        if f.control not in names:
            raise NetlistParseError(
                f"CCCS {f.name} references missing source {f.control}")
    sense_nodes = {v.node_pos for v in vsrc if v.name.startswith("V_")}
    return Netlist(len(caps), len(sense_nodes), tuple(caps), tuple(vsrc),
                   tuple(cccs))


def _excitation_sources(netlist, excitations):
    extra = []
    for d, volt in sorted((excitations or {}).items()):
        node = domain_node(netlist.n_patches, d)
        extra.append(VSource(f"Vsrc_{int(d)}", node, 0, float(volt)))
    return extra


def _check_grounded(order, capacitors, sources):
    """Every node needs a capacitor/source path to ground.

    A node reachable only through CCCS terminals leaves its own voltage out
    of every equation, so the system is singular regardless of values.
    """
    parent = {0: 0}
    for n in order:
        parent[n] = n

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for c in capacitors:
        parent[find(c.node_pos)] = find(c.node_neg)
    for v in sources:
        parent[find(v.node_pos)] = find(v.node_neg)
    loose = [n for n in order if find(n) != find(0)]
    if loose:
        raise SingularMatrixError(
            f"floating subcircuit: node(s) {loose} have no capacitor or "
            "source path to ground")


def _build_system(netlist, extra_sources, omega):
    """Complex MNA matrix and right-hand side; returns index maps too."""
    sources = list(netlist.vsources) + list(extra_sources)
    nodes = set()
    for c in netlist.capacitors:
        nodes.update((c.node_pos, c.node_neg))
    for v in sources:
        nodes.update((v.node_pos, v.node_neg))
    for f in netlist.cccs:
        nodes.update((f.node_pos, f.node_neg))
    nodes.discard(0)
    order = sorted(nodes)
    row = {n: k for k, n in enumerate(order)}
    _check_grounded(order, netlist.capacitors, sources)
    nv = len(order)
    dim = nv + len(sources)
    a = np.zeros((dim, dim), dtype=complex)
    b = np.zeros(dim, dtype=complex)

    for c in netlist.capacitors:
        y = 1j * omega * c.farad
        p, m = c.node_pos, c.node_neg
        if p:
            a[row[p], row[p]] += y
        if m:
            a[row[m], row[m]] += y
        if p and m:
            a[row[p], row[m]] -= y
            a[row[m], row[p]] -= y

    # branch current flows from node_pos through the source to node_neg
    scol = {}
    for k, v in enumerate(sources):
        col = nv + k
        scol[v.name] = col
        if v.node_pos:
            a[row[v.node_pos], col] += 1.0
            a[col, row[v.node_pos]] += 1.0
        if v.node_neg:
            a[row[v.node_neg], col] -= 1.0
            a[col, row[v.node_neg]] -= 1.0
        b[col] = v.volt

    for f in netlist.cccs:
        if f.control not in scol:
            raise NetlistParseError(
                f"CCCS {f.name} references missing source {f.control}")
        col = scol[f.control]
        if f.node_pos:
            a[row[f.node_pos], col] += f.gain
        if f.node_neg:
            a[row[f.node_neg], col] -= f.gain

    return a, b, row, sources, scol


def mna_solve(netlist, excitations=None, omega=2.0 * cmath.pi * 50.0):
    """Solve the AC system; returns (node voltage map, source current map).

    Ground is included in the voltage map as 0.  Raises SingularMatrixError
    for floating subcircuits.
    """
    if omega <= 0.0:
        raise NetlistParseError(f"omega must be positive, got {omega}")
    extra = _excitation_sources(netlist, excitations)
    a, b, row, sources, scol = _build_system(netlist, extra, omega)
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(
            "MNA matrix is singular; circuit has a floating subcircuit")
    scale = np.abs(b).max()
    if scale:
        resid = np.abs(a @ x - b).max() / scale
        if resid > _RESIDUAL_TOL:
            raise SingularMatrixError(
                f"MNA residual {resid:.3e} exceeds {_RESIDUAL_TOL:.0e}")
    volts = {0: 0j}
    for n, k in row.items():
        volts[n] = complex(x[k])
    currents = {name: complex(x[col]) for name, col in scol.items()}
    return volts, currents


def extract_charges(netlist, excitations, omega=2.0 * cmath.pi * 50.0):
    """Element charge vector from the sense-source currents, q = I/(i omega)."""
    _, currents = mna_solve(netlist, excitations, omega)
    q = np.empty(netlist.n_patches, dtype=complex)
    for i in range(netlist.n_patches):
        name = f"V_{i + 1}"
        if name not in currents:
            raise NetlistParseError(f"netlist has no sense source {name}")
        q[i] = currents[name] / (1j * omega)
    return q


def verify_netlist(matrix, domains, excitations, omega=2.0 * cmath.pi * 50.0):
    """Charge mismatch between the stamped circuit and the direct solve.

    Stamps in memory at full precision, solves by MNA, and compares with
    the LU charge vector for the same domain potentials.  Returns a report
    dict {mismatch, n, omega}.
    """
    tags = np.asarray(getattr(domains, "domains", domains), dtype=int)
    net = stamp(matrix, tags)
    q_mna = extract_charges(net, excitations, omega)
    entries = getattr(matrix, "entries", matrix)
    lut = {int(d): float(v) for d, v in excitations.items()}
    phi = np.array([lut[int(d)] for d in tags])
    q_lu = solve_direct(entries, phi)
    scale = np.abs(q_lu).max()
    if scale == 0.0:
        mismatch = float(np.abs(q_mna).max())
    else:
        mismatch = float(np.abs(q_mna - q_lu).max() / scale)
    return {"mismatch": mismatch, "n": int(net.n_patches), "omega": float(omega)}
