"""Free-format MPS export and import for the factor-space MIQP.

Grammar (one record per line, fields separated by whitespace)::

    NAME      <name>
    ROWS
     N  OBJ
     E  C<i>                          one per equality row, i = 0..m-1
    COLUMNS
        xF<j>  <row>  <value>         continuous factors, column-major
        MARKER  'MARKER'  'INTORG'
        xB<j>  <row>  <value>         binary factors
        MARKER  'MARKER'  'INTEND'
    RHS
        RHS  OBJ  <-const>
        RHS  C<i>  <b_i>              nonzero entries only
    BOUNDS
     UP BND  xF<j>  1
     BV BND  xB<j>
    QUADOBJ
        <col>  <col>  <H_ij>          upper triangle, objective 1/2 v'Hv
    ENDATA

Values are written with ``repr`` so a round trip is bit exact.  A column with
no entries gets an explicit zero objective coefficient so it is declared.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .miqp import Miqp


class MpsError(ValueError):
    pass


def _names(m: Miqp) -> list[str]:
    return [f"xF{j}" for j in range(m.n_cont)] + [f"xB{j}" for j in range(m.n_bin)]


def _r(v: float) -> str:
    return repr(float(v))


def mps_text(m: Miqp, name: str = "mtlreach") -> str:
    names = _names(m)
    A = sp.csc_matrix(m.A)
    A.sum_duplicates()
    A.sort_indices()
    out = [f"NAME          {name}", "ROWS", " N  OBJ"]
    out += [f" E  C{i}" for i in range(m.m)]
    out.append("COLUMNS")
    marker_open = False
    for j in range(m.n):
        if j == m.n_cont and m.n_bin > 0:
            out.append("    MARKER                 'MARKER'                 'INTORG'")
            marker_open = True
        nm = names[j]
        wrote = False
        if m.q[j] != 0:
            out.append(f"    {nm}  OBJ  {_r(m.q[j])}")
            wrote = True
        for p in range(A.indptr[j], A.indptr[j + 1]):
            if A.data[p] != 0:
                out.append(f"    {nm}  C{A.indices[p]}  {_r(A.data[p])}")
                wrote = True
        if not wrote:
            out.append(f"    {nm}  OBJ  0.0")
    if marker_open:
        out.append("    MARKER                 'MARKER'                 'INTEND'")
    out.append("RHS")
    if m.const != 0:
        out.append(f"    RHS  OBJ  {_r(-m.const)}")
    for i in range(m.m):
        if m.b[i] != 0:
            out.append(f"    RHS  C{i}  {_r(m.b[i])}")
    out.append("BOUNDS")
    for j in range(m.n_cont):
        out.append(f" UP BND  {names[j]}  1.0")
    for j in range(m.n_cont, m.n):
        out.append(f" BV BND  {names[j]}")
    H = sp.triu(sp.csr_matrix(m.H)).tocsr()
    H.sum_duplicates()
    H.sort_indices()
    if H.nnz:
        out.append("QUADOBJ")
        for i in range(m.n):
            for p in range(H.indptr[i], H.indptr[i + 1]):
                if H.data[p] != 0:
                    out.append(f"    {names[i]}  {names[H.indices[p]]}  {_r(H.data[p])}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def export_mip(m: Miqp, path, name: str = "mtlreach") -> Path:
    path = Path(path)
    try:
        path.write_text(mps_text(m, name))
    except OSError as exc:
        raise OSError(f"could not write MPS file {path}: {exc}") from exc
    return path


def read_mps(path) -> Miqp:
    """Parse a file written by :func:`export_mip` back into an MIQP (without decode data)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"could not read MPS file {path}: {exc}") from exc
    section = None
    rows: dict[str, int] = {}
    cols: dict[str, int] = {}
    binary: set[str] = set()
    in_int = False
    q_ent, a_ent, h_ent = {}, [], []
    b_ent: dict[int, float] = {}
    const = 0.0
    for ln, raw in enumerate(lines, 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            section = tok[0]
            if section not in ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "QUADOBJ", "ENDATA"):
                raise MpsError(f"{path}:{ln}: unknown section {section!r}")
            continue
        if section == "ROWS":
            kind, nm = tok
            if kind == "N":
                continue
            if kind != "E":
                raise MpsError(f"{path}:{ln}: only equality rows are supported, got {kind!r}")
            rows[nm] = len(rows)
        elif section == "COLUMNS":
            if len(tok) == 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            nm = tok[0]
            if nm not in cols:
                cols[nm] = len(cols)
                if in_int:
                    binary.add(nm)
            for rn, val in zip(tok[1::2], tok[2::2]):
                v = float(val)
                if rn == "OBJ":
                    if v != 0:
                        q_ent[cols[nm]] = v
                else:
                    if rn not in rows:
                        raise MpsError(f"{path}:{ln}: unknown row {rn!r}")
                    a_ent.append((rows[rn], cols[nm], v))
        elif section == "RHS":
            for rn, val in zip(tok[1::2], tok[2::2]):
                if rn == "OBJ":
                    const = -float(val)
                else:
                    b_ent[rows[rn]] = float(val)
        elif section == "BOUNDS":
            kind = tok[0]
            if kind == "BV":
                binary.add(tok[2])
            elif kind == "UP":
                if float(tok[3]) != 1.0:
                    raise MpsError(f"{path}:{ln}: continuous factors must be bounded by 1")
            else:
                raise MpsError(f"{path}:{ln}: unsupported bound type {kind!r}")
        elif section == "QUADOBJ":
            h_ent.append((cols[tok[0]], cols[tok[1]], float(tok[2])))
    n = len(cols)
    order = list(cols)
    n_bin = sum(1 for c in order if c in binary)
    n_cont = n - n_bin
    if any(c in binary for c in order[:n_cont]):
        raise MpsError(f"{path}: binary columns must follow the continuous ones")
    q = np.zeros(n)
    for j, v in q_ent.items():
        q[j] = v
    m = len(rows)
    if a_ent:
        r, c, v = zip(*a_ent)
        A = sp.csr_matrix((v, (r, c)), shape=(m, n))
    else:
        A = sp.csr_matrix((m, n))
    b = np.zeros(m)
    for i, v in b_ent.items():
        b[i] = v
    if h_ent:
        hi, hj, hv = zip(*h_ent)
        hi, hj, hv = np.array(hi), np.array(hj), np.array(hv)
        off = hi != hj
        H = sp.csr_matrix(
            (np.concatenate([hv, hv[off]]), (np.concatenate([hi, hj[off]]), np.concatenate([hj, hi[off]]))), shape=(n, n)
        )
    else:
        H = sp.csr_matrix((n, n))
    return Miqp(H, q, const, A, b, n_cont, n_bin)
