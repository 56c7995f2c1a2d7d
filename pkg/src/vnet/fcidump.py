"""FCIDUMP-compatible exchange files for (scalar, one-body, two-body) Hamiltonian data.

Layout: an optional namelist header ``&FCI NORB=n,NELEC=m,MS2=s`` (optionally
spanning several lines and closed by ``&END`` or ``/``) followed by data lines
``value p q r s`` with 1-based orbital indices:

* ``p q r s`` all zero  -> scalar term
* ``r s`` zero          -> one-body element (p, q), symmetrized
* otherwise             -> two-body Mulliken element (pq|rs), expanded over its orbit

Extra header keys written by this package (``SYMM``, ``KIND``, ``GEOM``) are ignored
by other FCIDUMP readers.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .tensors import (
    InteractionTensor2B,
    Kind,
    OneBodyTensor,
    ScalarTerm,
    Symmetry,
    canonical_unit,
    symmetry_orbit,
)


class ExchangeFormatError(ValueError):
    """Base class for exchange-file parse failures."""


class HeaderError(ExchangeFormatError):
    pass


class IndexRangeError(ExchangeFormatError):
    pass


class ValueParseError(ExchangeFormatError):
    pass


@dataclass
class ExchangeData:
    scalar: ScalarTerm
    one_body: OneBodyTensor
    two_body: InteractionTensor2B
    header: dict = field(default_factory=dict)

    @property
    def n_elec(self) -> int | None:
        v = self.header.get("NELEC")
        return int(v) if v is not None else None


_KEY_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^=]*?)(?=,?\s*[A-Za-z_][A-Za-z0-9_]*\s*=|,?\s*$)")


def _parse_header(text: str, lineno: int) -> dict:
    body = text.strip()
    body = re.sub(r"^&FCI", "", body, flags=re.IGNORECASE)
    body = re.sub(r"(&END|/)\s*$", "", body.strip(), flags=re.IGNORECASE)
    out = {}
    for m in _KEY_RE.finditer(body.strip()):
        out[m.group(1).upper()] = m.group(2).strip().rstrip(",")
    for key in ("NORB", "NELEC", "MS2"):
        if key in out:
            try:
                out[key] = int(out[key])
            except ValueError:
                raise HeaderError(f"line {lineno}: header field {key}={out[key]!r} is not an integer") from None
    if "NORB" in out and out["NORB"] < 1:
        raise HeaderError(f"line {lineno}: NORB must be positive")
    return out


def _is_data_line(line: str) -> bool:
    tok = line.split()
    if len(tok) != 5:
        return False
    try:
        float(tok[0].replace("D", "E").replace("d", "e"))
        [int(t) for t in tok[1:]]
    except ValueError:
        return False
    return True


def read_exchange_file(path, kind: Kind | None = None, symmetry: Symmetry | None = None,
                       geometry: float | None = None) -> ExchangeData:
    with open(path) as fh:
        lines = fh.read().splitlines()

    header: dict = {}
    i = 0
    while i < len(lines) and not lines[i].strip():
        i += 1
    if i < len(lines) and lines[i].lstrip().upper().startswith("&FCI"):
        start = i
        chunk = [lines[i]]
        closed = bool(re.search(r"(&END|/)\s*$", lines[i].strip(), re.IGNORECASE))
        i += 1
        while i < len(lines) and not closed:
            if _is_data_line(lines[i]):
                break
            chunk.append(lines[i])
            closed = bool(re.search(r"(&END|/)\s*$", lines[i].strip(), re.IGNORECASE))
            i += 1
        header = _parse_header(" ".join(chunk), start + 1)
    elif i < len(lines) and lines[i].lstrip().startswith("&"):
        raise HeaderError(f"line {i + 1}: unrecognised namelist header {lines[i].strip()!r}")

    records = []
    for lineno in range(i + 1, len(lines) + 1):
        line = lines[lineno - 1].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 5:
            raise ValueParseError(f"line {lineno}: expected 'value p q r s', got {line!r}")
        try:
            value = float(tok[0].replace("D", "E").replace("d", "e"))
        except ValueError:
            raise ValueParseError(f"line {lineno}: non-numeric value {tok[0]!r}") from None
        try:
            idx = tuple(int(t) for t in tok[1:])
        except ValueError:
            raise ValueParseError(f"line {lineno}: non-integer orbital index in {line!r}") from None
        if not np.isfinite(value):
            raise ValueParseError(f"line {lineno}: non-finite value {tok[0]!r}")
        records.append((lineno, value, idx))

    norb = header.get("NORB")
    if norb is None:
        norb = max((max(idx) for _, _, idx in records), default=0)
        if norb < 1:
            raise HeaderError("cannot infer NORB: no header and no orbital indices")
    for lineno, _, idx in records:
        if any(j < 0 or j > norb for j in idx):
            raise IndexRangeError(f"line {lineno}: orbital index out of range 1..{norb} in {idx}")
        p, q, r, s = idx
        if (p == 0 or q == 0) and any(idx):
            raise IndexRangeError(f"line {lineno}: zero index in unsupported position {idx}")
        if (r == 0) != (s == 0):
            raise IndexRangeError(f"line {lineno}: half-specified ket pair {idx}")

    sym = symmetry
    if sym is None:
        sym = Symmetry(int(header["SYMM"])) if "SYMM" in header else Symmetry.EIGHTFOLD
    if kind is None:
        kind = Kind(header["KIND"].strip("'\"").upper()) if "KIND" in header else Kind.BARE
    if geometry is None:
        geometry = float(header["GEOM"]) if "GEOM" in header else 0.0

    scalar = 0.0
    h = np.zeros((norb, norb))
    v = np.zeros((norb,) * 4)
    for _, value, (p, q, r, s) in records:
        if p == q == r == s == 0:
            scalar = value
        elif r == 0 and s == 0:
            h[p - 1, q - 1] = h[q - 1, p - 1] = value
        else:
            for t in symmetry_orbit((p - 1, q - 1, r - 1, s - 1), sym):
                v[t] = value
    return ExchangeData(
        ScalarTerm(scalar),
        OneBodyTensor(h, kind, geometry),
        InteractionTensor2B(v, sym, kind, geometry),
        header,
    )


def write_exchange_file(path, scalar: ScalarTerm | float, one_body: OneBodyTensor | np.ndarray,
                        two_body: InteractionTensor2B, n_elec: int = 0, ms2: int = 0,
                        tol: float = 0.0) -> None:
    """Write canonical-unit entries with 17 significant digits.

    Entries with ``|value| <= tol`` are skipped (tol=0 keeps every nonzero).
    """
    n = two_body.n_act
    c = scalar.value if isinstance(scalar, ScalarTerm) else float(scalar)
    h = one_body.values if isinstance(one_body, OneBodyTensor) else np.asarray(one_body, dtype=float)
    fmt = "{:.16e} {:d} {:d} {:d} {:d}\n"
    out = [
        f"&FCI NORB={n},NELEC={n_elec},MS2={ms2},SYMM={two_body.symmetry.value},"
        f"KIND={two_body.kind.value},GEOM={two_body.geometry!r} &END\n"
    ]
    keys = canonical_unit(n, two_body.symmetry)
    vals = two_body.values[tuple(keys.T)]
    for (p, q, r, s), val in zip(keys.tolist(), vals.tolist()):
        if abs(val) > tol:
            out.append(fmt.format(val, p + 1, q + 1, r + 1, s + 1))
    for p in range(n):
        for q in range(p + 1):
            if abs(h[p, q]) > tol:
                out.append(fmt.format(h[p, q], p + 1, q + 1, 0, 0))
    out.append(fmt.format(c, 0, 0, 0, 0))
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.writelines(out)
    os.replace(tmp, path)
