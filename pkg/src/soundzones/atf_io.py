"""
ATF container files.

Layout (UTF-8 JSON, one object)::

    {
      "format": "soundzones-atf",
      "version": 1,
      "records": [
        {
          "freq_hz": 1000.0,
          "M_b": 16, "M_d": 16, "L": 9,
          "entries": [re, im, re, im, ...],          # row-major, M*L pairs
          "validation_entries": [re, im, ...]        # optional, same layout
        },
        ...
      ]
    }

Numbers are written with ``repr`` so every IEEE-754 double round-trips
exactly. Row m of the matrix is control point m (bright rows first), column
l is loudspeaker l.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .scene import ATFMatrix

FORMAT = "soundzones-atf"
VERSION = 1


class ATFFileError(ValueError):
    pass


def _flatten(entries: np.ndarray) -> list[float]:
    pairs = np.column_stack([entries.real.ravel(), entries.imag.ravel()])
    return [float(v) for v in pairs.ravel()]


def _unflatten(values, m: int, l: int, where: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (2 * m * l,):
        raise ATFFileError(f"{where}: expected {2 * m * l} numbers, got {arr.size}")
    return (arr[0::2] + 1j * arr[1::2]).reshape(m, l)


def write_atf_file(path, atfs, validation=None):
    """
    Write one record per ATF matrix.

    ``validation`` is an optional list, parallel to ``atfs``, of matrices
    measured at the validation points.
    """
    records = []
    for i, H in enumerate(atfs):
        rec = {"freq_hz": float(H.freq), "M_b": int(H.n_bright), "M_d": int(H.n_dark),
               "L": int(H.shape[1]), "entries": _flatten(H.entries)}
        if validation is not None and validation[i] is not None:
            V = validation[i]
            if V.shape != H.shape:
                raise ATFFileError(f"record {i}: validation shape {V.shape} != {H.shape}")
            rec["validation_entries"] = _flatten(V.entries)
        records.append(rec)
    doc = {"format": FORMAT, "version": VERSION, "records": records}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def read_atf_file(path, n_bright=None, n_dark=None, n_speakers=None):
    """
    Read all records as ``{freq_hz: (ATFMatrix, ATFMatrix or None)}``.

    Passing the scene dimensions checks every record against them.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ATFFileError(f"{path}: {exc}") from exc
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise ATFFileError(f"{path}: not a {FORMAT} v{VERSION} file")
    out = {}
    for i, rec in enumerate(doc.get("records", [])):
        where = f"{path} record {i}"
        try:
            f, mb, md, l = float(rec["freq_hz"]), int(rec["M_b"]), int(rec["M_d"]), int(rec["L"])
        except KeyError as exc:
            raise ATFFileError(f"{where}: missing field {exc}") from None
        for name, expected, got in (("M_b", n_bright, mb), ("M_d", n_dark, md),
                                    ("L", n_speakers, l)):
            if expected is not None and expected != got:
                raise ATFFileError(f"{where}: {name}={got} but the scene has {expected}")
        H = ATFMatrix(f, _unflatten(rec["entries"], mb + md, l, where), mb)
        V = None
        if "validation_entries" in rec:
            V = ATFMatrix(f, _unflatten(rec["validation_entries"], mb + md, l, where), mb)
        out[f] = (H, V)
    return out
