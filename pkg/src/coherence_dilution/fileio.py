"""JSON formats for states, channels, protocols and reports.

Matrices are row-major lists of rows; each entry is ``[re, im]`` (a bare
number is accepted as a real entry on input)::

    state:    {"dim": d, "matrix": [[[re, im], ...], ...]}
    channel:  {"in_dim": a, "out_dim": b, "kraus": [matrix, ...]}
              {"in_dim": a, "out_dim": b, "choi": matrix}
    protocol: channel fields plus {"metadata": {"class", "M", "epsilon",
              "fidelity", "cost_bits", "bounds": [lo, hi], "target": state}}
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .core import Channel, ChannelError, ChoiChannel, DensityMatrix, KrausChannel, StateError

SIG_DIGITS = 12


class FormatError(ValueError):
    """Input file is missing, is not JSON, or does not follow the documented grammar."""


def matrix_to_json(a) -> list:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    return [[[float(x.real), float(x.imag)] for x in row] for row in a]


def matrix_from_json(obj) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise FormatError("matrix must be a non-empty list of rows")
    rows = []
    for r in obj:
        row = []
        for x in r:
            if isinstance(x, (int, float)) and not isinstance(x, bool):
                row.append(complex(x, 0.0))
            elif (isinstance(x, list) and len(x) == 2
                  and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)):
                row.append(complex(x[0], x[1]))
            else:
                raise FormatError(f"matrix entry {x!r} is not a number or [re, im] pair")
        rows.append(row)
    if len({len(r) for r in rows}) != 1:
        raise FormatError("matrix rows have unequal lengths")
    return np.array(rows, dtype=complex)


def state_to_json(rho: DensityMatrix) -> dict:
    return {"dim": rho.dim, "matrix": matrix_to_json(rho.matrix)}


def state_from_json(obj) -> DensityMatrix:
    if not isinstance(obj, dict) or "matrix" not in obj:
        raise FormatError("state file needs a 'matrix' field")
    m = matrix_from_json(obj["matrix"])
    if "dim" in obj and obj["dim"] != m.shape[0]:
        raise FormatError(f"dim {obj['dim']} disagrees with matrix of size {m.shape[0]}")
    if m.shape[0] != m.shape[1]:
        raise FormatError("state matrix must be square")
    try:
        return DensityMatrix(m)
    except StateError as exc:
        raise FormatError(f"not a density matrix: {exc}") from None


def channel_to_json(ch: Channel) -> dict:
    out = {"in_dim": ch.in_dim, "out_dim": ch.out_dim}
    if isinstance(ch, KrausChannel):
        out["kraus"] = [matrix_to_json(k) for k in ch.kraus_ops]
    else:
        out["choi"] = matrix_to_json(ch.choi)
    return out


def channel_from_json(obj) -> Channel:
    if not isinstance(obj, dict):
        raise FormatError("channel file must hold a JSON object")
    try:
        if "kraus" in obj:
            ops = obj["kraus"]
            if not isinstance(ops, list) or not ops:
                raise FormatError("'kraus' must be a non-empty list of matrices")
            ch = KrausChannel([matrix_from_json(k) for k in ops])
        elif "choi" in obj:
            j = matrix_from_json(obj["choi"])
            n = j.shape[0]
            if "in_dim" in obj and "out_dim" in obj:
                a, b = int(obj["in_dim"]), int(obj["out_dim"])
            else:
                a = b = math.isqrt(n)
                if a * a != n:
                    raise FormatError("Choi matrix without dimensions must have square size")
            ch = ChoiChannel(j, a, b)
        else:
            raise FormatError("channel file needs 'kraus' or 'choi'")
    except ChannelError as exc:
        raise FormatError(str(exc)) from None
    for key, val in (("in_dim", ch.in_dim), ("out_dim", ch.out_dim)):
        if key in obj and obj[key] != val:
            raise FormatError(f"{key}={obj[key]} disagrees with the operators ({val})")
    return ch


def protocol_to_json(p) -> dict:
    out = channel_to_json(p.channel)
    out["metadata"] = {
        "class": p.op_class.value,
        "M": p.M,
        "epsilon": p.epsilon,
        "fidelity": p.achieved_fidelity,
        "cost_bits": p.cost_bits,
        "bounds": [p.bound_lo, p.bound_hi],
        "target": state_to_json(p.target),
    }
    return out


def round_floats(obj, digits: int = SIG_DIGITS):
    """Round every float to ``digits`` significant digits (non-finite values become strings)."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    if isinstance(obj, np.generic):
        return round_floats(obj.item(), digits)
    return obj


def dumps(obj) -> str:
    return json.dumps(round_floats(obj), indent=2, sort_keys=True)


def load_json(path) -> object:
    try:
        with Path(path).open() as fh:
            return json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from None


def load_state(path) -> DensityMatrix:
    return state_from_json(load_json(path))


def load_channel(path) -> Channel:
    return channel_from_json(load_json(path))
