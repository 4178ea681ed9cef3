"""File formats: matrix CSV, layer/network/kernel-bank JSON, and JSON output.

Matrix CSV has one row per line, comma-separated decimal literals and no
header.  Blank lines and lines starting with ``#`` are ignored, which
lets written files carry the seed that produced them.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .conv import ConvSpec, Kernel
from .dense import DenseLayer
from .errors import CsvFormatError, DimensionError
from .network import ReluNetwork


def parse_matrix_csv(text, source="<csv>"):
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        values = []
        col = 1
        for field in line.split(","):
            tok = field.strip()
            try:
                v = float(tok)
            except ValueError:
                raise CsvFormatError(f"{source}: cannot parse {tok!r} as a number",
                                     line=lineno, column=col) from None
            if not math.isfinite(v):
                raise CsvFormatError(f"{source}: non-finite value {tok!r}", line=lineno,
                                     column=col)
            values.append(v)
            col += len(field) + 1
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise CsvFormatError(f"{source}: expected {width} values, found {len(values)}",
                                 line=lineno, column=1)
        rows.append(values)
    if not rows:
        raise CsvFormatError(f"{source}: no data rows", line=1, column=1)
    return np.asarray(rows, dtype=float)


def read_matrix_csv(path):
    path = Path(path)
    return parse_matrix_csv(path.read_text(), source=str(path))


def read_vector_csv(path):
    """A vector stored as one row or one column."""
    M = read_matrix_csv(path)
    if M.shape[0] != 1 and M.shape[1] != 1:
        raise CsvFormatError(f"{path}: expected a single row or column, got shape {M.shape}",
                             line=1, column=1)
    return M.reshape(-1)


def fmt_float(v):
    return format(float(v), ".17g")


def format_matrix_csv(M, comments=()):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"# {c}" for c in comments]
    lines += [",".join(fmt_float(v) for v in row) for row in M]
    return "\n".join(lines) + "\n"


def dumps_json(obj, indent=2):
    """JSON text with every float written to 17 significant digits."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
                return "[" + ", ".join(enc(v, level + 1) for v in seq) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in seq) + "\n" + end + "]"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if o is None:
            return "null"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            if not math.isfinite(o):
                return "null"
            return fmt_float(o)
        return json.dumps(str(o))

    return enc(obj, 0) + "\n"


# ---------------------------------------------------------------------------
# Layer, network and kernel-bank documents
# ---------------------------------------------------------------------------


def _load_array(value, base, name):
    if isinstance(value, str):
        p = Path(value)
        if not p.is_absolute():
            p = base / p
        return read_matrix_csv(p)
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DimensionError(f"{name}: {exc}") from exc


def layer_from_dict(d, base=Path(".")):
    if "weight" not in d:
        raise DimensionError("layer object needs a 'weight' entry")
    W = np.atleast_2d(_load_array(d["weight"], base, "weight"))
    bias = d.get("bias")
    if bias is not None:
        bias = _load_array(bias, base, "bias").reshape(-1)
    return DenseLayer(W, bias, d.get("activation", "relu"), float(d.get("alpha", 0.01)))


def layer_to_dict(layer):
    out = {"weight": layer.weight.tolist(), "bias": layer.bias.tolist(),
           "activation": layer.activation}
    if layer.activation == "leaky_relu":
        out["alpha"] = layer.alpha
    return out


def load_layer(path):
    path = Path(path)
    return layer_from_dict(json.loads(path.read_text()), path.parent)


def network_from_obj(obj, base=Path(".")):
    items = obj["layers"] if isinstance(obj, dict) else obj
    layers, final = [], None
    for i, item in enumerate(items):
        if item.get("final"):
            if i != len(items) - 1:
                raise DimensionError("only the last entry may be marked final")
            final = np.atleast_2d(_load_array(item["weight"], base, "final"))
        else:
            layers.append(layer_from_dict(item, base))
    return ReluNetwork(layers, final)


def network_to_obj(net, seed=None):
    items = [layer_to_dict(layer) for layer in net.layers]
    if net.final is not None:
        items.append({"weight": net.final.tolist(), "final": True})
    out = {"layers": items}
    if seed is not None:
        out["seed"] = seed
    return out


def load_network(path):
    path = Path(path)
    return network_from_obj(json.loads(path.read_text()), path.parent)


def conv_from_dict(d):
    kernels = []
    for k in d["kernels"]:
        vals = np.asarray(k["values"], dtype=float)
        shape = tuple(k.get("shape", vals.shape))
        kernels.append(Kernel(vals.reshape(shape)))
    signal = d.get("signal_shape")
    if signal is None:
        signal = tuple(max(k.width[i] for k in kernels) for i in range(len(kernels[0].width)))
    return ConvSpec(kernels, tuple(signal), d.get("boundary", "zero_padded"))


def load_conv(path):
    return conv_from_dict(json.loads(Path(path).read_text()))
