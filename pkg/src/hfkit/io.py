"""JSON containers for graphs, meshes and reports.

Every file is a JSON object with ``"format": "hf-1"`` and a ``"type"``.
Output is canonical (sorted keys, fixed separators, shortest round-trip
float repr) so identical inputs give byte-identical files. Non-finite floats
are written as the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .geometry import MeshPatch, MultiGraph, PolarGrid, graph_embed
from .surfaces import attach_analytic

FORMAT = "hf-1"


class FormatError(ValueError):
    pass


def clean(obj):
    """Recursively convert numpy values and non-finite floats to plain JSON."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [clean(obj.real), clean(obj.imag)]
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _write_text(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    _write_text(path, dumps(obj))


def write_csv(path, text):
    _write_text(path, text)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise FormatError(f"{path}: not an {FORMAT} container")
    return d


def _floats(a):
    """Inverse of :func:`clean` for numeric arrays."""
    def conv(v):
        if isinstance(v, list):
            return [conv(x) for x in v]
        if isinstance(v, str):
            return float(v)
        return v
    return np.asarray(conv(a), dtype=float)


# ---------------------------------------------------------------- graphs


def graph_to_dict(u: MultiGraph):
    return {"format": FORMAT, "type": "multigraph", "grid": u.grid.to_dict(),
            "values": u.values, "center": u.center, "rotation": u.rotation,
            "source": u.source}


def graph_from_dict(d) -> MultiGraph:
    grid = PolarGrid.from_dict(d["grid"])
    src = d.get("source")
    # solver outputs record their input under a different kind, so only an
    # unmodified generated surface gets its closed form back
    analytic = attach_analytic(src)
    return MultiGraph(grid, _floats(d["values"]), _floats(d["center"]), _floats(d["rotation"]),
                      analytic, src)


# ---------------------------------------------------------------- meshes


def mesh_to_dict(m: MeshPatch):
    return {"format": FORMAT, "type": "mesh", "vertices": m.vertices, "triangles": m.triangles,
            "normals": m.normals, "A2": m.A2, "source": m.source}


def mesh_from_dict(d) -> MeshPatch:
    A2 = d.get("A2")
    return MeshPatch(_floats(d["vertices"]), np.asarray(d["triangles"], dtype=np.int64).reshape(-1, 3),
                     _floats(d["normals"]), None if A2 is None else _floats(A2), d.get("source"))


# ------------------------------------------------------------- loading


def load(path):
    """``(MultiGraph or None, MeshPatch or None)`` from a container file."""
    d = read_json(path)
    t = d.get("type")
    if t == "multigraph":
        return graph_from_dict(d), None
    if t == "mesh":
        return None, mesh_from_dict(d)
    if t == "surface":
        u = graph_from_dict(d["graph"]) if d.get("graph") else None
        m = mesh_from_dict(d["mesh"]) if d.get("mesh") else None
        return u, m
    if t == "solve" and d.get("solution"):
        return graph_from_dict(d["solution"]), None
    raise FormatError(f"{path}: container type {t!r} holds no surface")


def load_graph(path) -> MultiGraph:
    u, _ = load(path)
    if u is None:
        raise FormatError(f"{path}: no multivalued graph in this file (mesh only)")
    return u


def load_mesh(path) -> MeshPatch:
    u, m = load(path)
    if m is None:
        m = graph_embed(u)
    return m


def surface_to_dict(u: MultiGraph | None, m: MeshPatch | None):
    """Graphs are stored alone (the mesh is their embedding); meshes otherwise."""
    return {"format": FORMAT, "type": "surface",
            "graph": None if u is None else graph_to_dict(u),
            "mesh": None if (m is None or u is not None) else mesh_to_dict(m)}


def report(kind, payload):
    return {"format": FORMAT, "type": kind, **payload}
