"""Minimal PLY reader/writer (ascii and binary_little_endian)."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    pass


def _parse_header(fh):
    first = fh.readline().strip()
    if first != b"ply":
        raise PlyError("not a PLY file")
    fmt = None
    elements = []  # [name, count, [(prop, dtype) | (prop, count_dtype, item_dtype)]]
    while True:
        line = fh.readline()
        if not line:
            raise PlyError("unterminated header")
        tokens = line.decode("ascii", "replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append([tokens[1], int(tokens[2]), []])
        elif tokens[0] == "property":
            if not elements:
                raise PlyError("property before element")
            if tokens[1] == "list":
                elements[-1][2].append((tokens[4], _TYPES[tokens[2]], _TYPES[tokens[3]]))
            else:
                elements[-1][2].append((tokens[2], _TYPES[tokens[1]]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyError(f"unsupported PLY format: {fmt}")
    return fmt, elements


def _read_ascii(fh, elements):
    data = {}
    tokens = iter(fh.read().decode("ascii").split())
    for name, count, props in elements:
        if all(len(p) == 2 for p in props):
            n = len(props)
            flat = np.array([next(tokens) for _ in range(count * n)], dtype=float).reshape(count, n)
            data[name] = {p[0]: flat[:, i].astype(p[1]) for i, p in enumerate(props)}
            continue
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for p in props:
                if len(p) == 3:
                    m = int(next(tokens))
                    cols[p[0]].append([float(next(tokens)) for _ in range(m)])
                else:
                    cols[p[0]].append(float(next(tokens)))
        data[name] = {k: (v if len(p) == 3 else np.array(v, dtype=p[1]))
                      for (k, v), p in zip(cols.items(), props)}
    return data


def _read_binary(buf: bytes, elements):
    data = {}
    off = 0
    for name, count, props in elements:
        if all(len(p) == 2 for p in props):
            dt = np.dtype([(p[0], "<" + p[1]) for p in props])
            arr = np.frombuffer(buf, dtype=dt, count=count, offset=off)
            off += dt.itemsize * count
            data[name] = {p[0]: arr[p[0]].copy() for p in props}
            continue
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for p in props:
                if len(p) == 3:
                    cdt, idt = np.dtype("<" + p[1]), np.dtype("<" + p[2])
                    m = int(np.frombuffer(buf, cdt, 1, off)[0])
                    off += cdt.itemsize
                    cols[p[0]].append(np.frombuffer(buf, idt, m, off).tolist())
                    off += idt.itemsize * m
                else:
                    dt = np.dtype("<" + p[1])
                    cols[p[0]].append(np.frombuffer(buf, dt, 1, off)[0])
                    off += dt.itemsize
        data[name] = cols
    return data


def read_ply(path) -> dict:
    """Return ``{element: {property: values}}``; list properties are lists of lists."""
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, elements = _parse_header(fh)
        if fmt == "ascii":
            return _read_ascii(fh, elements)
        return _read_binary(fh.read(), elements)


def read_points(path) -> np.ndarray:
    vertex = read_ply(path).get("vertex")
    if vertex is None:
        raise PlyError(f"{path}: no vertex element")
    return np.stack([np.asarray(vertex[c], dtype=float) for c in ("x", "y", "z")], axis=1)


def read_mesh(path) -> tuple[np.ndarray, np.ndarray]:
    data = read_ply(path)
    vertex = data.get("vertex")
    if vertex is None:
        raise PlyError(f"{path}: no vertex element")
    verts = np.stack([np.asarray(vertex[c], dtype=float) for c in ("x", "y", "z")], axis=1)
    face = data.get("face", {})
    lists = face.get("vertex_indices", face.get("vertex_index", []))
    tris = []
    for poly in lists:
        poly = [int(i) for i in poly]
        for j in range(1, len(poly) - 1):  # fan-triangulate polygons
            tris.append((poly[0], poly[j], poly[j + 1]))
    return verts, np.array(tris, dtype=np.int64).reshape(-1, 3)


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ply(path, columns: dict, faces=None, binary: bool = True) -> None:
    """Write a vertex element from ``columns`` (name -> 1-D array), plus optional triangles."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    count = len(arrays[0]) if arrays else 0
    kinds = [("double" if a.dtype == np.float64 else "float") if a.dtype.kind == "f" else "int"
             for a in arrays]
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {count}"]
    header += [f"property {k} {n}" for n, k in zip(names, kinds)]
    if faces is not None:
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    if binary:
        codes = {"double": "<f8", "float": "<f4", "int": "<i4"}
        dt = np.dtype([(n, codes[k]) for n, k in zip(names, kinds)])
        rec = np.empty(count, dtype=dt)
        for n, a in zip(names, arrays):
            rec[n] = a
        body = rec.tobytes()
        if faces is not None:
            fdt = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
            frec = np.empty(len(faces), dtype=fdt)
            frec["n"] = 3
            frec["idx"] = np.asarray(faces, dtype=np.int32).reshape(-1, 3)
            body += frec.tobytes()
    else:
        lines = []
        for i in range(count):
            lines.append(" ".join(str(int(a[i])) if k == "int" else repr(float(a[i]))
                                  for a, k in zip(arrays, kinds)))
        if faces is not None:
            lines += ["3 " + " ".join(str(int(v)) for v in f) for f in faces]
        body = ("\n".join(lines) + ("\n" if lines else "")).encode("ascii")
    _atomic_write(path, head + body)


def write_points(path, points, binary: bool = False) -> None:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    write_ply(path, {"x": pts[:, 0], "y": pts[:, 1], "z": pts[:, 2]}, binary=binary)


def write_mesh(path, vertices, faces, binary: bool = False) -> None:
    v = np.asarray(vertices, dtype=float).reshape(-1, 3)
    write_ply(path, {"x": v[:, 0], "y": v[:, 1], "z": v[:, 2]}, faces=faces, binary=binary)
