"""Annotation/config documents, the binary density format and PGM heatmaps."""

from __future__ import annotations

import dataclasses
import json
import struct

import numpy as np

from .core import DensityMap, Scene, ScaleConfig, ScaleGrid

MAGIC = b"SADLDM01"
_HEADER = struct.Struct("<8sIIII")


class FormatError(ValueError):
    """A document or binary file does not match its expected layout."""


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise FormatError("top level must be an object")
    return doc


def scene_from_dict(doc: dict) -> Scene:
    try:
        width, height = doc["width"], doc["height"]
        points = doc.get("points", [])
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}") from None
    if not isinstance(width, int) or not isinstance(height, int) or isinstance(width, bool):
        raise FormatError("width and height must be integers")
    if not isinstance(points, list) or not all(
            isinstance(p, list) and len(p) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool)
                                                        for c in p) for p in points):
        raise FormatError("points must be a list of [x, y] number pairs")
    try:
        return Scene(width, height, np.array(points, dtype=np.float64).reshape(-1, 2))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def read_annotations(path) -> Scene:
    return scene_from_dict(_load_json(path))


def write_annotations(path, scene: Scene) -> None:
    doc = {"width": scene.width, "height": scene.height, "points": scene.annotations.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def config_from_dict(doc: dict) -> ScaleConfig:
    known = {f.name for f in dataclasses.fields(ScaleConfig)}
    kwargs = {k: v for k, v in doc.items() if k in known}
    for key in ("weights", "factors"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    try:
        return ScaleConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid config: {exc}") from None


def read_config(path) -> ScaleConfig:
    return config_from_dict(_load_json(path))


def config_to_dict(config: ScaleConfig) -> dict:
    d = dataclasses.asdict(config)
    d["weights"] = list(config.weights)
    d["factors"] = list(config.factors)
    return d


def density_bytes(dmap: DensityMap) -> bytes:
    g = dmap.grid
    head = _HEADER.pack(MAGIC, g.scale_index, g.factor, g.width, g.height)
    return head + dmap.values.astype("<f8").tobytes()


def write_density(path, dmap: DensityMap) -> None:
    with open(path, "wb") as fh:
        fh.write(density_bytes(dmap))


def parse_density(blob: bytes) -> DensityMap:
    if len(blob) < _HEADER.size:
        raise FormatError("truncated density header")
    magic, s, f, w, h = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if s < 1 or f < 1 or w < 1 or h < 1:
        raise FormatError("header fields must be positive")
    payload = blob[_HEADER.size:]
    if len(payload) != 8 * w * h:
        raise FormatError(f"payload is {len(payload)} bytes, header implies {8 * w * h}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError("density values must be finite")
    return DensityMap(ScaleGrid(s, f, w, h), values)


def read_density(path) -> DensityMap:
    with open(path, "rb") as fh:
        return parse_density(fh.read())


def heatmap_pgm(dmap: DensityMap) -> bytes:
    """Binary 8-bit PGM, min-max normalized. Constant maps become all zeros."""
    img = dmap.image()
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        pix = np.rint((img - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pix = np.zeros(img.shape, dtype=np.uint8)
    head = f"P5\n{dmap.grid.width} {dmap.grid.height}\n255\n".encode("ascii")
    return head + pix.tobytes()


def write_heatmap(path, dmap: DensityMap) -> None:
    with open(path, "wb") as fh:
        fh.write(heatmap_pgm(dmap))
