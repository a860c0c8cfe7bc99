"""Readers and writers for the on-disk formats.

Text formats (detections, tracks, labels, key=value reports) are
comma-separated with ``#`` comment lines; floats are written with ``repr``
so they parse back to the same value. Binary formats (embeddings, grids)
are little-endian with a 4-byte magic and a u16 version.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import CountMismatch, ParseError
from .geom import BoundingBox, Detection, MotionField
from .pseudo import PseudoLabelSet

PathLike = Union[str, Path]

EMBEDDING_MAGIC = b"S3EM"
GRID_MAGIC = b"S3GR"
VERSION = 1
_EMB_HEADER = struct.Struct("<4sHII")
_GRID_HEADER = struct.Struct("<4sHIII")
_F32 = np.dtype("<f4")


def _f(v) -> str:
    return repr(float(v))


def _records(text: str, n_fields: int, source: str):
    """``(lineno, fields)`` for every non-comment line."""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != n_fields:
            raise ParseError(f"expected {n_fields} fields, got {len(parts)}", source, lineno)
        yield lineno, parts


def _num(s: str, kind, source: str, lineno: int, name: str):
    try:
        return kind(s)
    except ValueError:
        raise ParseError(f"bad {name} {s!r}", source, lineno) from None


# ---------------------------------------------------------------------------
# detections: frame,x1,y1,x2,y2,confidence,class_id
# ---------------------------------------------------------------------------

def parse_detections(text: str, source: str = "<detections>") -> list[Detection]:
    """Detections in file order; ``embedding_row`` is the record index."""
    out: list[Detection] = []
    last = None
    for lineno, p in _records(text, 7, source):
        frame = _num(p[0], int, source, lineno, "frame")
        coords = [_num(v, float, source, lineno, "coordinate") for v in p[1:5]]
        conf = _num(p[5], float, source, lineno, "confidence")
        cls = _num(p[6], int, source, lineno, "class_id")
        if last is not None and frame < last:
            raise ParseError(f"frame {frame} after frame {last}", source, lineno)
        last = frame
        try:
            out.append(Detection(BoundingBox(*coords), conf, cls, frame, len(out)))
        except ValueError as exc:
            raise ParseError(str(exc), source, lineno) from None
    return out


def format_detections(dets: Iterable[Detection]) -> str:
    lines = ["# frame,x1,y1,x2,y2,confidence,class_id\n"]
    for d in dets:
        b = d.box
        lines.append(
            f"{int(d.frame)},{_f(b.x1)},{_f(b.y1)},{_f(b.x2)},{_f(b.y2)},{_f(d.confidence)},{int(d.class_id)}\n"
        )
    return "".join(lines)


def read_detections(path: PathLike) -> list[Detection]:
    return parse_detections(Path(path).read_text(), str(path))


def write_detections(path: PathLike, dets: Iterable[Detection]) -> None:
    Path(path).write_text(format_detections(dets))


def group_by_frame(dets: Sequence[Detection]) -> dict[int, list[int]]:
    """Record indices per frame, in file order."""
    out: dict[int, list[int]] = {}
    for k, d in enumerate(dets):
        out.setdefault(d.frame, []).append(k)
    return out


# ---------------------------------------------------------------------------
# embeddings: "S3EM", u16 version, u32 count, u32 dim, count*dim f32
# ---------------------------------------------------------------------------

def encode_embeddings(x) -> bytes:
    x = np.asarray(x, dtype=_F32)
    if x.ndim != 2:
        raise ValueError("embeddings must be a 2-D array")
    if not np.isfinite(x).all():
        raise ValueError("embeddings must be finite")
    return _EMB_HEADER.pack(EMBEDDING_MAGIC, VERSION, x.shape[0], x.shape[1]) + x.tobytes()


def decode_embeddings(data: bytes, source: str = "<embeddings>") -> np.ndarray:
    """``(count, dim)`` float32 array."""
    if len(data) < _EMB_HEADER.size:
        raise CountMismatch(f"{source}: file shorter than its header")
    magic, version, count, dim = _EMB_HEADER.unpack_from(data)
    if magic != EMBEDDING_MAGIC:
        raise ParseError(f"bad magic {magic!r}", source)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", source)
    body = data[_EMB_HEADER.size:]
    expected = count * dim * _F32.itemsize
    if len(body) != expected:
        raise CountMismatch(
            f"{source}: header declares {count}x{dim} floats ({expected} bytes), body has {len(body)}"
        )
    x = np.frombuffer(body, dtype=_F32).reshape(count, dim).copy()
    if not np.isfinite(x).all():
        raise ParseError("non-finite embedding value", source)
    return x


def read_embeddings(path: PathLike) -> np.ndarray:
    return decode_embeddings(Path(path).read_bytes(), str(path))


def write_embeddings(path: PathLike, x) -> None:
    Path(path).write_bytes(encode_embeddings(x))


# ---------------------------------------------------------------------------
# grids: "S3GR", u16 version, u32 width, u32 height, u32 channels, f32 data
# ---------------------------------------------------------------------------

def encode_grid(m) -> bytes:
    v = m.values if isinstance(m, MotionField) else np.asarray(m)
    if v.ndim == 2:
        v = v[:, :, None]
    h, w, c = v.shape
    if c not in (1, 2):
        raise ValueError(f"grid must have 1 or 2 channels, got {c}")
    return _GRID_HEADER.pack(GRID_MAGIC, VERSION, w, h, c) + np.ascontiguousarray(v, dtype=_F32).tobytes()


def decode_grid(data: bytes, source: str = "<grid>") -> MotionField:
    if len(data) < _GRID_HEADER.size:
        raise CountMismatch(f"{source}: file shorter than its header")
    magic, version, w, h, c = _GRID_HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise ParseError(f"bad magic {magic!r}", source)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", source)
    if c not in (1, 2):
        raise ParseError(f"channels must be 1 or 2, got {c}", source)
    body = data[_GRID_HEADER.size:]
    expected = w * h * c * _F32.itemsize
    if len(body) != expected:
        raise CountMismatch(
            f"{source}: header declares {w}x{h}x{c} floats ({expected} bytes), body has {len(body)}"
        )
    v = np.frombuffer(body, dtype=_F32).reshape(h, w, c).astype(np.float64)
    try:
        return MotionField(v)
    except ValueError as exc:
        raise ParseError(str(exc), source) from None


def read_grid(path: PathLike) -> MotionField:
    return decode_grid(Path(path).read_bytes(), str(path))


def write_grid(path: PathLike, m) -> None:
    Path(path).write_bytes(encode_grid(m))


# ---------------------------------------------------------------------------
# tracks: frame,track_id,x1,y1,x2,y2
# ---------------------------------------------------------------------------

def parse_tracks(text: str, source: str = "<tracks>") -> dict[int, list[tuple[int, BoundingBox]]]:
    out: dict[int, list[tuple[int, BoundingBox]]] = {}
    for lineno, p in _records(text, 6, source):
        frame = _num(p[0], int, source, lineno, "frame")
        tid = _num(p[1], int, source, lineno, "track_id")
        coords = [_num(v, float, source, lineno, "coordinate") for v in p[2:]]
        if tid <= 0:
            raise ParseError(f"track id {tid} is not positive", source, lineno)
        rows = out.setdefault(frame, [])
        if any(t == tid for t, _ in rows):
            raise ParseError(f"track id {tid} repeated in frame {frame}", source, lineno)
        try:
            rows.append((tid, BoundingBox(*coords)))
        except ValueError as exc:
            raise ParseError(str(exc), source, lineno) from None
    return out


def format_tracks(tracks: Mapping[int, Sequence[tuple[int, BoundingBox]]]) -> str:
    lines = ["# frame,track_id,x1,y1,x2,y2\n"]
    for f in sorted(tracks):
        for tid, b in tracks[f]:
            lines.append(f"{int(f)},{int(tid)},{_f(b.x1)},{_f(b.y1)},{_f(b.x2)},{_f(b.y2)}\n")
    return "".join(lines)


def read_tracks(path: PathLike):
    return parse_tracks(Path(path).read_text(), str(path))


def write_tracks(path: PathLike, tracks) -> None:
    Path(path).write_text(format_tracks(tracks))


# ---------------------------------------------------------------------------
# labels: ref_idx,tgt_idx (+ key=value sidecar with discard statistics)
# ---------------------------------------------------------------------------

def parse_labels(text: str, source: str = "<labels>") -> list[tuple[int, int]]:
    pairs = []
    for lineno, p in _records(text, 2, source):
        i = _num(p[0], int, source, lineno, "ref_idx")
        j = _num(p[1], int, source, lineno, "tgt_idx")
        if i < 0 or j < 0:
            raise ParseError("label indices must be nonnegative", source, lineno)
        pairs.append((i, j))
    return pairs


def format_labels(pairs: Iterable[tuple[int, int]]) -> str:
    return "# ref_idx,tgt_idx\n" + "".join(f"{int(i)},{int(j)}\n" for i, j in pairs)


def label_report(labels: PseudoLabelSet) -> dict[str, int]:
    return {
        "pairs": len(labels.pairs),
        "discarded_low_iou": labels.discarded_low_iou,
        "dropped_occluded": labels.dropped_occluded,
        "dropped_out_of_field": labels.dropped_out_of_field,
    }


# ---------------------------------------------------------------------------
# flat key=value reports
# ---------------------------------------------------------------------------

def format_report(values: Mapping[str, object]) -> str:
    return "".join(
        f"{k}={_f(v) if isinstance(v, (float, np.floating)) else v}\n" for k, v in values.items()
    )


def parse_report(text: str, source: str = "<report>") -> dict[str, Union[int, float, str]]:
    """Values come back as int, then float, then str, whichever parses first."""
    out: dict[str, Union[int, float, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError("expected key=value", source, lineno)
        for kind in (int, float):
            try:
                out[key.strip()] = kind(value)
                break
            except ValueError:
                continue
        else:
            out[key.strip()] = value.strip()
    return out
