"""
Line-oriented pose file format (see docs/posefile.md).

    posefile 1
    header {"K": 8, "D": 2, "T": 64, ...}
    frame 0 11111111 0.51 0.33 ...
    ...
    end

Coordinates are written with ``repr`` so a save/load round trip is exact.
"""

import json
import os
import tempfile

import numpy as np

from .errors import PoseFileError, VersionError
from .kinematics import PoseSequence

MAGIC = "posefile"
VERSION = 1


def header_of(seq):
    return {
        "K": seq.keypoints,
        "D": seq.dims,
        "T": seq.frames,
        "fps": float(seq.fps),
        "source": seq.source,
        "seq_id": seq.seq_id,
        "joint_names": list(seq.joint_names),
        "joint_groups": {g: [int(j) for j in v] for g, v in seq.joint_groups.items()},
    }


def dumps(seq):
    lines = [f"{MAGIC} {VERSION}", "header " + json.dumps(header_of(seq), sort_keys=True)]
    for t in range(seq.frames):
        bits = "".join("1" if v else "0" for v in seq.visibility[t])
        vals = " ".join(repr(float(x)) for x in seq.coords[t].reshape(-1))
        lines.append(f"frame {t} {bits} {vals}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def save(seq, path):
    """Write atomically: readers never observe a partial file."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".posefile-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(dumps(seq))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_header(line, lineno):
    tag, _, payload = line.partition(" ")
    if tag != "header":
        raise PoseFileError("expected header record", lineno)
    try:
        header = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise PoseFileError(f"header is not valid JSON: {exc.msg}", lineno) from None
    for key in ("K", "D", "T"):
        if not isinstance(header.get(key), int) or header[key] < 1:
            raise PoseFileError(f"header field {key} must be a positive integer", lineno)
    return header


def loads(text):
    lines = text.splitlines()
    if not lines:
        raise PoseFileError("empty file", 1)
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != MAGIC:
        raise PoseFileError(f"not a pose file (expected '{MAGIC} <version>')", 1)
    try:
        version = int(magic[1])
    except ValueError:
        raise PoseFileError(f"bad version token {magic[1]!r}", 1) from None
    if version != VERSION:
        raise VersionError(f"unsupported pose file version {version} (this reader handles {VERSION})", 1)
    if len(lines) < 2:
        raise PoseFileError("truncated file: missing header", 2)
    header = _parse_header(lines[1], 2)
    K, D, T = header["K"], header["D"], header["T"]
    coords = np.empty((T, K, D))
    vis = np.empty((T, K), dtype=bool)
    body = lines[2:]
    for t in range(T):
        lineno = t + 3
        if t >= len(body):
            raise PoseFileError(f"truncated file: expected {T} frames, found {t}", lineno)
        parts = body[t].split()
        if len(parts) < 3 or parts[0] != "frame":
            raise PoseFileError(f"expected frame record {t}", lineno)
        if parts[1] != str(t):
            raise PoseFileError(f"frame index {parts[1]} out of order, expected {t}", lineno)
        bits, vals = parts[2], parts[3:]
        if len(bits) != K or set(bits) - {"0", "1"}:
            raise PoseFileError(f"frame {t}: {len(bits)} visibility flags, header declares K={K}", lineno)
        if len(vals) != K * D:
            raise PoseFileError(
                f"frame {t}: {len(vals)} coordinates, header declares K*D={K * D}", lineno
            )
        try:
            coords[t] = np.array([float(v) for v in vals]).reshape(K, D)
        except ValueError:
            raise PoseFileError(f"frame {t}: non-numeric coordinate", lineno) from None
        vis[t] = [b == "1" for b in bits]
    tail = body[T:]
    if not tail or tail[0].strip() != "end":
        raise PoseFileError("truncated file: missing end record", T + 3)
    if any(line.strip() for line in tail[1:]):
        raise PoseFileError("unexpected content after end record", T + 4)
    try:
        return PoseSequence(
            coords=coords,
            visibility=vis,
            seq_id=header.get("seq_id", ""),
            source=header.get("source", ""),
            fps=header.get("fps", 30.0),
            joint_names=header.get("joint_names") or [],
            joint_groups=header.get("joint_groups") or {},
        )
    except ValueError as exc:
        raise PoseFileError(str(exc)) from None


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
