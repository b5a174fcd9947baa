"""PGM frames, obstacle masks, CSV reports and key=value run configs."""

from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptHeader, IoFailure, NonSquare, ShapeMismatch, UnsupportedFormat

REPORT_HEADER = ["t", "energy", "mass", "ssim_next"]


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens, skipping comments."""
    out, pos = [], 0
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise CorruptHeader("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        out.append(data[start:pos])
    return out, pos


def parse_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a P2 or P5 image to raw integer samples and its maxval."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise UnsupportedFormat(f"not a graymap (magic {magic!r})")
    try:
        toks, pos = _tokens(data, 4)
        width, height, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise CorruptHeader("non-numeric PGM header field") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 256:
        raise CorruptHeader(f"unsupported header {width}x{height} maxval={maxval}")
    if magic == b"P5":
        body = data[pos + 1 : pos + 1 + width * height]
        if len(body) != width * height:
            raise CorruptHeader("pixel data shorter than header promises")
        pixels = np.frombuffer(body, dtype=np.uint8).astype(np.int64)
    else:
        try:
            pixels = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise CorruptHeader("non-numeric sample in P2 body") from None
        if pixels.size != width * height:
            raise CorruptHeader(f"expected {width * height} samples, found {pixels.size}")
    if pixels.max(initial=0) > maxval:
        raise CorruptHeader("sample exceeds maxval")
    return pixels.reshape(height, width), maxval


def read_image(path) -> np.ndarray:
    """Read a square 8-bit PGM as a float grid in [0, 1] (sample / maxval)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from None
    pixels, maxval = parse_pgm(data)
    if pixels.shape[0] != pixels.shape[1]:
        raise NonSquare(f"{path}: {pixels.shape[1]}x{pixels.shape[0]} image is not square")
    return pixels / maxval


def encode_pgm(x: np.ndarray) -> bytes:
    q = np.rint(np.clip(np.asarray(x, dtype=float), 0.0, 1.0) * 255).astype(np.uint8)
    h, w = q.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def write_image(path, x: np.ndarray) -> None:
    try:
        Path(path).write_bytes(encode_pgm(x))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None


def write_frames(path_seq, out_dir, prefix: str = "frame") -> list[Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from None
    files = []
    for t, frame in enumerate(path_seq):
        f = out_dir / f"{prefix}_{t:04d}.pgm"
        write_image(f, frame)
        files.append(f)
    return files


_FRAME_RE = re.compile(r"^(.*?)(\d+)\.pgm$")


def list_frames(frames_dir) -> list[Path]:
    """Numbered ``*.pgm`` files of a directory, in frame order."""
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise IoFailure(f"{frames_dir} is not a directory")
    found = []
    for f in frames_dir.iterdir():
        m = _FRAME_RE.match(f.name)
        if m:
            found.append((m.group(1), int(m.group(2)), f))
    found.sort()
    return [f for _, _, f in found]


def read_frames(frames_dir) -> np.ndarray:
    files = list_frames(frames_dir)
    if not files:
        raise IoFailure(f"no numbered .pgm frames in {frames_dir}")
    frames = [read_image(f) for f in files]
    if any(f.shape != frames[0].shape for f in frames):
        raise ShapeMismatch("frames differ in size")
    return np.array(frames)


def read_mask(path, n: int | None = None) -> np.ndarray:
    """Obstacle mask from a PGM: any nonzero sample marks an obstacle cell."""
    mask = read_image(path) > 0
    if n is not None and mask.shape != (n, n):
        raise ShapeMismatch(f"mask {mask.shape} does not match images ({n}, {n})")
    return mask


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_report(report, metrics, path, extra: dict | None = None) -> Path:
    """Per-slice CSV: ``t,energy,mass,ssim_next`` rows and a closing summary row.

    ``metrics`` is a :class:`~pathenergy.metrics.SequenceMetrics`.  The summary
    row reads ``summary,key=value,...``.
    """
    path = Path(path)
    T = len(metrics.masses) - 1
    energies = report.per_slice_energy if report is not None else [None] * T
    summary = {
        "J": report.J if report is not None else None,
        "ssim_mean": metrics.ssim_mean,
        "ssim_std": metrics.ssim_std,
        "w2_estimate": metrics.w2,
        "T": T,
    }
    summary.update(extra or {})
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for t in range(T + 1):
                w.writerow([
                    t,
                    _fmt(energies[t] if t < T else None),
                    _fmt(metrics.masses[t]),
                    _fmt(metrics.ssim_pairs[t] if t < T else None),
                ])
            w.writerow(["summary"] + [f"{k}={_fmt(v)}" for k, v in summary.items()])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None
    return path


def _parse_value(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_report(path) -> tuple[list[dict], dict]:
    rows, summary = [], {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != REPORT_HEADER:
            raise CorruptHeader(f"unexpected report header {header}")
        for rec in reader:
            if rec and rec[0] == "summary":
                for item in rec[1:]:
                    k, _, v = item.partition("=")
                    summary[k] = _parse_value(v)
            else:
                rows.append({k: _parse_value(v) for k, v in zip(header, rec)})
    return rows, summary


# -- run configs ------------------------------------------------------------

@dataclass
class RunConfig:
    """Settings for one CLI run; every field doubles as a config-file key."""

    source: str | None = None
    target: str | None = None
    out: str | None = None
    frames: str | None = None
    steps: int | None = None
    mode: str = "balanced"
    tau: float = 1.0
    beta: float = 0.0
    bc: str = "dirichlet"
    obstacle: str | None = None
    downsample: int | None = None
    eps: float = 1e-5
    max_iters: int = 500
    tol_rel: float = 1e-6
    step0: float = 1.0
    seed: int = 0
    n: int = 8

    def validate(self) -> "RunConfig":
        if self.mode not in ("balanced", "unbalanced"):
            raise ConfigError(f"mode must be balanced or unbalanced, not {self.mode!r}")
        if self.bc not in ("dirichlet", "neumann", "periodic"):
            raise ConfigError(f"unknown boundary condition {self.bc!r}")
        checks = [
            (self.steps is None or self.steps >= 1, "steps must be >= 1"),
            (self.tau > 0, "tau must be positive"),
            (self.beta >= 0, "beta must be nonnegative"),
            (self.eps > 0, "eps must be positive"),
            (self.max_iters >= 1, "max_iters must be >= 1"),
            (self.tol_rel >= 0, "tol_rel must be nonnegative"),
            (self.step0 > 0, "step0 must be positive"),
            (self.downsample is None or self.downsample >= 1, "downsample must be >= 1"),
            (self.n >= 2, "n must be >= 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return raw


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment.  Unknown keys are errors."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw.strip())
    return values


def load_config(path) -> dict:
    try:
        return parse_config(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from None


def merge_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Config-file values under explicit flags (flags given as non-None win)."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None and k in _FIELD_TYPES})
    return RunConfig(**merged).validate()


def default_log_level() -> str:
    return os.environ.get("PATHENERGY_LOG", "info").lower()
