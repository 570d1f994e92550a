"""CSV, flat ``key = value`` files, run manifests and gnuplot companions."""
import hashlib
import os
from pathlib import Path

import numpy as np

from .errors import ValidationError


def fmt(x):
    """17 significant digits, '.' decimal separator."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def write_kv(path, items):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {fmt(v)}\n")
    return path


def parse_kv(text, source="<string>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ValidationError(f"{source}:{lineno}: empty key")
        out[k] = v.strip()
    return out


def read_kv(path):
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read(), str(path))


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, extra=None):
    """List every output file with its checksum, plus any ``extra`` keys."""
    out_dir = Path(out_dir)
    items = dict(extra or {})
    for f in sorted(files, key=lambda p: Path(p).name):
        f = Path(f)
        items[f"file.{f.name}"] = sha256(f)
    return write_kv(out_dir / "manifest.txt", items)


def verify_manifest(path):
    """Return the manifest dict; raise ValidationError on checksum mismatch."""
    path = Path(path)
    items = read_kv(path)
    for k, v in items.items():
        if k.startswith("file."):
            target = path.parent / k[5:]
            if not target.exists():
                raise ValidationError(f"{path}: missing output {target.name}")
            if sha256(target) != v:
                raise ValidationError(f"{path}: checksum mismatch for {target.name}")
    return items


def write_gnuplot(path, csv_name, xcol, ycol, title, extra=""):
    text = (
        "set datafile separator ','\n"
        f"set title '{title}'\n"
        "set key autotitle columnhead\n"
        f"{extra}"
        f"plot '{csv_name}' using {xcol}:{ycol} with lines\n"
    )
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    return path


def out_root(default="mcflab_out"):
    return Path(os.environ.get("MCFLAB_OUT_DIR", default))
