"""Report files: CSV tables, the key=value manifest and the region raster SVG."""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from pathlib import Path

from mhdlab.indices import DARK, LIGHT, OUTSIDE

MANIFEST = "manifest.txt"
REGION_COLORS = {DARK: "#555555", LIGHT: "#bbbbbb", OUTSIDE: "#ffffff"}


class OutputExistsError(FileExistsError):
    pass


def fmt(value) -> str:
    """Locale-free text for CSV cells: shortest round-trip floats, ``inf`` for infinity."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, Fraction):
        value = float(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


class ReportWriter:
    """Writes into one output directory; refuses to clobber an earlier run unless forced."""

    def __init__(self, out: str | Path, force: bool = False):
        self.out = Path(out)
        self.force = force
        self.written: list[Path] = []

    def prepare(self) -> None:
        if (self.out / MANIFEST).exists() and not self.force:
            raise OutputExistsError(f"{self.out}: previous run found (use --force to overwrite)")
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"{self.out}: cannot create output directory: {exc}") from exc

    def path(self, name: str) -> Path:
        return self.out / name

    def csv(self, name: str, columns, rows) -> Path:
        p = self.path(name)
        try:
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(columns)
                for row in rows:
                    if isinstance(row, dict):
                        row = [row[c] for c in columns]
                    w.writerow([fmt(v) for v in row])
        except OSError as exc:
            raise OSError(f"{p}: {exc}") from exc
        self.written.append(p)
        return p

    def text(self, name: str, content: str) -> Path:
        p = self.path(name)
        try:
            with open(p, "w", newline="\n", encoding="utf-8") as fh:
                fh.write(content)
        except OSError as exc:
            raise OSError(f"{p}: {exc}") from exc
        self.written.append(p)
        return p

    def manifest(self, config: dict) -> Path:
        lines = [f"{k}={fmt(v)}" for k, v in sorted(config.items())]
        return self.text(MANIFEST, "\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k] = v
    return out


def region_svg(rows, raster: int, cell: int = 4) -> str:
    """Three-colour raster: ``1/p0`` to the right, ``theta0`` upwards."""
    size = raster * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="{REGION_COLORS[OUTSIDE]}"/>',
    ]
    for idx, (_, _, cls) in enumerate(rows):
        if cls == OUTSIDE:
            continue
        i, j = divmod(idx, raster)
        x = i * cell
        y = size - (j + 1) * cell
        parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{REGION_COLORS[cls]}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
