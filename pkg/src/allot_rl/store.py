"""On-disk feature store written by ``allot-rl ingest``.

A store is a directory with three files:

* ``panel.csv``: daily returns, ``date`` then strategy columns then index columns
* ``features.csv``: the decision-grid feature frame (15 static features)
* ``meta.json``: column roles, window settings and sha256 of every input file

Floats are written with ``repr`` so reading a store back is exact.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .checkpoint import atomic_write_text
from .errors import ValidationError
from .marketdata import FeatureFrame, FeatureSpec, ReturnPanel

STORE_FORMAT = "allot-rl-store"
STORE_VERSION = 1
FEATURE_GROUPS = ("mu", "alpha", "mu_roll", "sigma_roll", "q_roll")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _csv_text(header: list[str], dates: np.ndarray, values: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for d, row in zip(dates, values):
        writer.writerow([str(np.datetime64(d, "D")), *(repr(float(x)) for x in row)])
    return buf.getvalue()


def feature_columns(asset_names, index_names) -> list[str]:
    cols = []
    for group in FEATURE_GROUPS:
        names = index_names if group in ("alpha", "q_roll") else asset_names
        cols.extend(f"{group}.{n}" for n in names)
    return cols


def write_store(directory: str | Path, panel: ReturnPanel, spec: FeatureSpec, sources: dict) -> FeatureFrame:
    directory = Path(directory)
    frame = spec.build(panel)
    assets, indexes = list(panel.asset_names), list(panel.index_names)
    atomic_write_text(directory / "panel.csv", _csv_text(["date", *assets, *indexes], panel.dates, panel.values))
    atomic_write_text(
        directory / "features.csv",
        _csv_text(["date", *feature_columns(assets, indexes)], frame.dates, frame.static_features),
    )
    meta = {
        "format": STORE_FORMAT,
        "version": STORE_VERSION,
        "asset_columns": assets,
        "index_columns": indexes,
        "features": {"mean_window": spec.mean_window, "std_window": spec.std_window, "stride": spec.stride},
        "rows": {"panel": len(panel), "features": len(frame)},
        "sources": sources,
    }
    atomic_write_text(directory / "meta.json", json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return frame


def read_meta(directory: str | Path) -> dict:
    path = Path(directory) / "meta.json"
    try:
        meta = json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"no feature store at {directory} (run 'allot-rl ingest' first): {exc}") from exc
    if meta.get("format") != STORE_FORMAT or meta.get("version") != STORE_VERSION:
        raise ValidationError(f"{path}: not a version {STORE_VERSION} feature store")
    return meta


def read_store(directory: str | Path) -> tuple[ReturnPanel, dict]:
    directory = Path(directory)
    meta = read_meta(directory)
    assets, indexes = meta["asset_columns"], meta["index_columns"]
    with open(directory / "panel.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header != ["date", *assets, *indexes]:
        raise ValidationError(f"{directory / 'panel.csv'}: header {header} disagrees with meta.json")
    body = rows[1:]
    dates = np.array([r[0] for r in body], dtype="datetime64[D]")
    values = np.array([[float(x) for x in r[1:]] for r in body], dtype=float).reshape(len(body), len(header) - 1)
    k = len(assets)
    panel = ReturnPanel(dates, values[:, :k], values[:, k:], tuple(assets), tuple(indexes))
    return panel, meta
