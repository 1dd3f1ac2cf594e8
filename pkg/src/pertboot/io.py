"""CSV ingestion and emission, config files and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError
from .mest import RegressionData

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class CsvFormatError(InvalidParameterError):
    """Malformed CSV input; the message names the offending row and column."""


def _read_table(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise CsvFormatError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise CsvFormatError(f"{path}: duplicate column names in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            vals = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise CsvFormatError(
                        f"{path}, line {lineno}, column '{col}': not a number: {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise CsvFormatError(
                        f"{path}, line {lineno}, column '{col}': non-finite value {cell!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise CsvFormatError(f"{path} has a header but no data rows")
    return header, np.array(rows, dtype=np.float64)


def load_csv(
    path, response: str, intercept: bool = False, columns: list[str] | None = None
) -> RegressionData:
    """Read a numeric CSV with a header row into :class:`RegressionData`.

    ``response`` names the response column.  The design is ``columns`` (all
    other columns by default), with a leading ones column if ``intercept``.
    """
    header, table = _read_table(path)
    if response not in header:
        raise CsvFormatError(f"{path}: response column '{response}' not found (have {header})")
    if columns is None:
        columns = [h for h in header if h != response]
    missing = [c for c in columns if c not in header]
    if missing:
        raise CsvFormatError(f"{path}: design column(s) {missing} not found")
    X = table[:, [header.index(c) for c in columns]]
    if intercept:
        X = np.column_stack([np.ones(table.shape[0]), X])
    if X.shape[1] == 0:
        raise CsvFormatError(f"{path}: no design columns")
    y = table[:, header.index(response)]
    return RegressionData(X, y)


def load_design_csv(path) -> np.ndarray:
    """Every column of a numeric CSV with a header, as a design matrix."""
    return _read_table(path)[1]


def write_csv(data: RegressionData, path, response: str = "y", names: list[str] | None = None) -> None:
    """Write ``data`` so that :func:`load_csv` reproduces it exactly."""
    names = names or [f"x{j + 1}" for j in range(data.p)]
    if len(names) != data.p:
        raise InvalidParameterError(f"need {data.p} column names")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([response, *names])
        for yi, xi in zip(data.y, data.X):
            w.writerow([repr(float(yi)), *(repr(float(v)) for v in xi)])


def load_config(path) -> tuple[dict, bytes]:
    """Parse a TOML config; returns ``(mapping, raw bytes)``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InvalidParameterError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return tomllib.loads(raw.decode("utf-8")), raw
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise InvalidParameterError(f"config {path} is not valid TOML: {exc}") from exc


@dataclass(frozen=True)
class RunManifest:
    command: str
    argv: list[str]
    config_hash: str
    seed: int | None
    versions: str
    timestamp: str

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


def tool_versions() -> str:
    import scipy

    from . import __version__

    return (
        f"pertboot {__version__}; python {platform.python_version()}; "
        f"numpy {np.__version__}; scipy {scipy.__version__}"
    )


def make_manifest(command: str, argv, config: bytes = b"", seed: int | None = None) -> RunManifest:
    """Manifest for a run; ``config_hash`` is the SHA-256 of the config bytes
    (or of the argument vector when there is no config file)."""
    argv = [str(a) for a in argv]
    payload = config if config else "\0".join(argv).encode()
    return RunManifest(
        command=command,
        argv=argv,
        config_hash=hashlib.sha256(payload).hexdigest(),
        seed=seed,
        versions=tool_versions(),
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
