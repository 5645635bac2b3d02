"""
Truncated dataset files for truncation-limits.

A dataset is a UTF-8 CSV with header `t,y` and one observed pair per row.
Lines starting with `#` are comments; `# seed: <int>` and
`# attempted: <int>` carry sampling metadata.
"""

import io
import logging
import re
from pathlib import Path

import pandas as pd

from errors import DatasetError
from sampler import TruncatedSample

logger = logging.getLogger(__name__)

HEADER = "t,y"
METADATA = re.compile(r"^#\s*(seed|attempted)\s*:\s*(-?\d+)\s*$")


def _parse_float(text: str):
    try:
        return float(text)
    except (TypeError, ValueError):
        return None


def _split_lines(path: Path) -> tuple:
    """Separate metadata from data lines, keeping file line numbers of the data."""
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DatasetError(f"dataset not found: {path}") from exc
    except UnicodeDecodeError as exc:
        raise DatasetError(f"dataset is not UTF-8: {path}") from exc

    metadata, body, line_numbers = {}, [], []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            match = METADATA.match(stripped)
            if match:
                metadata[match.group(1)] = int(match.group(2))
            continue
        body.append(stripped)
        line_numbers.append(number)
    return metadata, body, line_numbers


def ingest_dataset(path, strict: bool = True) -> TruncatedSample:
    """
    Read a truncated dataset.

    Args:
        path: CSV file with header `t,y`
        strict: Reject rows with y < t (True) or drop them with a warning (False)

    Returns:
        TruncatedSample carrying the file's seed and attempted metadata

    Raises:
        DatasetError: missing file, bad header, malformed row, empty file,
            invalid rows in strict mode, or no valid row at all
    """
    path = Path(path)
    metadata, body, line_numbers = _split_lines(path)
    if not body:
        raise DatasetError(f"dataset is empty: {path}")
    if body[0].replace(" ", "") != HEADER:
        raise DatasetError(f"expected header '{HEADER}', found '{body[0]}'", rows=[line_numbers[0]])

    try:
        frame = pd.read_csv(io.StringIO("\n".join(body)), dtype=str, skipinitialspace=True, keep_default_na=False)
    except pd.errors.ParserError as exc:
        raise DatasetError(f"malformed dataset {path}: {exc}") from exc
    frame["line"] = line_numbers[1:]
    if frame.empty:
        raise DatasetError(f"dataset has a header but no rows: {path}")

    t = frame["t"].map(_parse_float)
    y = frame["y"].map(_parse_float)
    malformed = frame.loc[t.isna() | y.isna(), "line"].tolist()
    if malformed:
        raise DatasetError(f"malformed rows at lines {malformed}", rows=malformed)

    t, y = t.astype(float), y.astype(float)
    invalid = frame.loc[~(y >= t), "line"].tolist()
    if invalid:
        if strict:
            raise DatasetError(f"rows violate y >= t at lines {invalid}", rows=invalid)
        logger.warning("dropping %d rows with y < t (lines %s)", len(invalid), invalid)
        keep = (y >= t).to_numpy()
        t, y = t[keep], y[keep]
        if t.empty:
            raise DatasetError(f"every row of {path} violates y >= t", rows=invalid)

    sample = TruncatedSample(
        t=t.to_numpy(),
        y=y.to_numpy(),
        attempted=metadata.get("attempted", 0),
        seed=metadata.get("seed"),
    )
    if sample.has_ties:
        logger.warning("dataset %s has tied y values", path)
    logger.debug("ingested %d pairs from %s", sample.n, path)
    return sample


def format_dataset(sample: TruncatedSample) -> str:
    """Dataset text with shortest round-trip float formatting."""
    lines = []
    if sample.seed is not None:
        lines.append(f"# seed: {int(sample.seed)}")
    if sample.attempted:
        lines.append(f"# attempted: {int(sample.attempted)}")
    lines.append(HEADER)
    lines.extend(f"{float(t)!r},{float(y)!r}" for t, y in zip(sample.t, sample.y))
    return "\n".join(lines) + "\n"


def emit_dataset(sample: TruncatedSample, path) -> Path:
    """
    Write a sample so that ingest then emit reproduces the file byte for byte.

    Args:
        sample: Truncated sample
        path: Destination file

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(format_dataset(sample))
    return path
