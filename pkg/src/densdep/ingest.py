"""Load annual survey counts and map them onto the centred log scale."""

import csv
import importlib.resources
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GapYears, IngestError

SE_FLOOR = 1e-3
REQUIRED_COLUMNS = ("year", "count", "se")
TRAJECTORY_COLUMNS = ("t", "y_observed", "obs_sd")


@dataclass(frozen=True)
class RawSeries:
    species: str
    years: np.ndarray
    count: np.ndarray
    count_se: np.ndarray

    def __len__(self):
        return len(self.years)


@dataclass(frozen=True)
class ObservedSeries:
    """Centred log observations with known per-year observation SD."""

    y: np.ndarray
    S: np.ndarray
    center_window: tuple = (0, None)
    center_value: float = 0.0
    years: np.ndarray = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        S = np.asarray(self.S, dtype=float)
        if y.shape != S.shape or y.ndim != 1:
            raise ValueError("y and S must be 1-d arrays of equal length")
        if np.any(~np.isfinite(S)) or np.any(S <= 0):
            raise ValueError("observation SDs must be finite and > 0")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "S", S)
        if self.years is None:
            object.__setattr__(self, "years", np.arange(1, len(y) + 1))

    def __len__(self):
        return len(self.y)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [(i, line) for i, line in enumerate(fh, start=1) if not line.startswith("#")]
    reader = csv.reader(line for _, line in lines)
    rows = list(reader)
    if not rows:
        raise IngestError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    return header, [(lines[j][0], r) for j, r in enumerate(rows) if j > 0 and any(c.strip() for c in r)]


def load_series(path, species=None):
    """Parse a ``year,count,se`` CSV into a validated :class:`RawSeries`."""
    path = Path(path)
    header, rows = _read_rows(path)
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise IngestError(f"{path}: missing column(s) {', '.join(missing)}", line=1)
    col = {name: header.index(name) for name in REQUIRED_COLUMNS}

    years, counts, ses = [], [], []
    for line, row in rows:
        try:
            year = int(row[col["year"]])
            count = float(row[col["count"]])
            se = float(row[col["se"]])
        except (ValueError, IndexError):
            raise IngestError(f"malformed row {row!r}", line=line) from None
        if not np.isfinite(count) or count <= 0:
            raise IngestError(f"count must be > 0, got {count}", line=line)
        if not np.isfinite(se) or se < 0:
            raise IngestError(f"se must be >= 0, got {se}", line=line)
        if years and year != years[-1] + 1:
            if year <= years[-1]:
                raise IngestError(f"years must be strictly increasing ({years[-1]} then {year})", line=line)
            raise GapYears(f"gap between years {years[-1]} and {year}", line=line)
        years.append(year)
        counts.append(count)
        ses.append(se)
    if not years:
        raise IngestError(f"{path}: no data rows")
    return RawSeries(species or path.stem, np.array(years), np.array(counts), np.array(ses))


def to_log_scale(raw, se_floor=SE_FLOOR):
    """Log counts and first-order (delta method) log-scale SDs se/count."""
    if np.any(raw.count <= 0):
        raise ValueError("counts must be > 0")
    logs = np.log(raw.count)
    S = raw.count_se / raw.count
    low = S < se_floor
    if np.any(low):
        warnings.warn(
            f"{int(low.sum())} observation SD(s) below {se_floor:g} on the log scale replaced by the floor",
            stacklevel=2,
        )
        S = np.where(low, se_floor, S)
    return logs, S


def _window_slice(n, window):
    start, end = (0, None) if window is None else window
    sl = slice(start, end)
    idx = range(n)[sl]
    if len(idx) == 0:
        raise ValueError(f"centering window {window} is empty for a series of length {n}")
    return sl, (idx.start, idx.stop)


def center(logs, window=None, S=None, years=None):
    """Subtract the mean of ``logs[start:end]`` from the whole series.

    ``window`` uses Python slice conventions, so ``(-15, None)`` centres on
    the last fifteen years. ``S`` defaults to ones when only the centring is
    of interest.
    """
    logs = np.asarray(logs, dtype=float)
    sl, resolved = _window_slice(len(logs), window)
    value = float(np.mean(logs[sl]))
    y = logs - value
    if S is None:
        S = np.ones_like(y)
    return ObservedSeries(y=y, S=np.asarray(S, dtype=float), center_window=resolved,
                          center_value=value, years=years)


def load_observed(path, window=None, se_floor=SE_FLOOR):
    """Read either a survey CSV (year,count,se) or a simulated trajectory CSV.

    Survey data are logged and centred; trajectories are already on the
    model scale and are only centred when ``window`` is given.
    """
    header, _ = _read_rows(path)
    if all(c in header for c in TRAJECTORY_COLUMNS):
        t, y, S = _read_trajectory(path)
        if window is None:
            return ObservedSeries(y=y, S=S, center_window=(0, len(y)), center_value=0.0, years=t)
        return center(y, window, S=S, years=t)
    raw = load_series(path)
    logs, S = to_log_scale(raw, se_floor=se_floor)
    return center(logs, window, S=S, years=raw.years)


def sample_survey_path():
    """Path to the bundled synthetic survey (45 years, ``year,count,se``)."""
    return Path(str(importlib.resources.files("densdep") / "data" / "sample_survey.csv"))


def _read_trajectory(path):
    header, rows = _read_rows(path)
    cols = [header.index(c) for c in TRAJECTORY_COLUMNS]
    try:
        data = np.array([[float(r[c]) for c in cols] for _, r in rows])
    except (ValueError, IndexError) as exc:
        raise IngestError(f"{path}: malformed trajectory row ({exc})") from None
    return data[:, 0].astype(int), data[:, 1], data[:, 2]
