"""Panel data model, long-format CSV input and output, design construction.

A panel holds one treated unit (always first), N-1 donor units, outcomes on a
common time grid, and optional covariate blocks. Covariates are either
time-invariant (one component) or pre-period time-varying (one component per
pre-period time point). The design matrices stack pre-period outcomes over
covariate components in a fixed covariate-major order, with an optional
intercept column that carries ones on outcome rows and zeros elsewhere, so a
coefficient on it shifts the fitted outcome path without touching covariates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionError,
    NotFoundError,
    SchemaError,
    ValidationError,
)

__all__ = [
    "CovariateBlock",
    "Panel",
    "RowBlocks",
    "DesignMatrices",
    "load_panel",
    "write_panel",
    "build_design",
    "standardize_covariates",
]

_OUTCOME_HEADER = ["unit", "time", "outcome"]
_COVARIATE_HEADER = ["unit", "covariate", "component_index", "value"]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CovariateBlock:
    """One named covariate: a row per unit, one column per component."""

    name: str
    values: np.ndarray  # (N, R_j)

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.atleast_2d(self.values)))

    @property
    def size(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Panel:
    """Balanced outcome panel with one treated unit and a donor pool.

    Attributes
    ----------
    unit_ids : tuple of str
        Unit labels; the treated unit is unit_ids[0], donors follow.
    times : tuple
        Strictly increasing time labels, all numeric or all strings.
    Y : ndarray, shape (N, T)
        Outcomes, row i for unit_ids[i].
    covariates : tuple of CovariateBlock
        Zero or more blocks; each block has one row per unit.
    pre_periods : int
        Number of pre-treatment periods; at least 1, less than T.
    """

    unit_ids: tuple
    times: tuple
    Y: np.ndarray
    covariates: tuple = ()
    pre_periods: int = 1

    def __post_init__(self):
        object.__setattr__(self, "unit_ids", tuple(str(u) for u in self.unit_ids))
        object.__setattr__(self, "times", tuple(self.times))
        object.__setattr__(self, "Y", _readonly(self.Y))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        self._validate()

    def _validate(self):
        n, t = self.Y.shape if self.Y.ndim == 2 else (0, 0)
        if self.Y.ndim != 2:
            raise DimensionError("Y must be a 2-d array of shape (N, T)")
        if len(self.unit_ids) != n:
            raise DimensionError(
                f"unit_ids has {len(self.unit_ids)} entries for {n} outcome rows"
            )
        if len(self.times) != t:
            raise DimensionError(
                f"times has {len(self.times)} entries for {t} outcome columns"
            )
        if n < 2:
            raise ValidationError("panel needs a treated unit and at least one donor")
        if len(set(self.unit_ids)) != n:
            raise ValidationError("unit_ids contains duplicates")
        for a, b in zip(self.times, self.times[1:]):
            if not a < b:
                raise ValidationError(f"times must be strictly increasing, saw {a!r} then {b!r}")
        if not np.all(np.isfinite(self.Y)):
            raise ValidationError("Y contains non-finite values")
        if not 1 <= self.pre_periods < t:
            raise ValidationError(
                f"pre_periods must satisfy 1 <= pre_periods < T, "
                f"got {self.pre_periods} with T={t}"
            )
        for block in self.covariates:
            if block.values.shape[0] != n:
                raise DimensionError(
                    f"covariate {block.name!r} has {block.values.shape[0]} rows for {n} units"
                )
            if block.size not in (1, self.pre_periods):
                raise SchemaError(
                    f"covariate {block.name!r} has {block.size} components; "
                    f"expected 1 (time-invariant) or pre_periods={self.pre_periods} "
                    f"(time-varying)"
                )
            if not np.all(np.isfinite(block.values)):
                raise ValidationError(f"covariate {block.name!r} contains non-finite values")
        names = [b.name for b in self.covariates]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate covariate names")

    @property
    def n_units(self) -> int:
        return self.Y.shape[0]

    @property
    def n_times(self) -> int:
        return self.Y.shape[1]

    @property
    def n_post(self) -> int:
        return self.n_times - self.pre_periods

    @property
    def block_sizes(self) -> tuple:
        return tuple(b.size for b in self.covariates)

    @property
    def treated_id(self) -> str:
        return self.unit_ids[0]

    @property
    def donor_ids(self) -> tuple:
        return self.unit_ids[1:]


@dataclass(frozen=True)
class RowBlocks:
    """Row layout of a stacked design: pre-period outcomes then covariate blocks."""

    pre_periods: int
    sizes: tuple = ()

    @property
    def n_rows(self) -> int:
        return self.pre_periods + sum(self.sizes)

    @property
    def outcome_rows(self) -> slice:
        return slice(0, self.pre_periods)

    def block_rows(self, j: int) -> slice:
        start = self.pre_periods + sum(self.sizes[:j])
        return slice(start, start + self.sizes[j])


@dataclass(frozen=True)
class DesignMatrices:
    """Stacked treated vector and donor matrix sharing one row layout.

    X1 stacks the treated unit's pre-period outcomes over its covariate
    components. X0 holds one column per donor in the same layout, preceded by
    the intercept column when has_intercept is true. Weight vectors are always
    full length N: position 0 is the shift coefficient (fixed at zero when the
    intercept column is absent), positions 1..N-1 follow the donor order.
    """

    X1: np.ndarray
    X0: np.ndarray
    blocks: RowBlocks
    has_intercept: bool

    def __post_init__(self):
        object.__setattr__(self, "X1", _readonly(self.X1))
        object.__setattr__(self, "X0", _readonly(self.X0))
        if self.X1.ndim != 1 or self.X0.ndim != 2:
            raise DimensionError("X1 must be a vector and X0 a matrix")
        if self.X1.shape[0] != self.X0.shape[0] or self.X1.shape[0] != self.blocks.n_rows:
            raise DimensionError("X1, X0 and the row layout disagree on row count")
        if self.X0.shape[1] < (2 if self.has_intercept else 1):
            raise DimensionError("X0 must contain at least one donor column")

    @property
    def n_units(self) -> int:
        """Number of weight positions: shift term plus donors."""
        return self.X0.shape[1] + (0 if self.has_intercept else 1)

    @property
    def n_donors(self) -> int:
        return self.X0.shape[1] - (1 if self.has_intercept else 0)

    def donor_columns(self) -> np.ndarray:
        return self.X0[:, 1:] if self.has_intercept else self.X0

    def residual(self, weights: np.ndarray) -> np.ndarray:
        """X1 - X0 @ weights, with weights given in full length-N form."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.n_units,):
            raise DimensionError(
                f"weights must have length {self.n_units}, got {weights.shape}"
            )
        coef = weights if self.has_intercept else weights[1:]
        return self.X1 - self.X0 @ coef


def _parse_time(raw: str):
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _read_rows(path, expected_header, label):
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"{label} file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{label} file {path} is empty") from None
        if [h.strip() for h in header] != expected_header:
            raise SchemaError(
                f"{label} file {path} must have header {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected_header):
                raise SchemaError(f"{label} file {path} line {lineno}: expected "
                                  f"{len(expected_header)} fields, got {len(row)}")
            rows.append([c.strip() for c in row])
    return rows


def load_panel(outcomes_path, treated_id, pre_boundary, covariates_path=None) -> Panel:
    """Read a panel from long-format CSVs.

    Parameters
    ----------
    outcomes_path : path-like
        CSV with header ``unit,time,outcome``, one row per cell of a balanced
        unit-by-time grid.
    treated_id : str
        Unit to place first; all remaining units become donors in file order.
    pre_boundary : comparable
        Last pre-treatment time; the pre-period length is the count of
        times at or below it.
    covariates_path : path-like, optional
        CSV with header ``unit,covariate,component_index,value``. Every unit
        must carry every covariate with the same contiguous component range
        starting at 1.

    Raises
    ------
    NotFoundError
        Missing file or unknown treated_id.
    SchemaError
        Header mismatch or inconsistent covariate blocks.
    ValidationError
        Holes in the grid, duplicate cells, non-numeric outcomes, or a
        boundary that leaves no pre- or no post-period.
    """
    rows = _read_rows(outcomes_path, _OUTCOME_HEADER, "outcomes")
    treated_id = str(treated_id)

    cells = {}
    unit_order = []
    time_values = set()
    for unit, time_raw, outcome_raw in rows:
        t = _parse_time(time_raw)
        if unit not in cells:
            cells[unit] = {}
            unit_order.append(unit)
        if t in cells[unit]:
            raise ValidationError(f"duplicate outcome cell for unit {unit!r} at time {t!r}")
        try:
            y = float(outcome_raw)
        except ValueError:
            raise ValidationError(
                f"non-numeric outcome {outcome_raw!r} for unit {unit!r} at time {t!r}"
            ) from None
        cells[unit][t] = y
        time_values.add(t)

    if not cells:
        raise ValidationError(f"outcomes file {outcomes_path} has no data rows")
    kinds = {type(t) in (int, float) for t in time_values}
    if len(kinds) > 1:
        raise ValidationError("time labels mix numeric and non-numeric values")
    times = tuple(sorted(time_values))

    if treated_id not in cells:
        raise NotFoundError(f"treated unit {treated_id!r} not present in outcomes file")
    unit_ids = [treated_id] + [u for u in unit_order if u != treated_id]

    Y = np.empty((len(unit_ids), len(times)))
    for i, unit in enumerate(unit_ids):
        have = cells[unit]
        for k, t in enumerate(times):
            if t not in have:
                raise ValidationError(f"unit {unit!r} is missing time {t!r}")
            Y[i, k] = have[t]

    boundary = _parse_time(str(pre_boundary))
    if isinstance(times[0], str) != isinstance(boundary, str):
        raise ValidationError(
            f"boundary {pre_boundary!r} is not comparable with the panel's time labels"
        )
    n_pre = sum(1 for t in times if t <= boundary)
    if n_pre < 1:
        raise ValidationError(f"no pre-period: every time exceeds the boundary {pre_boundary!r}")
    if n_pre >= len(times):
        raise ValidationError(f"no post-period: every time is at or below {pre_boundary!r}")

    covariates: list[CovariateBlock] = []
    if covariates_path is not None:
        crows = _read_rows(covariates_path, _COVARIATE_HEADER, "covariates")
        table = {}
        for unit, cov, idx_raw, val_raw in crows:
            if unit not in cells:
                raise ValidationError(f"covariate row references unknown unit {unit!r}")
            try:
                idx = int(idx_raw)
            except ValueError:
                raise SchemaError(f"component_index must be an integer, got {idx_raw!r}") from None
            try:
                val = float(val_raw)
            except ValueError:
                raise ValidationError(
                    f"non-numeric covariate value {val_raw!r} ({cov!r}, unit {unit!r})"
                ) from None
            key = (cov, unit, idx)
            if key in table:
                raise ValidationError(
                    f"duplicate covariate cell {cov!r} component {idx} for unit {unit!r}"
                )
            table[key] = val

        cov_names = sorted({cov for cov, _, _ in table})
        for cov in cov_names:
            sizes = {}
            for (c, unit, idx) in table:
                if c == cov:
                    sizes.setdefault(unit, set()).add(idx)
            missing = set(unit_ids) - set(sizes)
            if missing:
                raise SchemaError(
                    f"covariate {cov!r} missing for unit(s) {sorted(missing)}"
                )
            widths = {max(v) for v in sizes.values()}
            if len(widths) != 1:
                raise SchemaError(f"covariate {cov!r} has inconsistent widths across units")
            width = widths.pop()
            expected = set(range(1, width + 1))
            for unit, idxs in sizes.items():
                if idxs != expected:
                    raise SchemaError(
                        f"covariate {cov!r} for unit {unit!r} must have components 1..{width}"
                    )
            vals = np.empty((len(unit_ids), width))
            for i, unit in enumerate(unit_ids):
                for idx in range(1, width + 1):
                    vals[i, idx - 1] = table[(cov, unit, idx)]
            covariates.append(CovariateBlock(cov, vals))

    return Panel(unit_ids=unit_ids, times=times, Y=Y, covariates=covariates,
                 pre_periods=n_pre)


def write_panel(panel: Panel, outcomes_path, covariates_path=None) -> None:
    """Write a panel back to the long-format CSV schema read by load_panel."""
    with open(outcomes_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_OUTCOME_HEADER)
        for i, unit in enumerate(panel.unit_ids):
            for k, t in enumerate(panel.times):
                writer.writerow([unit, t, repr(float(panel.Y[i, k]))])
    if covariates_path is None:
        if panel.covariates:
            raise ValidationError("panel has covariates; pass covariates_path to keep them")
        return
    with open(covariates_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COVARIATE_HEADER)
        for block in panel.covariates:
            for i, unit in enumerate(panel.unit_ids):
                for r in range(block.size):
                    writer.writerow([unit, block.name, r + 1, repr(float(block.values[i, r]))])


def build_design(panel: Panel, use_covariates: bool = True, use_intercept: bool = True) -> DesignMatrices:
    """Stack pre-period outcomes and covariate components into X1 and X0.

    The treated unit becomes X1; each donor becomes a column of X0. With
    use_intercept the first column of X0 is one on outcome rows and zero on
    covariate rows. Construction is pure: the same panel always produces
    bit-identical matrices.
    """
    n_pre = panel.pre_periods
    blocks = RowBlocks(n_pre, panel.block_sizes if use_covariates else ())
    n_rows = blocks.n_rows

    def unit_column(i: int) -> np.ndarray:
        parts = [panel.Y[i, :n_pre]]
        if use_covariates:
            parts.extend(block.values[i] for block in panel.covariates)
        return np.concatenate(parts) if len(parts) > 1 else parts[0].copy()

    X1 = unit_column(0)
    cols = []
    if use_intercept:
        intercept = np.zeros(n_rows)
        intercept[:n_pre] = 1.0
        cols.append(intercept)
    cols.extend(unit_column(i) for i in range(1, panel.n_units))
    X0 = np.column_stack(cols)
    return DesignMatrices(X1=X1, X0=X0, blocks=blocks, has_intercept=use_intercept)


def standardize_covariates(panel: Panel) -> Panel:
    """Center and scale each covariate component by donor-pool statistics.

    Means and standard deviations are computed over donors only, per
    component, so the treated unit's standardized values remain comparable.
    Components with zero donor variance are centered but not rescaled.
    """
    new_blocks = []
    for block in panel.covariates:
        donor_vals = block.values[1:, :]
        mean = donor_vals.mean(axis=0)
        sd = donor_vals.std(axis=0, ddof=0)
        sd = np.where(sd > 0.0, sd, 1.0)
        new_blocks.append(CovariateBlock(block.name, (block.values - mean) / sd))
    return Panel(
        unit_ids=panel.unit_ids,
        times=panel.times,
        Y=panel.Y,
        covariates=new_blocks,
        pre_periods=panel.pre_periods,
    )
