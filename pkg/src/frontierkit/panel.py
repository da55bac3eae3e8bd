"""Balanced DMU x period panels: loading, validation, deflation, summaries.

A panel is read from a long CSV (one row per ``(dmu, year)``) and a schema
that assigns each variable a role:

* ``output`` and ``input`` quantities must be strictly positive, since both
  frontier methods work with their logarithms or ratios;
* ``covariate`` columns are unrestricted (EBITDA can be negative, dummies
  are 0/1).

``PAX`` and ``ATM`` columns are combined into ``SIZE = PAX / ATM`` unless the
file already carries a ``SIZE`` column, which then takes precedence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DivisionByZero,
    DuplicateRow,
    MissingIndexYear,
    NonPositiveQuantity,
    SchemaMismatch,
    UnbalancedPanel,
    UnknownVariable,
    ValidationError,
    ZeroVariance,
)

ROLES = ("output", "input", "covariate")


@dataclass(frozen=True)
class Variable:
    name: str
    role: str
    units: str = ""
    deflate: bool = False

    def __post_init__(self):
        if self.role not in ROLES:
            raise SchemaMismatch(f"variable {self.name!r}: unknown role {self.role!r}")


@dataclass(frozen=True)
class PanelSchema:
    """Column layout of a panel CSV.

    Variable names double as column names. ``size``, ``pax`` and ``atm`` name
    the columns used to derive average aircraft size when ``size`` is declared
    but absent from the file.
    """

    variables: tuple[Variable, ...]
    id_column: str = "dmu"
    period_column: str = "year"
    size: str = "SIZE"
    pax: str = "PAX"
    atm: str = "ATM"

    @classmethod
    def from_mapping(cls, spec: Mapping) -> "PanelSchema":
        raw = spec.get("variables")
        if not raw:
            raise SchemaMismatch("schema declares no variables")
        variables = []
        for name, meta in raw.items():
            meta = meta or {}
            if isinstance(meta, str):
                meta = {"role": meta}
            variables.append(
                Variable(
                    name=str(name),
                    role=meta.get("role", "covariate"),
                    units=str(meta.get("units", "")),
                    deflate=bool(meta.get("deflate", False)),
                )
            )
        kwargs = {k: spec[k] for k in ("id_column", "period_column", "size", "pax", "atm") if k in spec}
        return cls(variables=tuple(variables), **kwargs)

    def by_role(self, role: str) -> list[str]:
        return [v.name for v in self.variables if v.role == role]


@dataclass(frozen=True)
class PanelDataset:
    """Immutable balanced panel.

    Values are stored per variable as read-only ``(n_dmus, n_periods)``
    arrays; row ``i`` is ``dmus[i]`` and column ``t`` is ``periods[t]``.
    Flattened views use DMU-major order, i.e. ``(dmu_0, p_0), (dmu_0, p_1)...``.
    """

    dmus: tuple[str, ...]
    periods: tuple[int, ...]
    registry: Mapping[str, Variable]
    values: Mapping[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dmus", tuple(str(d) for d in self.dmus))
        object.__setattr__(self, "periods", tuple(int(p) for p in self.periods))
        frozen = {}
        for name, arr in self.values.items():
            a = np.array(arr, dtype=float)
            a.setflags(write=False)
            frozen[name] = a
        object.__setattr__(self, "values", MappingProxyType(frozen))
        object.__setattr__(self, "registry", MappingProxyType(dict(self.registry)))
        self._validate()

    def _validate(self):
        n, t = len(self.dmus), len(self.periods)
        if n == 0 or t == 0:
            raise UnbalancedPanel("panel has no observations")
        if len(set(self.dmus)) != n:
            raise DuplicateRow("duplicate DMU identifiers")
        p = np.asarray(self.periods)
        if t > 1 and not np.all(np.diff(p) == 1):
            raise UnbalancedPanel(f"periods must be consecutive increasing integers, got {self.periods}")
        if set(self.registry) != set(self.values):
            raise SchemaMismatch("registry and value columns disagree")
        if not self.outputs or not self.inputs:
            raise SchemaMismatch("panel needs at least one output and one input")
        for name, arr in self.values.items():
            if arr.shape != (n, t):
                raise UnbalancedPanel(f"{name}: shape {arr.shape} != {(n, t)}")
            if not np.all(np.isfinite(arr)):
                raise UnbalancedPanel(f"{name}: missing or non-finite values")
            if self.registry[name].role in ("output", "input") and np.any(arr <= 0):
                i, j = np.argwhere(arr <= 0)[0]
                raise NonPositiveQuantity(
                    f"{name} must be > 0, got {arr[i, j]} at ({self.dmus[i]}, {self.periods[j]})"
                )

    # -- accessors -------------------------------------------------------
    @property
    def n_dmus(self) -> int:
        return len(self.dmus)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def n_obs(self) -> int:
        return self.n_dmus * self.n_periods

    def names(self, role: str | None = None) -> list[str]:
        return [n for n, v in self.registry.items() if role is None or v.role == role]

    @property
    def outputs(self) -> list[str]:
        return self.names("output")

    @property
    def inputs(self) -> list[str]:
        return self.names("input")

    @property
    def covariates(self) -> list[str]:
        return self.names("covariate")

    def get(self, name: str) -> np.ndarray:
        """``(n_dmus, n_periods)`` read-only array for ``name``."""
        try:
            return self.values[name]
        except KeyError:
            raise UnknownVariable(f"unknown variable {name!r}") from None

    def flat(self, name: str) -> np.ndarray:
        return self.get(name).reshape(-1)

    def matrix(self, names: Sequence[str], period: int | None = None) -> np.ndarray:
        """Stack variables as columns; all observations, or one period's cross-section."""
        if period is None:
            return np.column_stack([self.flat(n) for n in names])
        t = self.period_index(period)
        return np.column_stack([self.get(n)[:, t] for n in names])

    def period_index(self, period: int) -> int:
        try:
            return self.periods.index(int(period))
        except ValueError:
            raise ValidationError(f"period {period} not in panel") from None

    def dmu_index(self, dmu: str) -> int:
        try:
            return self.dmus.index(str(dmu))
        except ValueError:
            raise ValidationError(f"DMU {dmu!r} not in panel") from None

    def frame(self) -> pd.DataFrame:
        """Long-format copy with ``dmu`` and ``year`` columns."""
        idx = pd.MultiIndex.from_product([self.dmus, self.periods], names=["dmu", "year"])
        df = pd.DataFrame({n: self.flat(n) for n in self.registry}, index=idx)
        return df.reset_index()

    def to_csv(self, path, float_format: str | None = None) -> None:
        self.frame().to_csv(path, index=False, float_format=float_format)

    def replace(self, values: Mapping[str, np.ndarray] | None = None,
                registry: Mapping[str, Variable] | None = None) -> "PanelDataset":
        """New panel with some variables replaced or added."""
        vals = dict(self.values)
        vals.update(values or {})
        reg = dict(self.registry)
        reg.update(registry or {})
        return PanelDataset(self.dmus, self.periods, reg, vals)

    def subset(self, names: Iterable[str]) -> "PanelDataset":
        names = list(names)
        for n in names:
            self.get(n)
        return PanelDataset(self.dmus, self.periods,
                            {n: self.registry[n] for n in names},
                            {n: self.values[n] for n in names})


def derive_size(pax, atm):
    """Average aircraft size, passengers per movement."""
    pax = np.asarray(pax, dtype=float)
    atm = np.asarray(atm, dtype=float)
    if np.any(atm == 0):
        raise DivisionByZero("SIZE = PAX/ATM undefined for ATM = 0")
    if np.any(pax < 0) or np.any(atm < 0):
        raise NonPositiveQuantity("PAX and ATM must be non-negative")
    out = pax / atm
    return float(out) if out.ndim == 0 else out


def deflate(value, period, base: int, index: Mapping[int, float]):
    """Express nominal ``value`` observed in ``period`` in ``base``-year money.

    ``index`` maps year to price level; the result is
    ``value * index[base] / index[period]``. Works elementwise when
    ``value``/``period`` are arrays.
    """
    periods = np.asarray(period).reshape(-1)
    for y in set(int(p) for p in periods) | {int(base)}:
        if y not in index:
            raise MissingIndexYear(f"price index has no entry for {y}")
        if not index[y] > 0:
            raise ValidationError(f"price index for {y} must be > 0")
    levels = np.array([index[int(p)] for p in periods], dtype=float).reshape(np.shape(period))
    out = np.asarray(value, dtype=float) * (index[int(base)] / levels)
    return float(out) if out.ndim == 0 else out


def load_price_index(path) -> dict[int, float]:
    """Two-column sidecar CSV ``year,index``."""
    df = pd.read_csv(path, float_precision="round_trip")
    if not {"year", "index"} <= set(df.columns):
        raise SchemaMismatch(f"{path}: price index needs 'year' and 'index' columns")
    return {int(y): float(v) for y, v in zip(df["year"], df["index"])}


def _read_table(source, decimal_comma: bool) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        return source.copy()
    if not Path(source).exists():
        raise SchemaMismatch(f"file not found: {source}")
    if decimal_comma:
        return pd.read_csv(source, sep=";", decimal=",", float_precision="round_trip")
    return pd.read_csv(source, float_precision="round_trip")


def _index_long(df: pd.DataFrame, id_col: str, period_col: str, what: str) -> pd.DataFrame:
    for col in (id_col, period_col):
        if col not in df.columns:
            raise SchemaMismatch(f"{what}: required column {col!r} missing")
    df = df.copy()
    df[id_col] = df[id_col].astype(str)
    try:
        df[period_col] = pd.to_numeric(df[period_col], downcast=None).astype(int)
    except (ValueError, TypeError):
        raise SchemaMismatch(f"{what}: period column must hold integer years") from None
    dup = df.duplicated([id_col, period_col], keep=False)
    if dup.any():
        first = df.loc[dup, [id_col, period_col]].iloc[0]
        raise DuplicateRow(f"{what}: duplicate row for ({first[id_col]}, {first[period_col]})")
    return df.set_index([id_col, period_col])


def load_panel(source, schema: PanelSchema | Mapping, *, covariates=None,
               price_index: Mapping[int, float] | None = None, base_year: int | None = None,
               decimal_comma: bool = False) -> PanelDataset:
    """Read and validate a balanced panel.

    Parameters
    ----------
    source : path or DataFrame
        Long table, one row per (dmu, period).
    schema : PanelSchema or mapping
        Variable roles; a plain mapping is parsed with ``PanelSchema.from_mapping``.
    covariates : path or DataFrame, optional
        Second table keyed on the same (dmu, period) columns, merged in.
    price_index, base_year
        When given, every variable flagged ``deflate`` is converted to
        ``base_year`` money. Without an index values are taken as real.
    decimal_comma : bool
        Read ``;``-separated files with ``,`` as the decimal mark.
    """
    if not isinstance(schema, PanelSchema):
        schema = PanelSchema.from_mapping(schema)
    if not schema.by_role("output") or not schema.by_role("input"):
        raise SchemaMismatch("schema must declare at least one output and one input")

    df = _index_long(_read_table(source, decimal_comma), schema.id_column,
                     schema.period_column, "panel")
    if covariates is not None:
        cov = _index_long(_read_table(covariates, decimal_comma), schema.id_column,
                          schema.period_column, "covariates")
        extra = cov.index.difference(df.index)
        if len(extra):
            raise SchemaMismatch(f"covariate rows without panel counterpart, e.g. {extra[0]}")
        overlap = [c for c in cov.columns if c in df.columns]
        df = df.join(cov.drop(columns=overlap), how="left")

    declared = {v.name for v in schema.variables}
    if schema.size in declared and schema.size not in df.columns:
        if schema.pax in df.columns and schema.atm in df.columns:
            atm = pd.to_numeric(df[schema.atm], errors="coerce").to_numpy(float)
            if np.any(atm <= 0):
                raise NonPositiveQuantity(f"{schema.atm} must be > 0 to derive {schema.size}")
            df[schema.size] = derive_size(pd.to_numeric(df[schema.pax], errors="coerce").to_numpy(float), atm)

    missing = [v.name for v in schema.variables if v.name not in df.columns]
    if missing:
        raise SchemaMismatch(f"columns missing from input: {missing}")

    dmus = list(dict.fromkeys(df.index.get_level_values(0)))
    periods = sorted(set(df.index.get_level_values(1)))
    full = pd.MultiIndex.from_product([dmus, periods])
    absent = full.difference(df.index)
    if len(absent):
        raise UnbalancedPanel(f"panel is unbalanced: {len(absent)} missing cell(s), e.g. {absent[0]}")
    df = df.reindex(full)

    if covariates is not None:
        covcols = [c for c in cov.columns if c in declared]
        if df[covcols].isna().any().any():
            raise UnbalancedPanel("covariate table does not cover every (dmu, period) cell")

    values = {}
    for var in schema.variables:
        col = pd.to_numeric(df[var.name], errors="coerce")
        if col.isna().any():
            raise SchemaMismatch(f"{var.name}: non-numeric or missing entries")
        arr = col.to_numpy(float).reshape(len(dmus), len(periods))
        if var.role in ("output", "input") and np.any(arr <= 0):
            i, j = np.argwhere(arr <= 0)[0]
            raise NonPositiveQuantity(f"{var.name} must be > 0, got {arr[i, j]} at ({dmus[i]}, {periods[j]})")
        if var.deflate and price_index is not None:
            base = periods[0] if base_year is None else base_year
            arr = deflate(arr, np.broadcast_to(periods, arr.shape), base, price_index)
        values[var.name] = arr
    registry = {v.name: v for v in schema.variables}
    return PanelDataset(tuple(dmus), tuple(periods), registry, values)


def describe(panel: PanelDataset, names: Sequence[str] | None = None) -> pd.DataFrame:
    """Pooled mean, sample std (n-1), min, max and count per variable."""
    names = list(names) if names is not None else panel.outputs + panel.inputs
    rows = {}
    for n in names:
        x = panel.flat(n)
        rows[n] = {
            "mean": x.mean(),
            "std": x.std(ddof=1) if x.size > 1 else 0.0,
            "min": x.min(),
            "max": x.max(),
            "n": x.size,
        }
    out = pd.DataFrame.from_dict(rows, orient="index")
    out["n"] = out["n"].astype(int)
    return out


def pearson(panel: PanelDataset, names: Sequence[str] | None = None) -> pd.DataFrame:
    names = list(names) if names is not None else panel.outputs + panel.inputs
    X = panel.matrix(names)
    return pearson_matrix(X, names)


def pearson_matrix(X: np.ndarray, names: Sequence[str]) -> pd.DataFrame:
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ZeroVariance("need at least two observations")
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise ZeroVariance(f"constant variable(s): {[n for n, s in zip(names, sd) if s == 0]}")
    Z = (X - X.mean(axis=0)) / sd
    R = Z.T @ Z / X.shape[0]
    R = np.clip((R + R.T) / 2, -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return pd.DataFrame(R, index=list(names), columns=list(names))


@dataclass(frozen=True)
class FrontierSpec:
    """Which variables enter the frontier, and how.

    ``normalizing_output`` is the output used to impose homogeneity in the
    translog distance function (defaults to the first output). ``rts`` is
    ``"VRS"`` or ``"CRS"`` and only affects DEA. Only output orientation is
    supported.
    """

    outputs: tuple[str, ...]
    inputs: tuple[str, ...]
    normalizing_output: str | None = None
    rts: str = "VRS"
    orientation: str = "output"

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if not self.outputs or not self.inputs:
            raise SchemaMismatch("frontier needs at least one output and one input")
        if self.normalizing_output is None:
            object.__setattr__(self, "normalizing_output", self.outputs[0])
        elif self.normalizing_output not in self.outputs:
            raise SchemaMismatch(f"normalizing output {self.normalizing_output!r} is not an output")
        rts = self.rts.upper()
        if rts not in ("VRS", "CRS"):
            raise SchemaMismatch(f"returns to scale must be VRS or CRS, got {self.rts!r}")
        object.__setattr__(self, "rts", rts)
        if self.orientation != "output":
            raise SchemaMismatch("only output orientation is implemented")

    @classmethod
    def from_panel(cls, panel: PanelDataset, **kw) -> "FrontierSpec":
        return cls(tuple(panel.outputs), tuple(panel.inputs), **kw)

    def check(self, panel: PanelDataset) -> None:
        for n in self.outputs + self.inputs:
            panel.get(n)
