"""Long-format CSV input/output and the model formula mini-language.

A formula reads ``y ~ 1 + x | re(1) + re(x)``: the response, the fixed-effect
terms, then the random-effect terms. ``1`` is the intercept. Each ``re(term)``
gets its own scale parameter unless tagged ``re(term):name``, in which case all
terms sharing ``name`` share one scale. Scale parameters are numbered in order
of first appearance.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, EmptyGroup, MissingColumn, NonNumericCell
from .models.lmm import LmmData

_RE_TERM = re.compile(r"^re\(\s*([^()\s]+)\s*\)\s*(?::\s*(\S+))?$")
_NAME = re.compile(r"^[A-Za-z_.][A-Za-z0-9_.]*$|^1$")


def fmt(x) -> str:
    """17 significant digits, enough for an exact float64 round trip."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


@dataclass(frozen=True)
class Formula:
    response: str
    fixed: tuple[str, ...]
    random: tuple[str, ...]
    scale_map: tuple[int, ...]
    scale_names: tuple[str, ...]

    @property
    def columns(self) -> tuple[str, ...]:
        seen = [self.response]
        for t in self.fixed + self.random:
            if t != "1" and t not in seen:
                seen.append(t)
        return tuple(seen)

    def __str__(self) -> str:
        fixed = " + ".join(self.fixed)
        parts = []
        for t, j in zip(self.random, self.scale_map):
            parts.append(f"re({t}):{self.scale_names[j]}")
        return f"{self.response} ~ {fixed} | " + " + ".join(parts)


def parse_formula(text: str) -> Formula:
    if text.count("~") != 1:
        raise DomainError(f"formula needs exactly one '~': {text!r}")
    lhs, rhs = (s.strip() for s in text.split("~"))
    if not _NAME.match(lhs) or lhs == "1":
        raise DomainError(f"bad response name {lhs!r}")
    if rhs.count("|") != 1:
        raise DomainError("formula needs random-effect terms after '|'")
    fixed_txt, rand_txt = (s.strip() for s in rhs.split("|"))
    fixed = tuple(t.strip() for t in fixed_txt.split("+"))
    for t in fixed:
        if not _NAME.match(t):
            raise DomainError(f"bad fixed-effect term {t!r}")
    if len(set(fixed)) != len(fixed):
        raise DomainError("repeated fixed-effect term")
    random, tags = [], []
    for raw in rand_txt.split("+"):
        m = _RE_TERM.match(raw.strip())
        if not m or not _NAME.match(m.group(1)):
            raise DomainError(f"bad random-effect term {raw.strip()!r}; expected re(term) or re(term):name")
        random.append(m.group(1))
        tags.append(m.group(2))
    if len(set(random)) != len(random):
        raise DomainError("repeated random-effect term")
    names: list[str] = []
    smap = []
    for t, tag in zip(random, tags):
        key = tag if tag is not None else f"re({t})"
        if key not in names:
            names.append(key)
        smap.append(names.index(key))
    return Formula(lhs, fixed, tuple(random), tuple(smap), tuple(names))


def _term_values(term, row_vals):
    return 1.0 if term == "1" else row_vals[term]


def parse_long_csv(path, formula: str | Formula, group_col: str = "group") -> LmmData:
    """Read a long-format CSV into an :class:`LmmData`; groups keep first-appearance order."""
    form = parse_formula(formula) if isinstance(formula, str) else formula
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyGroup("<no rows>") from None
        for col in (group_col,) + form.columns:
            if col not in header:
                raise MissingColumn(col, header)
        pos = {h: i for i, h in enumerate(header)}
        order: list[str] = []
        rows: dict[str, list] = {}
        for rownum, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < len(header):
                rec = rec + [""] * (len(header) - len(rec))
            gid = rec[pos[group_col]].strip()
            if not gid:
                raise EmptyGroup(f"<blank identifier in row {rownum}>")
            vals = {}
            for col in form.columns:
                cell = rec[pos[col]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(rownum, col, cell) from None
                if not math.isfinite(v):
                    raise NonNumericCell(rownum, col, cell)
                vals[col] = v
            if gid not in rows:
                rows[gid] = []
                order.append(gid)
            rows[gid].append(vals)
    if not order:
        raise EmptyGroup("<no rows>")
    groups = []
    for gid in order:
        recs = rows[gid]
        y = np.array([r[form.response] for r in recs])
        X = np.array([[_term_values(t, r) for t in form.fixed] for r in recs])
        Z = np.array([[_term_values(t, r) for t in form.random] for r in recs])
        groups.append((y, X, Z))
    return LmmData.from_groups(groups, form.scale_map, order, form.fixed, form.random)


def write_long_csv(path, data: LmmData, formula: str | Formula, group_col: str = "group") -> None:
    """Inverse of :func:`parse_long_csv` for data whose columns are named by ``formula``."""
    form = parse_formula(formula) if isinstance(formula, str) else formula
    if tuple(data.x_names) != form.fixed or tuple(data.z_names) != form.random:
        raise DomainError("data columns do not match the formula terms")
    cols = form.columns
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((group_col,) + cols)
        for i in range(data.n):
            y, X, Z = data.group(i)
            for k in range(y.size):
                vals = {form.response: y[k]}
                for j, t in enumerate(form.fixed):
                    if t != "1":
                        vals[t] = X[k, j]
                for j, t in enumerate(form.random):
                    if t != "1":
                        vals.setdefault(t, Z[k, j])
                w.writerow([str(data.labels[i])] + [fmt(vals[c]) for c in cols])


def write_csv(path_or_fh, header, rows) -> None:
    """Plain CSV with :func:`fmt` applied to every numeric cell."""
    def cell(v):
        return v if isinstance(v, str) else fmt(v)

    if hasattr(path_or_fh, "write"):
        w = csv.writer(path_or_fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([cell(v) for v in r])
        return
    with open(path_or_fh, "w", newline="", encoding="utf-8") as fh:
        write_csv(fh, header, rows)
