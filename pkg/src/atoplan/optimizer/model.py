"""A small matrix-oriented MILP container.

Variables are allocated in blocks (one block per role, indexed by node and
entity) so that the column order is role, then node, then entity. Rows are
stored in coordinate form and assembled into a sparse matrix on demand.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

INF = np.inf


@dataclass
class Block:
    role: str
    index: np.ndarray  # variable indices, shape (nodes, entities) or (nodes, entities, segments)
    integer: bool
    implied: bool = False


@dataclass
class RowGroup:
    name: str
    start: int
    stop: int
    shape: tuple[int, ...]


@dataclass
class MilpModel:
    """Maximization MILP ``max c.x + c0  s.t.  row_lb <= A x <= row_ub, lb <= x <= ub``."""

    name: str = "model"
    blocks: dict[str, Block] = field(default_factory=dict)
    row_groups: list[RowGroup] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    objective_constant: float = 0.0

    def __post_init__(self):
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._int: list[np.ndarray] = []
        self._obj: list[np.ndarray] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._row_lb: list[np.ndarray] = []
        self._row_ub: list[np.ndarray] = []
        self.num_vars = 0
        self.num_rows = 0
        self._cache = None

    # -- variables ---------------------------------------------------------
    def add_block(
        self, role: str, shape, integer: bool = True, lb=0.0, ub=INF, implied: bool = False
    ) -> np.ndarray:
        """Declare a block of variables.

        ``implied`` marks integer blocks whose integrality already follows
        from other integer blocks through equality rows; backends may relax
        them, and solutions are still checked for integrality.
        """
        if role in self.blocks:
            raise ValueError(f"block {role!r} already declared")
        shape = tuple(int(s) for s in shape)
        size = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.num_vars, self.num_vars + size).reshape(shape)
        self.num_vars += size
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel().copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel().copy())
        self._int.append(np.full(size, integer, dtype=bool))
        self._obj.append(np.zeros(size))
        self.blocks[role] = Block(role, idx, integer, implied and integer)
        self._cache = None
        return idx

    def set_objective(self, idx, coef) -> None:
        obj = self._flat("_obj")
        obj[np.asarray(idx).ravel()] = np.broadcast_to(coef, np.shape(idx)).ravel()
        self._obj = [obj]

    def add_objective(self, idx, coef) -> None:
        obj = self._flat("_obj")
        np.add.at(obj, np.asarray(idx).ravel(), np.broadcast_to(coef, np.shape(idx)).ravel())
        self._obj = [obj]

    def set_bounds(self, idx, lb=None, ub=None) -> None:
        shape = np.shape(idx)
        idx = np.asarray(idx).ravel()
        if lb is not None:
            arr = self._flat("_lb")
            arr[idx] = np.broadcast_to(lb, shape).ravel()
            self._lb = [arr]
        if ub is not None:
            arr = self._flat("_ub")
            arr[idx] = np.broadcast_to(ub, shape).ravel()
            self._ub = [arr]
        self._cache = None

    def set_integrality(self, idx, integer: bool) -> None:
        """Override integrality of individual columns (used to relax later stages)."""
        arr = self._flat("_int").astype(bool)
        arr[np.asarray(idx).ravel()] = integer
        self._int = [arr]
        self._cache = None

    def set_row_bounds(self, rows, lb=None, ub=None) -> None:
        rows = np.asarray(rows).ravel()
        for attr, vals in (("_row_lb", lb), ("_row_ub", ub)):
            if vals is None:
                continue
            arr = self._flat(attr)
            arr[rows] = np.broadcast_to(vals, rows.shape)
            setattr(self, attr, [arr])
        if self._cache is not None:
            c, A, _, _, lb_, ub_, integ = self._cache
            self._cache = (c, A, self._flat("_row_lb"), self._flat("_row_ub"), lb_, ub_, integ)

    def _flat(self, attr: str) -> np.ndarray:
        parts = getattr(self, attr)
        return np.concatenate(parts) if parts else np.zeros(0)

    # -- constraints -------------------------------------------------------
    def add_rows(self, name: str, shape, rows, cols, vals, lb, ub) -> slice:
        """Append ``prod(shape)`` rows; ``rows`` are group-local row numbers."""
        shape = tuple(int(s) for s in shape)
        n = int(np.prod(shape))
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("row, column and value arrays must align")
        if len(rows) and (rows.min() < 0 or rows.max() >= n):
            raise ValueError(f"row group {name!r} references rows outside its shape")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.num_vars):
            raise ValueError(f"row group {name!r} references undeclared variables")
        start = self.num_rows
        self._rows.append(rows + start)
        self._cols.append(cols)
        self._vals.append(vals)
        self._row_lb.append(np.broadcast_to(np.asarray(lb, dtype=float), (n,)).astype(float).ravel())
        self._row_ub.append(np.broadcast_to(np.asarray(ub, dtype=float), (n,)).astype(float).ravel())
        self.num_rows += n
        self.row_groups.append(RowGroup(name, start, start + n, shape))
        self._cache = None
        return slice(start, start + n)

    # -- assembled views ---------------------------------------------------
    def arrays(self):
        """``(c, A, row_lb, row_ub, lb, ub, integrality)`` with ``A`` in CSR form."""
        if self._cache is None:
            A = sparse.coo_matrix(
                (self._flat("_vals"), (self._flat("_rows").astype(np.int64), self._flat("_cols").astype(np.int64))),
                shape=(self.num_rows, self.num_vars),
            ).tocsr()
            A.sum_duplicates()
            self._cache = (
                self._flat("_obj"), A, self._flat("_row_lb"), self._flat("_row_ub"),
                self._flat("_lb"), self._flat("_ub"), self._flat("_int").astype(bool),
            )
        else:
            # objective may have changed after assembly
            self._cache = (self._flat("_obj"),) + self._cache[1:]
        return self._cache

    def relaxable(self) -> np.ndarray:
        """Mask of integer variables whose integrality is implied."""
        mask = np.zeros(self.num_vars, dtype=bool)
        for block in self.blocks.values():
            if block.implied:
                mask[block.index.ravel()] = True
        return mask

    def objective_value(self, values) -> float:
        c = self._flat("_obj")
        return float(c @ np.asarray(values, dtype=float) + self.objective_constant)

    def value_of(self, values, role: str) -> np.ndarray:
        return np.asarray(values)[self.blocks[role].index]

    def var_names(self) -> list[str]:
        names = [""] * self.num_vars
        for block in self.blocks.values():
            for pos in np.ndindex(block.index.shape):
                names[block.index[pos]] = block.role + "_" + "_".join(map(str, pos))
        return names

    def row_names(self) -> list[str]:
        names = []
        for g in self.row_groups:
            names.extend(g.name + "_" + "_".join(map(str, pos)) for pos in np.ndindex(g.shape))
        return names

    def violations(self, values, tol: float = 1e-6) -> list[str]:
        """Constraint, bound and integrality violations of a candidate point."""
        _, A, rlb, rub, lb, ub, integ = self.arrays()
        x = np.asarray(values, dtype=float)
        out = []
        ax = A @ x
        bad_rows = np.flatnonzero((ax < rlb - tol) | (ax > rub + tol))
        if len(bad_rows):
            names = self.row_names()
            out += [f"row {names[r]}: {ax[r]:.6g} not in [{rlb[r]:.6g}, {rub[r]:.6g}]" for r in bad_rows[:20]]
        bad_cols = np.flatnonzero((x < lb - tol) | (x > ub + tol))
        bad_int = np.flatnonzero(integ & (np.abs(x - np.round(x)) > tol))
        if len(bad_cols) or len(bad_int):
            names = self.var_names()
            out += [f"bound {names[c]}: {x[c]:.6g}" for c in bad_cols[:20]]
            out += [f"integrality {names[c]}: {x[c]:.6g}" for c in bad_int[:20]]
        return out

    # -- text formats ------------------------------------------------------
    def to_lp(self) -> str:
        c, A, rlb, rub, lb, ub, integ = self.arrays()
        vn, rn = self.var_names(), self.row_names()
        buf = io.StringIO()
        buf.write(f"\\ {self.name}\nMaximize\n obj:")
        _write_terms(buf, np.flatnonzero(c), c, vn)
        if self.objective_constant:
            buf.write(f" + {_num(self.objective_constant)} __const")
        buf.write("\nSubject To\n")
        A = A.tocsr()
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            cols, vals = A.indices[lo:hi], A.data[lo:hi]
            dense = dict(zip(cols, vals))
            if rlb[r] == rub[r]:
                sense, rhs = "=", rlb[r]
                parts = [(rn[r], sense, rhs)]
            else:
                parts = []
                if np.isfinite(rub[r]):
                    parts.append((rn[r] + ("_ub" if np.isfinite(rlb[r]) else ""), "<=", rub[r]))
                if np.isfinite(rlb[r]):
                    parts.append((rn[r] + ("_lb" if np.isfinite(rub[r]) else ""), ">=", rlb[r]))
            for label, sense, rhs in parts:
                buf.write(f" {label}:")
                _write_terms(buf, sorted(dense), dense, vn)
                buf.write(f" {sense} {_num(rhs)}\n")
        buf.write("Bounds\n")
        for k in range(self.num_vars):
            lo = "-inf" if not np.isfinite(lb[k]) else _num(lb[k])
            hi = "+inf" if not np.isfinite(ub[k]) else _num(ub[k])
            buf.write(f" {lo} <= {vn[k]} <= {hi}\n")
        if self.objective_constant:
            buf.write(" __const = 1\n")
        ints = np.flatnonzero(integ)
        if len(ints):
            buf.write("General\n")
            for k in ints:
                buf.write(f" {vn[k]}\n")
        buf.write("End\n")
        return buf.getvalue()

    def to_mps(self) -> str:
        c, A, rlb, rub, lb, ub, integ = self.arrays()
        vn, rn = self.var_names(), self.row_names()
        buf = io.StringIO()
        buf.write(f"NAME {self.name}\nOBJSENSE\n    MAX\nROWS\n N obj\n")
        senses = []
        for r in range(self.num_rows):
            if rlb[r] == rub[r]:
                s = "E"
            elif np.isfinite(rub[r]):
                s = "L"
            elif np.isfinite(rlb[r]):
                s = "G"
            else:
                s = "N"
            senses.append(s)
            buf.write(f" {s} {rn[r]}\n")
        buf.write("COLUMNS\n")
        Ac = A.tocsc()
        in_int = False
        for k in range(self.num_vars):
            if integ[k] and not in_int:
                buf.write("    MARKER 'MARKER' 'INTORG'\n")
                in_int = True
            elif not integ[k] and in_int:
                buf.write("    MARKER 'MARKER' 'INTEND'\n")
                in_int = False
            if c[k]:
                buf.write(f"    {vn[k]} obj {_num(c[k])}\n")
            lo, hi = Ac.indptr[k], Ac.indptr[k + 1]
            for r, v in zip(Ac.indices[lo:hi], Ac.data[lo:hi]):
                buf.write(f"    {vn[k]} {rn[r]} {_num(v)}\n")
        if in_int:
            buf.write("    MARKER 'MARKER' 'INTEND'\n")
        buf.write("RHS\n")
        if self.objective_constant:
            # constant moves to the RHS of the objective row with flipped sign
            buf.write(f"    RHS obj {_num(-self.objective_constant)}\n")
        for r in range(self.num_rows):
            rhs = rub[r] if senses[r] in ("E", "L") else rlb[r]
            if senses[r] != "N" and rhs != 0:
                buf.write(f"    RHS {rn[r]} {_num(rhs)}\n")
        ranged = [r for r in range(self.num_rows) if senses[r] in ("L", "G") and np.isfinite(rlb[r]) and np.isfinite(rub[r])]
        if ranged:
            buf.write("RANGES\n")
            for r in ranged:
                buf.write(f"    RNG {rn[r]} {_num(rub[r] - rlb[r])}\n")
        buf.write("BOUNDS\n")
        for k in range(self.num_vars):
            if lb[k] != 0:
                buf.write(f" {'MI' if not np.isfinite(lb[k]) else 'LO'} BND {vn[k]}"
                          f"{'' if not np.isfinite(lb[k]) else ' ' + _num(lb[k])}\n")
            if np.isfinite(ub[k]):
                buf.write(f" UP BND {vn[k]} {_num(ub[k])}\n")
            elif integ[k]:
                buf.write(f" PL BND {vn[k]}\n")
        buf.write("ENDATA\n")
        return buf.getvalue()


def _num(v: float) -> str:
    return repr(float(v)) if v != int(v) or abs(v) >= 1e15 else str(int(v))


def _write_terms(buf, cols, coef, names) -> None:
    first = True
    for k in cols:
        v = float(coef[k])
        if v == 0:
            continue
        sign = "-" if v < 0 else "+"
        if first and v > 0:
            buf.write(f" {_num(v)} {names[k]}")
        else:
            buf.write(f" {sign} {_num(abs(v))} {names[k]}")
        first = False
    if first:
        buf.write(" 0 " + (names[0] if names else "__empty"))
