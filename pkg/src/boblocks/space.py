"""Typed, bounded, dependency-aware parameter spaces and initial designs.

Points are plain ``dict`` objects mapping parameter names to values.  Factor
parameters hold their level string, logicals hold ``bool`` and inactive
parameters hold ``None``.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np
from scipy.stats import qmc

from ._validation import check_generator

logger = logging.getLogger(__name__)

KINDS = ("double", "integer", "factor", "logical")
SOBOL_MAX_DIM = 64


class SpaceError(ValueError):
    """Raised for malformed spaces or points."""


@dataclass(frozen=True)
class ParamDef:
    """A single parameter.

    ``depends_on`` is a ``(parent_name, required_value)`` pair; the
    parameter is active only when the parent is active and equals the
    required value.
    """

    name: str
    kind: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    levels: tuple = ()
    log_scale: bool = False
    depends_on: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if self.is_numeric:
            if self.lower is None or self.upper is None:
                raise SpaceError(f"{self.name}: numeric parameter needs bounds")
            if not self.lower < self.upper:
                raise SpaceError(f"{self.name}: lower must be < upper")
            if self.log_scale and self.lower <= 0:
                raise SpaceError(f"{self.name}: log scale requires lower > 0")
        else:
            if self.log_scale:
                raise SpaceError(f"{self.name}: log scale only for numerics")
        if self.kind == "factor":
            levels = tuple(self.levels)
            if not levels or len(set(levels)) != len(levels):
                raise SpaceError(f"{self.name}: levels must be non-empty and distinct")
            object.__setattr__(self, "levels", levels)
        if self.depends_on is not None:
            object.__setattr__(self, "depends_on", tuple(self.depends_on))

    @property
    def is_numeric(self):
        return self.kind in ("double", "integer")

    @property
    def n_levels(self):
        if self.kind == "factor":
            return len(self.levels)
        if self.kind == "logical":
            return 2
        return 0

    def level_values(self):
        if self.kind == "factor":
            return list(self.levels)
        if self.kind == "logical":
            return [False, True]
        raise SpaceError(f"{self.name} has no levels")

    # internal coordinates: log value for log-scaled numerics
    def to_internal(self, value):
        return math.log(value) if self.log_scale else float(value)

    def from_internal(self, z):
        return math.exp(z) if self.log_scale else z

    @property
    def internal_bounds(self):
        if self.log_scale:
            return math.log(self.lower), math.log(self.upper)
        return float(self.lower), float(self.upper)

    def finalize(self, value):
        """Clip a numeric value into bounds and round integers."""
        value = float(min(max(value, self.lower), self.upper))
        if self.kind == "integer":
            value = int(np.round(value))
            value = int(min(max(value, math.ceil(self.lower)), math.floor(self.upper)))
        return value

    def contains(self, value):
        if self.kind == "double":
            return (isinstance(value, (int, float, np.floating, np.integer))
                    and not isinstance(value, bool)
                    and math.isfinite(value) and self.lower <= value <= self.upper)
        if self.kind == "integer":
            return (isinstance(value, (int, np.integer, float, np.floating))
                    and not isinstance(value, bool)
                    and float(value).is_integer() and self.lower <= value <= self.upper)
        if self.kind == "factor":
            return isinstance(value, str) and value in self.levels
        return isinstance(value, (bool, np.bool_))

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind}
        if self.is_numeric:
            d.update(lower=self.lower, upper=self.upper, log=self.log_scale)
        if self.kind == "factor":
            d["levels"] = list(self.levels)
        if self.depends_on is not None:
            d["depends"] = {"on": self.depends_on[0], "equals": self.depends_on[1]}
        return d

    @classmethod
    def from_dict(cls, d):
        dep = d.get("depends")
        return cls(
            name=d["name"],
            kind=d["kind"],
            lower=d.get("lower"),
            upper=d.get("upper"),
            levels=tuple(d.get("levels", ())),
            log_scale=bool(d.get("log", False)),
            depends_on=(dep["on"], dep["equals"]) if dep else None,
        )


def p_dbl(name, lower, upper, log=False, depends=None):
    return ParamDef(name, "double", lower, upper, log_scale=log, depends_on=depends)


def p_int(name, lower, upper, log=False, depends=None):
    return ParamDef(name, "integer", lower, upper, log_scale=log, depends_on=depends)


def p_fct(name, levels, depends=None):
    return ParamDef(name, "factor", levels=tuple(levels), depends_on=depends)


def p_lgl(name, depends=None):
    return ParamDef(name, "logical", depends_on=depends)


@dataclass(frozen=True)
class ParamSpace:
    """Ordered collection of parameters with a topological order."""

    params: tuple
    topo_order: tuple = field(init=False)

    def __init__(self, params):
        params = tuple(params)
        object.__setattr__(self, "params", params)
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise SpaceError("duplicate parameter names")
        index = {n: i for i, n in enumerate(names)}
        for i, p in enumerate(params):
            if p.depends_on is None:
                continue
            parent, value = p.depends_on
            if parent not in index:
                raise SpaceError(f"{p.name} depends on unknown parameter {parent!r}")
            if index[parent] >= i:
                raise SpaceError(f"{p.name} must be declared after its parent {parent!r}")
            pdef = params[index[parent]]
            if pdef.is_numeric:
                raise SpaceError(f"{p.name}: dependencies on numeric parents are not supported")
            if not pdef.contains(value):
                raise SpaceError(f"{p.name}: required value {value!r} not a level of {parent!r}")
        # parents always precede children, so declaration order is a valid sort
        object.__setattr__(self, "topo_order", tuple(range(len(params))))
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.params)

    def __getitem__(self, name):
        return self.params[self._index[name]]

    def dim(self):
        return len(self.params)

    @property
    def names(self):
        return [p.name for p in self.params]

    @property
    def has_deps(self):
        return any(p.depends_on is not None for p in self.params)

    @property
    def is_numeric(self):
        return all(p.is_numeric for p in self.params) and not self.has_deps

    def children(self, name):
        return [p.name for p in self.params if p.depends_on and p.depends_on[0] == name]

    def is_active(self, param, point):
        """Activity of ``param`` given already-resolved parent values in ``point``."""
        if param.depends_on is None:
            return True
        parent, value = param.depends_on
        pv = point.get(parent)
        return pv is not None and pv == value

    # ----------------------------------------------------------------- validation
    def validate(self, point):
        """Return ``(ok, violations)`` for a point; never raises."""
        violations = []
        if not isinstance(point, dict):
            return False, ["point is not a mapping"]
        extra = set(point) - set(self.names)
        for name in sorted(extra):
            violations.append(f"{name}: unknown parameter")
        for p in self.params:
            if p.name not in point:
                violations.append(f"{p.name}: missing slot")
                continue
            value = point[p.name]
            active = self.is_active(p, point)
            if active and value is None:
                violations.append(f"{p.name}: must be active")
            elif not active and value is not None:
                violations.append(f"{p.name}: must be missing (dependency unsatisfied)")
            elif active and not p.contains(value):
                violations.append(f"{p.name}: value {value!r} out of domain")
        return not violations, violations

    def check(self, point):
        ok, violations = self.validate(point)
        if not ok:
            raise SpaceError("invalid point: " + "; ".join(violations))

    # ------------------------------------------------------------------ sampling
    def sample_value(self, param, rng):
        if param.is_numeric:
            lo, hi = param.internal_bounds
            if param.kind == "integer" and not param.log_scale:
                lo, hi = lo - 0.5, hi + 0.5
            return param.finalize(param.from_internal(rng.uniform(lo, hi)))
        if param.kind == "factor":
            return param.levels[int(rng.integers(len(param.levels)))]
        return bool(rng.integers(2))

    def repair(self, point, rng):
        """Resolve activity in topological order.

        Unsatisfied parameters become ``None``; newly active parameters get a
        random valid value.
        """
        out = dict(point)
        for i in self.topo_order:
            p = self.params[i]
            if p.depends_on is None:
                continue
            if self.is_active(p, out):
                if out.get(p.name) is None:
                    out[p.name] = self.sample_value(p, rng)
            else:
                out[p.name] = None
        return out

    def sample_random(self, n, rng=None):
        """``n`` i.i.d. uniform points (log-uniform for log-scaled numerics)."""
        if n < 1:
            raise SpaceError("n must be >= 1")
        rng = check_generator(rng)
        points = []
        for _ in range(n):
            point = {}
            for i in self.topo_order:
                p = self.params[i]
                point[p.name] = self.sample_value(p, rng) if self.is_active(p, point) else None
            points.append(point)
        return points

    def _from_unit_columns(self, u):
        return [self.from_unit(row) for row in u]

    def sample_lhs(self, n, rng=None):
        """Stratified Latin hypercube design, one point per bin per numeric dimension."""
        if n < 1:
            raise SpaceError("n must be >= 1")
        rng = check_generator(rng)
        if self.has_deps:
            logger.warning("LHS undefined on hierarchical spaces; falling back to random sampling")
            return self.sample_random(n, rng)
        d = self.dim()
        u = np.empty((n, d))
        for j, p in enumerate(self.params):
            if p.is_numeric:
                u[:, j] = (rng.permutation(n) + rng.uniform(size=n)) / n
            else:
                k = p.n_levels
                idx = rng.permutation(np.arange(n) % k)
                u[:, j] = (idx + 0.5) / k
        return self._finalize_unit_design(u)

    def _finalize_unit_design(self, u):
        points = []
        for row in u:
            point = {}
            for j, p in enumerate(self.params):
                if p.is_numeric:
                    lo, hi = p.internal_bounds
                    if p.kind == "integer" and not p.log_scale:
                        lo, hi = lo - 0.5, hi + 0.5
                    point[p.name] = p.finalize(p.from_internal(lo + row[j] * (hi - lo)))
                else:
                    point[p.name] = p.level_values()[min(int(row[j] * p.n_levels), p.n_levels - 1)]
            points.append(point)
        return points

    def sample_sobol(self, n, seed=None, scramble=True):
        """First ``n`` points of a (scrambled) Sobol sequence mapped through the bounds."""
        if n < 1:
            raise SpaceError("n must be >= 1")
        if self.dim() > SOBOL_MAX_DIM:
            raise SpaceError(f"Sobol designs support at most {SOBOL_MAX_DIM} dimensions")
        if self.has_deps:
            logger.warning("Sobol undefined on hierarchical spaces; falling back to random sampling")
            return self.sample_random(n, check_generator(seed))
        engine = qmc.Sobol(d=self.dim(), scramble=scramble, seed=seed)
        u = sobol_points(engine, n)
        return self._finalize_unit_design(u)

    def sample_grid(self, resolution):
        """Cartesian grid; numerics equally spaced including the endpoints."""
        if resolution < 2:
            raise SpaceError("grid resolution must be >= 2")
        if self.has_deps:
            raise SpaceError("grid designs are not defined on hierarchical spaces")
        axes = []
        for p in self.params:
            if p.is_numeric:
                lo, hi = p.internal_bounds
                vals = [p.finalize(p.from_internal(z)) for z in np.linspace(lo, hi, resolution)]
                if p.kind == "integer":
                    vals = sorted(set(vals))
                axes.append(vals)
            else:
                axes.append(p.level_values())
        return [dict(zip(self.names, combo)) for combo in product(*axes)]

    def generate_design(self, kind, n, rng=None):
        rng = check_generator(rng)
        if kind == "random":
            return self.sample_random(n, rng)
        if kind == "lhs":
            return self.sample_lhs(n, rng)
        if kind == "sobol":
            return self.sample_sobol(n, seed=int(rng.integers(2**63)))
        raise SpaceError(f"unknown design kind {kind!r}")

    # --------------------------------------------------------------- unit cube
    def to_unit(self, point):
        """Map a valid point to ``[0, 1]^d``; inactive slots get 0.5.

        Factors and logicals map to the centre of their level bin.
        """
        self.check(point)
        return self._to_unit_unchecked(point)

    def _to_unit_unchecked(self, point):
        v = np.empty(self.dim())
        for j, p in enumerate(self.params):
            value = point[p.name]
            if value is None:
                v[j] = 0.5
            elif p.is_numeric:
                lo, hi = p.internal_bounds
                v[j] = (p.to_internal(value) - lo) / (hi - lo)
            else:
                v[j] = (p.level_values().index(value) + 0.5) / p.n_levels
        return v

    def active_mask(self, point):
        return np.array([point[p.name] is not None for p in self.params])

    def from_unit(self, v):
        """Inverse of :meth:`to_unit`; activity is resolved in topological order."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim(),):
            raise SpaceError("unit vector has wrong length")
        point = {}
        for i in self.topo_order:
            p = self.params[i]
            if not self.is_active(p, point):
                point[p.name] = None
                continue
            u = min(max(float(v[i]), 0.0), 1.0)
            if p.is_numeric:
                lo, hi = p.internal_bounds
                value = p.from_internal(lo + u * (hi - lo))
                point[p.name] = p.finalize(value)
            else:
                point[p.name] = p.level_values()[min(int(u * p.n_levels), p.n_levels - 1)]
        return point

    # -------------------------------------------------------- feature encoding
    def encode(self, points, missing="nan"):
        """Numeric feature matrix in internal coordinates.

        Factors become level indices and logicals 0/1.  With
        ``missing="nan"`` inactive slots are NaN; with ``missing="impute"``
        they take the mid-range value and an activity indicator column is
        appended for every dependent parameter.
        """
        n, d = len(points), self.dim()
        X = np.empty((n, d))
        for j, p in enumerate(self.params):
            name = p.name
            if p.is_numeric:
                if p.log_scale:
                    col = [math.log(pt[name]) if pt[name] is not None else np.nan for pt in points]
                else:
                    col = [pt[name] if pt[name] is not None else np.nan for pt in points]
            elif p.kind == "factor":
                lookup = {lv: k for k, lv in enumerate(p.levels)}
                col = [lookup[pt[name]] if pt[name] is not None else np.nan for pt in points]
            else:
                col = [float(pt[name]) if pt[name] is not None else np.nan for pt in points]
            X[:, j] = col
        if missing == "nan":
            return X
        if missing != "impute":
            raise ValueError(f"unknown missing mode {missing!r}")
        dep_cols = [j for j, p in enumerate(self.params) if p.depends_on is not None]
        if not dep_cols:
            return X
        indicators = np.empty((n, len(dep_cols)))
        for k, j in enumerate(dep_cols):
            p = self.params[j]
            miss = np.isnan(X[:, j])
            indicators[:, k] = ~miss
            if p.is_numeric:
                lo, hi = p.internal_bounds
                X[miss, j] = 0.5 * (lo + hi)
            else:
                X[miss, j] = 0.5 * (p.n_levels - 1)
        return np.hstack([X, indicators])

    def encode_unit(self, points):
        """Unit-cube features plus activity indicators for dependent parameters."""
        U = np.array([self._to_unit_unchecked(pt) for pt in points]).reshape(len(points), self.dim())
        dep_cols = [j for j, p in enumerate(self.params) if p.depends_on is not None]
        if not dep_cols:
            return U
        mask = np.array([[pt[self.params[j].name] is not None for j in dep_cols] for pt in points], dtype=float)
        return np.hstack([U, mask.reshape(len(points), len(dep_cols))])

    # ------------------------------------------------------------- serialization
    def to_json(self):
        return json.dumps({"params": [p.to_dict() for p in self.params]})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text) if isinstance(text, str) else text
        return cls(ParamDef.from_dict(d) for d in data["params"])


def sobol_points(engine, n):
    """Draw ``n`` points; scipy warns for non powers of two, which is harmless here."""
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def point_to_json(point):
    return json.dumps({k: _json_value(v) for k, v in point.items()})


def point_from_json(text):
    return json.loads(text)


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v
