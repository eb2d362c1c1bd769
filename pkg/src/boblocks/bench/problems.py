"""Synthetic benchmark problems."""

from dataclasses import dataclass, field
import math

import numpy as np

from ..engine import Objective
from ..space import ParamSpace, p_dbl, p_fct, p_int, p_lgl


def budget_for(d, rule="compare"):
    """``ceil(100 + 40 sqrt(d))`` for tuning, ``ceil(20 + 40 sqrt(d))`` for comparisons."""
    if rule == "tune":
        return math.ceil(100 + 40 * math.sqrt(d))
    if rule == "compare":
        return math.ceil(20 + 40 * math.sqrt(d))
    raise ValueError(f"unknown budget rule {rule!r}")


@dataclass
class BenchProblem:
    name: str
    space: ParamSpace
    fn: object
    codomain: list = field(default_factory=lambda: [("y", "minimize")])
    optimum: float = None

    @property
    def dim(self):
        return self.space.dim()

    def budget(self, rule="compare"):
        return budget_for(self.dim, rule)

    def objective(self):
        return Objective(self.fn, self.space, self.codomain)


def sinusoidal_fn(point):
    x = point["x"]
    return 2 * x * math.sin(14 * x)


def sinusoidal():
    """``2x sin(14x)`` on ``[0, 1]``: three local minima, global one near 0.792."""
    return BenchProblem("sinusoidal", ParamSpace([p_dbl("x", 0.0, 1.0)]), sinusoidal_fn, optimum=-1.5772)


def sphere(d=3):
    names = [f"x{i + 1}" for i in range(d)]

    def fn(point):
        return float(sum(point[n] ** 2 for n in names))

    return BenchProblem(f"sphere{d}", ParamSpace([p_dbl(n, -5.0, 5.0) for n in names]), fn, optimum=0.0)


def branin_fn(point):
    x1, x2 = point["x1"], point["x2"]
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10


def branin():
    """Three global minima with value ``5 / (4 pi)``."""
    space = ParamSpace([p_dbl("x1", -5.0, 10.0), p_dbl("x2", 0.0, 15.0)])
    return BenchProblem("branin", space, branin_fn, optimum=5 / (4 * math.pi))


def hierarchical_space():
    """A branch factor selects one of two conditional sub-problems."""
    return ParamSpace([
        p_fct("branch", ["a", "b"]),
        p_dbl("a_x", -5.0, 5.0, depends=("branch", "a")),
        p_int("a_k", 0, 10, depends=("branch", "a")),
        p_dbl("b_x", 1e-3, 10.0, log=True, depends=("branch", "b")),
        p_lgl("b_flag", depends=("branch", "b")),
    ])


def hierarchical_fn(point):
    # only the active branch is read, so inactive slots never matter;
    # both branches reach 0 and share the same value range
    if point["branch"] == "a":
        return ((point["a_x"] - 1.0) / 5.0) ** 2 + ((point["a_k"] - 3) / 5.0) ** 2
    y = ((math.log10(point["b_x"]) + 1.0) / 2.0) ** 2
    return y if point["b_flag"] else y + 0.3


def hierarchical():
    """Branch ``a``: minimum 0 at ``a_x = 1, a_k = 3``; branch ``b``: minimum 0 at ``b_x = 0.1`` with the flag set."""
    return BenchProblem("hierarchical", hierarchical_space(), hierarchical_fn, optimum=0.0)


def biobjective_fn(point):
    x = point["x"]
    return [x * x, (x - 1.0) ** 2]


def biobjective():
    """``(x^2, (x - 1)^2)`` on ``[0, 1]``; every point is Pareto optimal."""
    return BenchProblem("biobjective", ParamSpace([p_dbl("x", 0.0, 1.0)]), biobjective_fn,
                        codomain=[("y1", "minimize"), ("y2", "minimize")])


_REGISTRY = {
    "sinusoidal": sinusoidal,
    "sphere3": lambda: sphere(3),
    "branin": branin,
    "hierarchical": hierarchical,
    "biobjective": biobjective,
}


def get_problem(name):
    """Problem by name; ``sphere<d>`` builds a sphere of any dimension."""
    if name in _REGISTRY:
        return _REGISTRY[name]()
    if name.startswith("sphere") and name[6:].isdigit():
        return sphere(int(name[6:]))
    raise KeyError(f"unknown problem {name!r}; choose from {sorted(_REGISTRY)} or sphere<d>")


def builtin_problems():
    return [factory() for factory in _REGISTRY.values()]
