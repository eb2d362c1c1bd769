"""Coordinate descent over a discretized configuration grid.

Each iteration scores every configuration in the one-parameter exchange
neighborhood of the incumbent and accepts the best one if it strictly
improves.  Changing a parent parameter expands all admissible value
combinations of the children it activates.  Scores are averaged over
problems first, then over repeats.
"""

from dataclasses import dataclass, field
import itertools
import json

import numpy as np

from .._validation import check_generator
from ..exceptions import ConfigError


@dataclass(frozen=True)
class GridParam:
    name: str
    values: tuple
    depends: tuple = None  # (parent, required value)


class ConfigGrid:
    """Discrete configuration space with parent/child activity."""

    def __init__(self, params):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate grid parameter")
        index = {n: i for i, n in enumerate(names)}
        for i, p in enumerate(self.params):
            if not p.values:
                raise ConfigError(f"grid parameter {p.name!r} has no values")
            if p.depends is not None:
                parent, value = p.depends
                if parent not in index or index[parent] >= i:
                    raise ConfigError(f"{p.name!r} must follow its parent {parent!r}")
                if value not in self.params[index[parent]].values:
                    raise ConfigError(f"{p.name!r}: {value!r} is not a value of {parent!r}")
        self._index = index

    @classmethod
    def from_dict(cls, data):
        """``{name: [values]}`` or ``{name: {"values": [...], "depends": {"on": p, "equals": v}}}``."""
        params = []
        for name, spec in data.items():
            if isinstance(spec, dict):
                dep = spec.get("depends")
                params.append(GridParam(name, tuple(spec["values"]),
                                        (dep["on"], dep["equals"]) if dep else None))
            else:
                params.append(GridParam(name, tuple(spec)))
        return cls(params)

    @property
    def names(self):
        return [p.name for p in self.params]

    def is_active(self, param, config):
        if param.depends is None:
            return True
        parent, value = param.depends
        return config.get(parent) == value

    def validate(self, config):
        for p in self.params:
            active = self.is_active(p, config)
            v = config.get(p.name)
            if active and v not in p.values:
                raise ConfigError(f"{p.name}={v!r} is not a grid value")
            if not active and v is not None:
                raise ConfigError(f"{p.name} must be unset while its parent disagrees")

    def completions(self, config):
        """All admissible configs agreeing with ``config`` on already-valid slots.

        Parameters that are active but unset are expanded over all values;
        inactive ones are cleared.  Parameters are resolved in declaration
        order, so parents settle before their children.
        """
        partials = [dict(config)]
        for p in self.params:
            nxt = []
            for c in partials:
                if not self.is_active(p, c):
                    nxt.append({**c, p.name: None})
                elif c.get(p.name) in p.values:
                    nxt.append(c)
                else:
                    nxt.extend({**c, p.name: v} for v in p.values)
            partials = nxt
        return partials

    def neighborhood(self, incumbent):
        """One-parameter exchanges with child expansion, deduplicated, in grid order."""
        seen, out = {key(incumbent)}, []
        for p in self.params:
            if not self.is_active(p, incumbent):
                continue
            for v in p.values:
                if v == incumbent[p.name]:
                    continue
                cand = dict(incumbent)
                cand[p.name] = v
                # descendants re-resolve: keep still-valid values, expand newly active ones
                for child in self._descendants(p.name):
                    cand[child] = None
                for c in self.completions(cand):
                    k = key(c)
                    if k not in seen:
                        seen.add(k)
                        out.append(c)
        return out

    def _descendants(self, name):
        out = []
        frontier = [name]
        while frontier:
            parent = frontier.pop()
            for p in self.params:
                if p.depends is not None and p.depends[0] == parent:
                    out.append(p.name)
                    frontier.append(p.name)
        return out

    def enumerate(self):
        """Every admissible configuration."""
        return self.completions({})


def key(config):
    return json.dumps(config, sort_keys=True)


@dataclass
class CdState:
    incumbent: dict
    score: float
    log: list = field(default_factory=list)
    archive: dict = field(default_factory=dict)


def run_cd(problems, grid, start_config, n_repeats, rng=None, evaluator=None, max_iter=100):
    """Coordinate descent from ``start_config``.

    Parameters
    ----------
    problems : list
    grid : ConfigGrid
    start_config : dict
    n_repeats : int
        Seeds shared by all configurations (common random numbers).
    evaluator : callable
        ``evaluator(config, problem, seed) -> score``; larger is better.
    """
    if evaluator is None:
        raise ValueError("an evaluator is required")
    grid.validate(start_config)
    rng = check_generator(rng)
    seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=n_repeats)]
    state = CdState(dict(start_config), -np.inf)

    def score(config):
        k = key(config)
        if k not in state.archive:
            per_seed = [np.mean([evaluator(config, p, s) for p in problems]) for s in seeds]
            state.archive[k] = float(np.mean(per_seed))
        return state.archive[k]

    state.score = score(state.incumbent)
    state.log.append({"iteration": 0, "incumbent": dict(state.incumbent), "score": state.score,
                      "n_evaluated": 1, "accepted": True})
    for it in range(1, max_iter + 1):
        cands = grid.neighborhood(state.incumbent)
        scores = [score(c) for c in cands]
        best = int(np.argmax(scores)) if scores else None
        accepted = best is not None and scores[best] > state.score
        if accepted:
            state.incumbent, state.score = cands[best], scores[best]
        state.log.append({"iteration": it, "incumbent": dict(state.incumbent), "score": state.score,
                          "n_evaluated": len(cands), "accepted": bool(accepted)})
        if not accepted:
            break
    return state


def separable_evaluator(scores):
    """Analytic evaluator: sum of per-value scores of the active parameters.

    ``scores`` maps parameter name to ``{str(value): score}``.
    """

    def evaluate(config, problem, seed):
        return float(sum(scores[name][str(v)] for name, v in config.items() if v is not None))

    return evaluate
