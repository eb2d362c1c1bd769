"""Declarative loop configuration and the per-space default configurations.

Configurations round-trip through plain dicts.  Nested sections
(``{"surrogate": {"kernel": ...}}``) and dotted keys
(``{"surrogate.kernel": ...}``) are both accepted; unknown keys raise
:class:`ConfigError` naming the offending key.
"""

from dataclasses import asdict, dataclass, field, fields, replace

from .acqopt import AcqOptConfig
from .acquisition import make_acquisition
from .exceptions import ConfigError
from .surrogate import SurrogateLearner, make_model
from .surrogate.forest import VARIANCE_ESTIMATORS
from .surrogate.gp import KERNELS

LOOPS = ("ego", "mpcl", "parego", "smsego")
INIT_KINDS = ("random", "lhs", "sobol")
LIARS = ("min", "max", "mean_prediction")


@dataclass
class SurrogateConfig:
    model: str = "gp"
    kernel: str = "matern32"
    nugget: object = 1e-8
    scale_inputs: bool = False
    n_trees: int = 500
    variance_estimator: str = "ltv"
    extratrees: bool = False
    catch_errors: bool = True

    def __post_init__(self):
        if self.model not in ("gp", "rf"):
            raise ConfigError(f"surrogate.model must be 'gp' or 'rf', got {self.model!r}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"surrogate.kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.variance_estimator not in VARIANCE_ESTIMATORS:
            raise ConfigError(f"surrogate.variance_estimator must be one of {VARIANCE_ESTIMATORS}")
        if isinstance(self.nugget, str) and self.nugget != "free":
            raise ConfigError("surrogate.nugget must be a number or 'free'")
        if self.n_trees < 2:
            raise ConfigError("surrogate.n_trees must be >= 2")

    def build_model(self):
        if self.model == "gp":
            return make_model("gp", kernel=self.kernel, nugget=self.nugget, scale_inputs=self.scale_inputs)
        return make_model("rf", n_trees=self.n_trees, variance_estimator=self.variance_estimator,
                          extratrees=self.extratrees)


@dataclass
class AcqConfig:
    kind: str = "cb"
    lam: float = 1.0
    lambda_decay: bool = False
    epsilon: float = None
    epsilon_decay: bool = False
    min_lambda: float = 1.0
    max_lambda: float = 10.0
    epsilon_max: float = 0.1
    adaptive_epsilon: bool = False  # smsego only

    def build(self):
        kw = {
            "cb": {"lam": self.lam, "lambda_decay": self.lambda_decay},
            "ei": {"epsilon": self.epsilon, "epsilon_decay": self.epsilon_decay},
            "pi": {"epsilon": self.epsilon, "epsilon_decay": self.epsilon_decay},
            "stochastic_cb": {"min_lambda": self.min_lambda, "max_lambda": self.max_lambda},
            "stochastic_ei": {"epsilon_max": self.epsilon_max},
            "smsego": {"lam": self.lam, "adaptive_epsilon": self.adaptive_epsilon},
        }.get(self.kind, {})
        return make_acquisition(self.kind, **kw)


@dataclass
class LoopConfig:
    """One complete optimizer configuration.

    ``init_design`` holds user-supplied initial points; the random part of
    the design tops the archive up to the initial design size.
    """

    loop: str = "ego"
    init_kind: str = "random"
    init_fraction: float = 0.05
    init_min: int = 4
    init_design: list = None
    random_interleave_iter: int = 0
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    acq: AcqConfig = field(default_factory=lambda: AcqConfig(kind="cb", lam=3.0))
    acqopt: AcqOptConfig = field(default_factory=lambda: AcqOptConfig(kind="cmaes"))
    input_trafo: str = "none"
    output_trafo: str = "log"
    q: int = 2
    liar: str = "min"
    result_mode: str = "archive_best"
    catch_errors: bool = True

    def __post_init__(self):
        if self.loop not in LOOPS:
            raise ConfigError(f"loop must be one of {LOOPS}, got {self.loop!r}")
        if self.init_kind not in INIT_KINDS:
            raise ConfigError(f"init.kind must be one of {INIT_KINDS}, got {self.init_kind!r}")
        if not 0 < self.init_fraction <= 1:
            raise ConfigError("init.fraction must lie in (0, 1]")
        if self.init_min < 2:
            raise ConfigError("initial design needs at least 2 points")
        if self.random_interleave_iter < 0:
            raise ConfigError("random_interleave must be >= 0")
        if self.loop == "mpcl" and self.q < 1:
            raise ConfigError("q must be >= 1")
        if self.liar not in LIARS:
            raise ConfigError(f"liar must be one of {LIARS}")
        if self.acq.kind == "ei_log" and self.output_trafo != "log":
            raise ConfigError("acquisition ei_log requires output_trafo 'log'")
        if self.output_trafo not in ("none", "standardize", "log"):
            raise ConfigError(f"unknown output_trafo {self.output_trafo!r}")
        if self.input_trafo not in ("none", "unitcube"):
            raise ConfigError(f"unknown input_trafo {self.input_trafo!r}")

    def make_learner(self, space, rng):
        return SurrogateLearner(self.surrogate.build_model(), space, input_trafo=self.input_trafo,
                                output_trafo=self.output_trafo,
                                catch_errors=self.catch_errors and self.surrogate.catch_errors,
                                random_state=rng)

    # ---------------------------------------------------------------- dicts
    def to_dict(self):
        d = asdict(self)
        d["acq"]["lambda"] = d["acq"].pop("lam")
        return d

    @classmethod
    def from_dict(cls, data, base=None):
        """Build from a (possibly partial) dict on top of ``base``.

        ``base`` defaults to the numeric default configuration.
        """
        base = base or LoopConfig()
        flat = _flatten(data)
        top, sections = {}, {"surrogate": {}, "acq": {}, "acqopt": {}, "init": {}}
        for key, value in flat.items():
            head, _, rest = key.partition(".")
            if head in sections and rest:
                sections[head][rest] = value
            elif head in _TOP_ALIASES:
                top[_TOP_ALIASES[head]] = value
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        init = sections.pop("init")
        for k, v in init.items():
            if k not in ("kind", "fraction", "min", "design"):
                raise ConfigError(f"unknown configuration key 'init.{k}'")
            top["init_" + k] = v
        acq = sections["acq"]
        if "lambda" in acq:
            acq["lam"] = acq.pop("lambda")
        try:
            sur = replace(base.surrogate, **_checked(SurrogateConfig, sections["surrogate"], "surrogate"))
            acq_cfg = replace(base.acq, **_checked(AcqConfig, acq, "acq"))
            opt = replace(base.acqopt, **_checked(AcqOptConfig, sections["acqopt"], "acqopt"))
            return replace(base, surrogate=sur, acq=acq_cfg, acqopt=opt, **top)
        except TypeError as err:
            raise ConfigError(str(err)) from None


_TOP_ALIASES = {
    "loop": "loop",
    "random_interleave": "random_interleave_iter",
    "random_interleave_iter": "random_interleave_iter",
    "input_trafo": "input_trafo",
    "output_trafo": "output_trafo",
    "q": "q",
    "liar": "liar",
    "result_mode": "result_mode",
    "catch_errors": "catch_errors",
}


def _flatten(data, prefix=""):
    out = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    for key, value in data.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict) and full in ("surrogate", "acq", "acqopt", "init"):
            out.update(_flatten(value, full + "."))
        else:
            out[full] = value
    return out


def _checked(cls, values, section):
    names = {f.name for f in fields(cls)}
    for k in values:
        if k not in names:
            label = "lambda" if k == "lam" else k
            raise ConfigError(f"unknown configuration key '{section}.{label}'")
    return values


def numeric_default():
    """GP (Matern 3/2, nugget 1e-8), log output, LCB with lambda 3, CMA-ES, 5% random init."""
    return LoopConfig(
        surrogate=SurrogateConfig(model="gp", kernel="matern32", nugget=1e-8, scale_inputs=False),
        acq=AcqConfig(kind="cb", lam=3.0),
        acqopt=AcqOptConfig(kind="cmaes"),
        output_trafo="log",
        init_kind="random",
        init_fraction=0.05,
    )


def mixed_default():
    """Forest (500 trees, LTV), log output, LCB with lambda 1, local search, 5% random init."""
    return LoopConfig(
        surrogate=SurrogateConfig(model="rf", n_trees=500, variance_estimator="ltv"),
        acq=AcqConfig(kind="cb", lam=1.0),
        acqopt=AcqOptConfig(kind="local_search"),
        output_trafo="log",
        init_kind="random",
        init_fraction=0.05,
    )


def default_config(space):
    """Numeric default iff every parameter is numeric and nothing depends on anything."""
    return numeric_default() if space.is_numeric else mixed_default()
