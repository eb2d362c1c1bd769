"""Exception hierarchy used across the toolkit."""


class MboError(Exception):
    """Base class for recoverable optimization errors."""


class ConfigError(MboError, ValueError):
    """Invalid or inconsistent configuration."""


class Terminated(MboError):
    """The instance's terminator is already met."""


class EvalFailed(MboError):
    """A single objective evaluation failed."""


class FitFailed(MboError):
    """A surrogate model could not be fitted."""


class SurrogateError(MboError):
    """Surrogate training or prediction failed, fallback included."""


class AcqOptError(MboError):
    """Acquisition optimization failed; the loop proposes a random point instead."""


class WorkerCrash(BaseException):
    """Simulated hard failure of an asynchronous worker.

    Derives from ``BaseException`` so objective wrappers that record
    ordinary exceptions as failed evaluations let it through.
    """
