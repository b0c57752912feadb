"""Nuclear-norm matrix completion under sampling with replacement."""

from ._mclab import *  # noqa: F401,F403
from ._mclab import Estimator, EstimatorSpec, SolverConfig, TuningMode, fit, resolve_tuning


def solve(obs, P, noise, estimator="ls", lam="auto", a=1.0, tau=None, config=None):
    """Tune and fit in one call. `lam` is "auto", "pilot" or a number."""
    spec = EstimatorSpec()
    spec.estimator = {"ls": Estimator.LeastSquares, "huber": Estimator.Huber,
                      "sqrt": Estimator.SquareRoot}[estimator]
    spec.a = a
    spec.tau = tau
    if lam == "auto":
        spec.mode = TuningMode.TheoremRule
    elif lam == "pilot":
        spec.mode = TuningMode.Pilot
    else:
        spec.mode = TuningMode.Explicit
        spec.lam = float(lam)
    spec = resolve_tuning(spec, P, noise, obs.n)
    return fit(obs, spec, config if config is not None else SolverConfig())
