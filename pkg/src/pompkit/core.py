"""Model abstraction, parameter vectors, observation data, and simulation.

A model is supplied plug-and-play style: a simulator for the latent dynamics
(``rprocess``), a pointwise measurement log-density (``dmeasure``), and a
state initializer (``rinit``). Transition densities are never evaluated.

All hooks are vectorized over a particle ensemble:

* ``rinit(theta, rng) -> x``         with ``theta (J, p)``, ``x (J, dim_state)``
* ``rprocess(x, theta, t_interval, rng) -> x_next``  (same shapes)
* ``dmeasure(y, x, theta) -> logdens``  with ``y (dim_obs,)``, ``logdens (J,)``
* ``rmeasure(x, theta, rng) -> y``   with ``y (J, dim_obs)`` (optional)
* ``dprior(theta) -> float``         with ``theta (p,)`` (optional)

``rprocess`` receives the observation interval ``(t_prev, t_next)`` so
continuous-time models can substep internally; discrete-time models ignore it.
Hooks must be pure given their inputs and the supplied generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ModelContractError, PompkitError
from .rng import RngStream

__all__ = ["ModelSpec", "ParamVector", "TimeSeriesData", "simulate"]

_TRANSFORMS = {
    "log": (np.log, np.exp),
    "logit": (
        lambda x: np.log(x) - np.log1p(-x),
        lambda z: 1.0 / (1.0 + np.exp(-z)),
    ),
}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A partially observed Markov process, defined by simulator hooks."""

    dim_state: int
    dim_obs: int
    param_names: tuple[str, ...]
    t0: float
    times: np.ndarray
    rprocess: Callable
    dmeasure: Callable
    rinit: Callable
    rmeasure: Callable | None = None
    dprior: Callable | None = None
    ivp_names: frozenset[str] = frozenset()
    transforms: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "param_names", tuple(self.param_names))
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "ivp_names", frozenset(self.ivp_names))
        if self.dim_state < 1 or self.dim_obs < 1:
            raise ValueError("dim_state and dim_obs must be positive")
        if len(set(self.param_names)) != len(self.param_names):
            raise ValueError("param_names contains duplicates")
        unknown = self.ivp_names - set(self.param_names)
        if unknown:
            raise ValueError(f"ivp_names not in param_names: {sorted(unknown)}")
        bad = set(self.transforms) - set(self.param_names)
        if bad:
            raise ValueError(f"transforms for unknown parameters: {sorted(bad)}")
        for t in self.transforms.values():
            if t not in _TRANSFORMS:
                raise ValueError(f"unknown transform {t!r}")
        t = self.times
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("times must be a nonempty 1-d array")
        if not np.all(np.diff(np.concatenate(([self.t0], t))) > 0):
            raise ValueError("need t0 < t_1 < ... < t_N strictly increasing")

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def ivp_mask(self) -> np.ndarray:
        """Boolean mask over param_names marking initial-value parameters."""
        return np.array([name in self.ivp_names for name in self.param_names])

    def index_of(self, name: str) -> int:
        return self.param_names.index(name)

    def to_estimation_scale(self, values: np.ndarray) -> np.ndarray:
        """Map natural-scale parameter values to the perturbation scale."""
        out = np.array(values, dtype=float, copy=True)
        for name, t in self.transforms.items():
            i = self.index_of(name)
            out[..., i] = _TRANSFORMS[t][0](out[..., i])
        return out

    def from_estimation_scale(self, values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float, copy=True)
        for name, t in self.transforms.items():
            i = self.index_of(name)
            out[..., i] = _TRANSFORMS[t][1](out[..., i])
        return out


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Parameter values aligned to a model's ``param_names``."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(self.names),):
            raise ValueError("values must be a vector aligned to names")
        if not np.all(np.isfinite(vals)):
            raise ValueError("parameter values must be finite")

    @classmethod
    def from_dict(cls, d: dict, names: Sequence[str] | None = None) -> "ParamVector":
        names = tuple(names) if names is not None else tuple(d)
        missing = [n for n in names if n not in d]
        if missing:
            raise ValueError(f"missing parameters: {missing}")
        return cls(names, np.array([d[n] for n in names], dtype=float))

    def to_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def replace(self, **updates) -> "ParamVector":
        d = self.to_dict()
        unknown = set(updates) - set(d)
        if unknown:
            raise ValueError(f"unknown parameters: {sorted(unknown)}")
        d.update(updates)
        return ParamVector.from_dict(d, self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.values, other.values)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str, names: Sequence[str] | None = None) -> "ParamVector":
        return cls.from_dict(json.loads(text), names)


@dataclass(frozen=True, eq=False)
class TimeSeriesData:
    """Observation matrix with one row per observation time."""

    times: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim == 1:
            obs = obs[:, None]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "observations", obs)
        if obs.shape[0] != len(times):
            raise ValueError("row count must equal the number of times")
        if not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(obs)):
            raise ValueError("missing or non-finite observations are not supported")

    @property
    def n_obs(self) -> int:
        return self.observations.shape[0]

    @property
    def dim_obs(self) -> int:
        return self.observations.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.csv_text())

    def csv_text(self) -> str:
        cols = ",".join(f"y{i + 1}" for i in range(self.dim_obs))
        lines = [f"time,{cols}"]
        for t, row in zip(self.times, self.observations):
            cells = ",".join(f"{v:.17g}" for v in row)
            lines.append(f"{t:.17g},{cells}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path) -> "TimeSeriesData":
        raw = np.genfromtxt(path, delimiter=",", names=True, comments="#")
        names = raw.dtype.names
        if names is None or names[0] != "time":
            raise ValueError("expected CSV header time,y1,...,yd")
        times = np.atleast_1d(raw["time"])
        obs = np.column_stack([np.atleast_1d(raw[n]) for n in names[1:]])
        return cls(times, obs)

    def check_matches(self, model: ModelSpec) -> None:
        if self.dim_obs != model.dim_obs:
            raise ValueError(f"data has {self.dim_obs} observed variables, model expects {model.dim_obs}")
        if self.n_obs != model.n_times or not np.array_equal(self.times, model.times):
            raise ValueError("data times do not match model times")


def _theta_matrix(model: ModelSpec, theta: ParamVector | np.ndarray, rows: int) -> np.ndarray:
    if isinstance(theta, ParamVector):
        if theta.names != model.param_names:
            theta = ParamVector.from_dict(theta.to_dict(), model.param_names)
        values = theta.values
    else:
        values = np.asarray(theta, dtype=float)
    if values.shape != (model.n_params,):
        raise ValueError("theta must supply one value per model parameter")
    return np.tile(values, (rows, 1))


def simulate(
    model: ModelSpec, theta: ParamVector | np.ndarray, rng: RngStream
) -> tuple[TimeSeriesData, np.ndarray]:
    """Draw one trajectory and observation record from the model.

    Returns the simulated data and the latent trajectory, an
    ``(N + 1, dim_state)`` array whose first row is the time-``t0`` state.
    Requires ``rmeasure``.
    """
    if model.rmeasure is None:
        raise PompkitError("simulate requires an rmeasure hook")
    th = _theta_matrix(model, theta, 1)
    x = np.asarray(model.rinit(th, rng.substream("init").generator()), dtype=float)
    if x.shape != (1, model.dim_state):
        raise ModelContractError(f"rinit returned shape {x.shape}, expected (1, {model.dim_state})")
    states = np.empty((model.n_times + 1, model.dim_state))
    obs = np.empty((model.n_times, model.dim_obs))
    states[0] = x[0]
    t_prev = model.t0
    for n, t_next in enumerate(model.times, start=1):
        x = np.asarray(
            model.rprocess(x, th, (t_prev, t_next), rng.substream("proc", n).generator()),
            dtype=float,
        )
        y = np.asarray(model.rmeasure(x, th, rng.substream("meas", n).generator()), dtype=float)
        states[n] = x[0]
        obs[n - 1] = y[0]
        t_prev = t_next
    return TimeSeriesData(model.times.copy(), obs), states
