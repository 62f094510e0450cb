"""Experiment configuration: TOML parsing and validation before any computation."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .algorithms import Scheme, make_scheme, wrap_alternating, wrap_averaged
from .analysis import TargetSet
from .core import NoiseModel, StepSchedule
from .problems import Problem, get_problem


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


SCHEME_NAMES = ("sgda", "ppm", "seg", "peg", "og", "optimistic", "spsa",
                "hd", "sga", "cono", "adam", "extraadam")


@dataclass
class ExperimentConfig:
    problem: Problem
    scheme_name: str
    scheme_hyper: dict
    wrapper: Optional[dict]
    schedule: StepSchedule
    noise: NoiseModel
    z0: Optional[np.ndarray]
    init_center: Optional[np.ndarray]
    init_radius: float
    horizon: int
    record_every: int
    seed: int
    outputs: dict
    montecarlo: Optional[dict] = None
    raw: dict = dc_field(default_factory=dict)

    def build_scheme(self) -> Scheme:
        scheme = make_scheme(self.scheme_name, **dict(self.scheme_hyper))
        if self.wrapper:
            if "averaged" in self.wrapper:
                scheme = wrap_averaged(scheme, float(self.wrapper["averaged"]))
            if "alternating" in self.wrapper:
                k1, k2 = self.wrapper["alternating"]
                scheme = wrap_alternating(scheme, int(k1), int(k2))
        return scheme


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("<file>", f"no such config file: {path}")
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("<file>", f"TOML parse error: {err}")


def _require(table: dict, field: str, context: str):
    if field not in table:
        raise ConfigError(f"{context}.{field}", "missing required field")
    return table[field]


def parse_schedule(raw: dict, context: str = "schedule") -> StepSchedule:
    kind = _require(raw, "kind", context)
    radius = None
    if "sampling_radius" in raw:
        radius = parse_schedule(raw["sampling_radius"], f"{context}.sampling_radius")
    try:
        if kind == "power":
            witness = None
            if any(k in raw for k in ("witness_A", "witness_B", "witness_eps")):
                witness = (raw.get("witness_A"), raw.get("witness_B"),
                           raw.get("witness_eps"))
            return StepSchedule.power(float(_require(raw, "A", context)),
                                      float(_require(raw, "p", context)),
                                      sampling_radius=radius, witness=witness)
        if kind == "constant":
            return StepSchedule.constant(float(_require(raw, "gamma", context)),
                                         sampling_radius=radius)
        if kind == "explicit":
            return StepSchedule.explicit(_require(raw, "values", context),
                                         sampling_radius=radius)
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(context, str(err))
    raise ConfigError(f"{context}.kind",
                      f"unknown kind {kind!r}; expected power|constant|explicit")


def parse_noise(raw: Optional[dict], context: str = "noise") -> NoiseModel:
    if raw is None:
        return NoiseModel.none()
    kind = raw.get("kind", "none")
    try:
        if kind == "none":
            return NoiseModel.none()
        if kind == "gaussian":
            return NoiseModel.gaussian(float(_require(raw, "sigma", context)))
        if kind == "bounded-uniform":
            return NoiseModel.bounded_uniform(float(_require(raw, "K", context)))
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(context, str(err))
    raise ConfigError(f"{context}.kind",
                      f"unknown kind {kind!r}; expected none|gaussian|bounded-uniform")


def parse_problem(raw: dict, context: str = "problem") -> Problem:
    label = _require(raw, "label", context)
    params = {}
    if "epsilon" in raw:
        params["epsilon"] = float(raw["epsilon"])
    if "perturbation" in raw:
        params["perturbation"] = raw["perturbation"]
    try:
        return get_problem(label, **params)
    except KeyError as err:
        raise ConfigError(f"{context}.label",
                          f"{err.args[0]}")


def parse_experiment(raw: dict) -> ExperimentConfig:
    problem = parse_problem(_require(raw, "problem", ""))

    scheme_raw = dict(_require(raw, "scheme", ""))
    name = _require(scheme_raw, "name", "scheme")
    scheme_raw.pop("name")
    if name not in SCHEME_NAMES:
        raise ConfigError("scheme.name",
                          f"unknown scheme {name!r}; expected one of {', '.join(SCHEME_NAMES)}")
    wrapper = scheme_raw.pop("wrapper", None)
    if wrapper is not None:
        bad = set(wrapper) - {"averaged", "alternating"}
        if bad:
            raise ConfigError("scheme.wrapper", f"unknown wrapper keys {sorted(bad)}")
        if "averaged" in wrapper and not (0.0 < float(wrapper["averaged"]) < 1.0):
            raise ConfigError("scheme.wrapper.averaged", "must lie strictly in (0, 1)")
        if "alternating" in wrapper:
            pair = wrapper["alternating"]
            if len(pair) != 2 or int(pair[0]) < 1 or int(pair[1]) < 1:
                raise ConfigError("scheme.wrapper.alternating", "expected [k1, k2] with k1, k2 >= 1")

    schedule = parse_schedule(_require(raw, "schedule", ""))
    if name == "spsa" and schedule.sampling_radius is None:
        raise ConfigError("schedule.sampling_radius",
                          "spsa needs a sampling-radius schedule")
    noise = parse_noise(raw.get("noise"))

    run_raw = dict(_require(raw, "run", ""))
    horizon = int(_require(run_raw, "horizon", "run"))
    if horizon < 1:
        raise ConfigError("run.horizon", "must be >= 1")
    record_every = int(run_raw.get("record_every", 1))
    if record_every < 1:
        raise ConfigError("run.record_every", "must be >= 1")

    z0 = run_raw.get("z0")
    init = raw.get("init")
    init_center, init_radius = None, 0.0
    if z0 is not None:
        z0 = np.asarray([float(v) for v in z0])
        if z0.shape != (problem.d,):
            raise ConfigError("run.z0", f"expected {problem.d} coordinates")
    if init is not None:
        init_center = np.asarray([float(v) for v in _require(init, "center", "init")])
        init_radius = float(_require(init, "radius", "init"))
        if init_radius < 0:
            raise ConfigError("init.radius", "must be >= 0")
    if z0 is None and init_center is None:
        raise ConfigError("run.z0", "either run.z0 or [init] must be given")

    mc = raw.get("montecarlo")
    if mc is not None:
        mc = dict(mc)
        mc["runs"] = int(_require(mc, "runs", "montecarlo"))
        if mc["runs"] < 1:
            raise ConfigError("montecarlo.runs", "must be >= 1")
        mc["threshold"] = float(_require(mc, "threshold", "montecarlo"))
        target_raw = _require(mc, "target", "montecarlo")
        kind = _require(target_raw, "kind", "montecarlo.target")
        if kind == "point":
            mc["target"] = TargetSet.point(_require(target_raw, "center", "montecarlo.target"))
        elif kind == "annulus":
            mc["target"] = TargetSet.annulus(
                float(_require(target_raw, "r_min", "montecarlo.target")),
                float(_require(target_raw, "r_max", "montecarlo.target")),
                center=target_raw.get("center", (0.0, 0.0)))
        else:
            raise ConfigError("montecarlo.target.kind",
                              f"unknown kind {kind!r}; expected point|annulus")
        if init_center is None:
            raise ConfigError("init", "[init] ball is required for montecarlo")

    return ExperimentConfig(
        problem=problem, scheme_name=name, scheme_hyper=scheme_raw,
        wrapper=wrapper, schedule=schedule, noise=noise, z0=z0,
        init_center=init_center, init_radius=init_radius, horizon=horizon,
        record_every=record_every, seed=int(raw.get("seed", 0)),
        outputs=dict(raw.get("outputs", {})), montecarlo=mc, raw=raw)


REFERENCE_CONFIG = """\
# minmaxlab experiment configuration -- all defaults written out.
# Values here run a short stochastic extra-gradient experiment on the
# almost-bilinear game and write every artifact kind.

seed = 0                     # master seed; --seed overrides

[problem]
label = "almost-bilinear"    # bilinear | almost-bilinear | forsaken | gradient-well
epsilon = 0.01               # almost-bilinear only

# optional explicit perturbation phi(y) as a degree -> coefficient map
# (default is y^2/2 - y^4/4)
[problem.perturbation]
2 = 0.5
4 = -0.25

[scheme]
name = "seg"                 # sgda|ppm|seg|peg|spsa|hd|sga|cono|adam|extraadam
# lam = 0.2                  # sga / cono regularization
# beta1 = 0.9                # adam / extraadam
# beta2 = 0.999
# solver_tol = 1e-12         # ppm inner solver
# wrapper = { averaged = 0.5 }
# wrapper = { alternating = [1, 5] }

[schedule]
kind = "power"               # power: gamma_n = A / n^p
A = 0.5
p = 0.5
# kind = "constant"; gamma = 0.01
# kind = "explicit"; values = [0.5, 0.25, 0.125]
# [schedule.sampling_radius] # required for spsa: delta_n schedule
# kind = "power"
# A = 1.0
# p = 0.3333333333333333

[noise]
kind = "gaussian"            # none | gaussian | bounded-uniform
sigma = 0.01
# K = 0.5                    # bounded-uniform radius

[run]
z0 = [1.5, 0.0]
horizon = 20000
record_every = 10

# alternative initialization for monte carlo: a ball of starting points
# [init]
# center = [0.0, 0.0]
# radius = 0.05

[outputs]
csv = "trajectory.csv"
json = "summary.json"
svg = "trajectory.svg"

# used by the montecarlo subcommand only
# [montecarlo]
# runs = 200
# threshold = 0.1
# [montecarlo.target]
# kind = "point"             # point | annulus
# center = [0.0, 0.0]
"""
