"""Experiment configuration: JSON text in, validated dataclasses out."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass

EXPERIMENTS = ("basis", "evolve", "giant", "ghp", "rates", "entropy", "inequalities", "interp_norm")

SECTIONS = {
    "operator": {"kind": "SFL", "s": 0.5},
    "domain": {"geometry": "interval", "n": 100},
    "nonlinearity": {"m": 2.0},
    "evolution": {"dt": 0.01, "t_end": 10.0, "rescaled": False, "grid": "uniform", "growth": 0.02},
    "analysis": {
        "window": None, "trials": 20, "q": None, "alpha": 0.5, "amplitudes": [1.0, 2.0, 4.0],
        "m_values": None, "u0": "sin", "pairs": 20, "K": None,
    },
}
TOP_LEVEL = {"experiment", "seed", "output_dir"} | set(SECTIONS)
U0_CHOICES = ("sin", "bump", "constant", "random")


class ConfigError(ValueError):
    """Carries every violation found, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    experiment: str
    operator: dict
    domain: dict
    nonlinearity: dict
    evolution: dict
    analysis: dict
    seed: int = 0
    output_dir: str = "fpme_out"

    def to_dict(self) -> dict:
        return asdict(self)


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _merge(defaults, given, path, errors):
    out = copy.deepcopy(defaults)
    if not isinstance(given, dict):
        errors.append(f"{path}: expected an object")
        return out
    for k, v in given.items():
        if k not in defaults:
            errors.append(f"{path}.{k}: unknown key")
        else:
            out[k] = v
    return out


def validate(data: dict, experiment: str | None = None) -> ExperimentConfig:
    errors = []
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected an object"])
    for k in data:
        if k not in TOP_LEVEL:
            errors.append(f"{k}: unknown key")
    exp = data.get("experiment", experiment)
    if experiment is not None and exp != experiment:
        errors.append(f"experiment: config names '{exp}' but '{experiment}' was requested")
    if exp not in EXPERIMENTS:
        errors.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
    sec = {name: _merge(d, data.get(name, {}), name, errors) for name, d in SECTIONS.items()}

    op, dom, nl, ev, an = (sec[k] for k in ("operator", "domain", "nonlinearity", "evolution", "analysis"))
    if op["kind"] not in ("SFL", "RFL"):
        errors.append("operator.kind: must be 'SFL' or 'RFL'")
    if not _num(op["s"]) or not 0 < op["s"] < 1:
        errors.append("operator.s: s must lie in (0,1)")
    if dom["geometry"] not in ("interval", "rectangle"):
        errors.append("domain.geometry: must be 'interval' or 'rectangle'")
    if not isinstance(dom["n"], int) or isinstance(dom["n"], bool) or dom["n"] < 1:
        errors.append("domain.n: must be a positive integer")
    if op["kind"] == "RFL" and dom["geometry"] == "rectangle":
        errors.append("operator.kind: RFL is only available on the interval")
    m = nl["m"]
    if not _num(m) or m <= 0:
        errors.append("nonlinearity.m: must be positive")
        m = None
    for key in ("dt", "t_end"):
        if not _num(ev[key]) or ev[key] <= 0:
            errors.append(f"evolution.{key}: must be positive")
    if ev["grid"] not in ("uniform", "geometric"):
        errors.append("evolution.grid: must be 'uniform' or 'geometric'")
    if not _num(ev["growth"]) or ev["growth"] <= 0:
        errors.append("evolution.growth: must be positive")
    if ev["rescaled"] is True and ev["grid"] != "uniform":
        errors.append("evolution.grid: the rescaled flow uses a uniform grid")
    if not isinstance(ev["rescaled"], bool):
        errors.append("evolution.rescaled: must be true or false")
    elif ev["rescaled"] and m is not None and _num(ev["dt"]):
        if m <= 1:
            errors.append("evolution.rescaled: the rescaled flow needs m > 1")
        elif ev["dt"] > (m - 1) / 2:
            errors.append(f"evolution.dt: rescaled dt must satisfy dt <= (m-1)/2 = {(m - 1) / 2}")
    if exp in ("giant", "ghp", "rates", "entropy") and m is not None and m <= 1:
        errors.append(f"nonlinearity.m: experiment '{exp}' needs m > 1")
    w = an["window"]
    if w is not None and not (isinstance(w, list) and len(w) == 2 and all(_num(x) for x in w) and w[0] < w[1]):
        errors.append("analysis.window: must be [t_lo, t_hi] with t_lo < t_hi")
    for key in ("trials", "pairs"):
        if not isinstance(an[key], int) or isinstance(an[key], bool) or an[key] < 1:
            errors.append(f"analysis.{key}: must be a positive integer")
    for key in ("K",):
        if an[key] is not None and (not isinstance(an[key], int) or an[key] < 1):
            errors.append(f"analysis.{key}: must be a positive integer or null")
    if an["q"] is not None and (not _num(an["q"]) or an["q"] <= 1):
        errors.append("analysis.q: must exceed 1")
    if not _num(an["alpha"]) or not 0 < an["alpha"] <= 1:
        errors.append("analysis.alpha: must lie in (0,1]")
    if not isinstance(an["amplitudes"], list) or not all(_num(a) and a > 0 for a in an["amplitudes"]):
        errors.append("analysis.amplitudes: must be a list of positive numbers")
    mv = an["m_values"]
    if mv is not None and (not isinstance(mv, list) or not all(_num(x) and x > 1 for x in mv)):
        errors.append("analysis.m_values: must be a list of numbers > 1")
    if an["u0"] not in U0_CHOICES:
        errors.append(f"analysis.u0: must be one of {', '.join(U0_CHOICES)}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append("seed: must be a nonnegative integer")
    out = data.get("output_dir", "fpme_out")
    if not isinstance(out, str) or not out:
        errors.append("output_dir: must be a nonempty string")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(exp, op, dom, nl, ev, an, seed, out)


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Parse JSON text; syntax errors report line and column."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    return validate(data, experiment)
