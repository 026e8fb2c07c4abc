"""Default configurations, one per experiment."""
from __future__ import annotations

import copy

PRESETS = {
    "basis": {
        "operator": {"kind": "SFL", "s": 0.5},
        "domain": {"geometry": "interval", "n": 99},
    },
    "evolve": {
        "operator": {"kind": "SFL", "s": 0.5},
        "domain": {"geometry": "interval", "n": 100},
        "nonlinearity": {"m": 2.0},
        "evolution": {"dt": 0.01, "t_end": 2.0},
        "analysis": {"pairs": 20, "u0": "random"},
    },
    "giant": {
        "operator": {"kind": "SFL", "s": 0.5},
        "domain": {"geometry": "interval", "n": 200},
        "nonlinearity": {"m": 2.0},
        "evolution": {"dt": 0.05, "t_end": 200.0, "rescaled": True},
    },
    "ghp": {
        "operator": {"kind": "SFL", "s": 0.5},
        "domain": {"geometry": "interval", "n": 100},
        "nonlinearity": {"m": 2.0},
        "evolution": {"dt": 1e-4, "t_end": 1e4, "grid": "geometric", "growth": 0.02},
        "analysis": {"amplitudes": [1.0, 2.0, 4.0], "m_values": [2.0, 3.0], "u0": "sin"},
    },
    "rates": {
        "operator": {"kind": "SFL", "s": 0.5},
        "domain": {"geometry": "interval", "n": 200},
        "nonlinearity": {"m": 2.0},
        "evolution": {"dt": 0.01, "t_end": 10.0, "rescaled": True},
        "analysis": {"window": [5.0, 10.0], "u0": "sin"},
    },
    "entropy": {
        "operator": {"kind": "SFL", "s": 0.5},
        "domain": {"geometry": "interval", "n": 200},
        "nonlinearity": {"m": 2.0},
        "evolution": {"dt": 0.01, "t_end": 10.0, "rescaled": True},
        "analysis": {"window": [5.0, 10.0], "u0": "sin", "m_values": [1.5, 2.0, 3.0]},
    },
    "inequalities": {
        "operator": {"kind": "SFL", "s": 0.5},
        "domain": {"geometry": "rectangle", "n": 12},
        "analysis": {"q": 3.0, "trials": 200},
    },
    "interp_norm": {
        "operator": {"kind": "SFL", "s": 0.5},
        "domain": {"geometry": "interval", "n": 100},
        "analysis": {"trials": 10},
    },
}


def preset(name: str) -> dict:
    data = copy.deepcopy(PRESETS[name])
    data["experiment"] = name
    return data
