"""Model-versus-simulation agreement checks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .analytic import ModelReport
from .simulator import SimReport

REL_TOL = 0.2
ABS_FLOOR = 0.005
METRICS = ("per_ini", "plr")


def within(model: float, sim: float, rel: float = REL_TOL, floor: float = ABS_FLOOR) -> bool:
    """|model - sim| <= max(rel * sim, floor)."""
    if math.isnan(model) or math.isnan(sim):
        return False
    return abs(model - sim) <= max(rel * abs(sim), floor)


def rel_error(model: float, sim: float) -> float:
    if sim == 0:
        return 0.0 if model == 0 else math.inf
    return abs(model - sim) / abs(sim)


@dataclass(frozen=True)
class AgreementRow:
    lambda_fps: float
    lambda_star: float
    model: dict
    sim: dict
    status: str  # pass | fail | out-of-validity

    def row(self) -> dict:
        out = {"lambda_fps": self.lambda_fps, "lambda_star": self.lambda_star}
        for k in METRICS:
            out[f"{k}_model"] = self.model[k]
            out[f"{k}_sim"] = self.sim[k]
            out[f"{k}_rel_err"] = rel_error(self.model[k], self.sim[k])
        out["status"] = self.status
        return out


def compare(models: Sequence[ModelReport], sims: Sequence[SimReport],
            rel: float = REL_TOL, floor: float = ABS_FLOOR) -> list[AgreementRow]:
    rows = []
    for m, s in zip(models, sims):
        mv = {k: getattr(m, k) for k in METRICS}
        sv = {k: getattr(s, k) for k in METRICS}
        if m.lambda_fps > m.lambda_star * (1 + 1e-9):
            status = "out-of-validity"
        elif all(within(mv[k], sv[k], rel, floor) for k in METRICS):
            status = "pass"
        else:
            status = "fail"
        rows.append(AgreementRow(m.lambda_fps, m.lambda_star, mv, sv, status))
    return rows
