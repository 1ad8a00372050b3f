"""Synthetic stand-in for a pulmonary-function panel.

Girls followed yearly from a baseline age of 6-10 with 1-12 visits; the
response is FEV1 (litres) with fixed effects of current age and height and of
their baseline values, a random slope on age, and no random intercept. The
default parameters put the intercept scale on the boundary, which is the case
where the usual intervals misbehave.
"""

from __future__ import annotations

import numpy as np

from .dataio import parse_formula
from .models.lmm import LmmData
from .streams import group_normals, group_uniforms

FEV_FORMULA = "fev1 ~ 1 + age + ht + age0 + ht0 | re(1) + re(age)"
FEV_PSI = (-2.2, 0.078, 2.80, -0.040, -0.19)
FEV_LAMBDA = (0.0, 0.0201)
FEV_SIGMA = 0.156


def fev_lookalike(seed: int, n: int = 300, psi=FEV_PSI, lam=FEV_LAMBDA, sigma: float = FEV_SIGMA) -> LmmData:
    form = parse_formula(FEV_FORMULA)
    gid = np.arange(n)
    u = group_uniforms(seed, gid, 3, tag=0)
    jitter = group_uniforms(seed, gid, 12, tag=1)
    w = group_normals(seed, gid, 2, tag=2)
    e = group_normals(seed, gid, 12, tag=3)
    groups = []
    for i in range(n):
        visits = 1 + int(u[i, 0] * 12)
        age0 = 6.0 + 4.0 * u[i, 1]
        age = age0 + np.arange(visits) + 0.3 * jitter[i, :visits]
        # growth curve levelling off in the late teens
        offset = 0.08 * (u[i, 2] - 0.5)
        ht = 1.15 + offset + 0.52 * (1.0 - np.exp(-(age - 6.0) / 5.0))
        X = np.column_stack([np.ones(visits), age, ht, np.full(visits, age0), np.full(visits, ht[0])])
        Z = np.column_stack([np.ones(visits), age])
        y = X @ np.asarray(psi) + lam[0] * w[i, 0] + lam[1] * w[i, 1] * age + sigma * e[i, :visits]
        groups.append((y, X, Z))
    labels = [f"id{i + 1:04d}" for i in range(n)]
    return LmmData.from_groups(groups, form.scale_map, labels, form.fixed, form.random)
