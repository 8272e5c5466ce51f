"""Factorial cumulants from moments, three-cumulant parameter matching, and family selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InfeasibleFamilyError, ParameterError
from .params import (
    BinPoisParams,
    CumulantTriple,
    MomentTriple,
    NegBinPoisParams,
    TriplePoisParams,
)

DEFAULT_RHO0 = 0.05
# Relative slack when flooring n_real so that 9.999999999999998 counts as 10.
_FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class FamilyChoice:
    family: str
    ratio: float
    rho0: float


def cumulants_from_moments(m: MomentTriple) -> CumulantTriple:
    """Exact conversion; works on floats or ``Fraction`` moments."""
    if not isinstance(m, MomentTriple):
        m = MomentTriple(*m)
    m1, m2, m3 = m.m1, m.m2, m.m3
    g2 = m2 - m1 * m1 - m1
    g3 = m3 - 3 * m1 * m2 - 3 * m2 + 2 * m1**3 + 3 * m1 * m1 + 2 * m1
    return CumulantTriple(m1, g2, g3)


def _snap(x: float, scale: float) -> float:
    """Zero out negatives that are only rounding noise relative to ``scale``."""
    return 0.0 if -_FLOOR_SLACK * max(1.0, scale) <= x < 0 else x


def _as_triple(g) -> CumulantTriple:
    return g if isinstance(g, CumulantTriple) else CumulantTriple(*g)


def solve_binpois(g, mu=None, project_valid: bool = False) -> BinPoisParams:
    """Match B(n, p) * Poisson(lam) to (g1, g2, g3); ``mu`` defaults to g1.

    ``n`` is the floor of ``-4 g2^3 / g3^2`` and ``delta`` the dropped
    fraction. With ``project_valid`` a negative ``lam`` is clamped to 0.
    """
    g = _as_triple(g)
    g1, g2, g3 = float(g.g1), float(g.g2), float(g.g3)
    mu = g1 if mu is None else float(mu)
    diag = {"family": "M1", "g": (g1, g2, g3), "mu": mu}
    if not (g2 < 0):
        raise InfeasibleFamilyError(f"M1 needs g2 < 0, got g2={g2}", {**diag, "violated": ["g2 < 0"]})
    if not (g3 > 0):
        raise InfeasibleFamilyError(f"M1 needs g3 > 0, got g3={g3}", {**diag, "violated": ["g3 > 0"]})
    p = -g3 / (2 * g2)
    n_real = -4 * g2**3 / g3**2
    diag.update(p=p, n_real=n_real, n_printed_sign=-n_real)
    if not (0 < p < 1):
        raise InfeasibleFamilyError(
            f"M1 matching gives p={p} outside (0, 1)", {**diag, "violated": ["0 < p < 1"]}
        )
    n = math.floor(n_real * (1 + _FLOOR_SLACK))
    delta = min(max(n_real - n, 0.0), math.nextafter(1.0, 0.0))
    lam = _snap(mu - n * p, abs(mu))
    diag.update(n=n, delta=delta, lam=lam)
    projected = ()
    if lam < 0:
        if not project_valid:
            raise InfeasibleFamilyError(
                f"M1 matching gives lam={lam} < 0", {**diag, "violated": ["lam >= 0"]}
            )
        lam, projected = 0.0, ("lam",)
    return BinPoisParams(n, p, lam, delta, projected=projected)


def solve_negbinpois(g, mu=None, project_valid: bool = False) -> NegBinPoisParams:
    """Match NB(r, p) * Poisson(lam) to (g1, g2, g3); ``mu`` defaults to g1.

    Uses p = 2 g2/(2 g2 + g3) and r = 4 g2^3 / g3^2, which reproduce g2 and
    g3 exactly.
    """
    g = _as_triple(g)
    g1, g2, g3 = float(g.g1), float(g.g2), float(g.g3)
    mu = g1 if mu is None else float(mu)
    diag = {"family": "M2", "g": (g1, g2, g3), "mu": mu}
    violated = [c for c, ok in (("g2 > 0", g2 > 0), ("g3 > 0", g3 > 0)) if not ok]
    if violated:
        raise InfeasibleFamilyError(f"M2 needs {' and '.join(violated)}, got g2={g2}, g3={g3}",
                                    {**diag, "violated": violated})
    p = 2 * g2 / (2 * g2 + g3)
    r = 4 * g2**3 / g3**2
    lam = _snap(mu - r * (1 - p) / p, abs(mu))
    diag.update(p=p, r=r, r_short_form=4 * g2 / g3, lam=lam)
    projected = ()
    if lam < 0:
        if not project_valid:
            raise InfeasibleFamilyError(
                f"M2 matching gives lam={lam} < 0", {**diag, "violated": ["lam >= 0"]}
            )
        lam, projected = 0.0, ("lam",)
    return NegBinPoisParams(r, p, lam, projected=projected)


def solve_triplepois(g, project_valid: bool = False) -> TriplePoisParams:
    """Match the triple-Poisson family: lam = g1 - g2 + g3/2, omega = g2 - g3, eta = g3/2."""
    g = _as_triple(g)
    lam = g.g1 - g.g2 + g.g3 / 2
    omega = g.g2 - g.g3
    eta = g.g3 / 2
    scale = float(abs(g.g1) + abs(g.g2) + abs(g.g3))
    raw = {"lam": _snap(float(lam), scale), "omega": _snap(float(omega), scale), "eta": float(eta)}
    violated = [f"{k} >= 0" for k, v in raw.items() if v < 0]
    if violated and not project_valid:
        raise InfeasibleFamilyError(
            "M3 matching gives negative " + ", ".join(f"{k}={v}" for k, v in raw.items() if v < 0),
            {"family": "M3", "g": tuple(map(float, g)), **raw, "violated": violated},
        )
    projected = tuple(k for k, v in raw.items() if v < 0)
    clean = {k: max(v, 0.0) for k, v in raw.items()}
    return TriplePoisParams(clean["lam"], clean["omega"], clean["eta"], projected=projected)


def select_family(g, rho0: float = DEFAULT_RHO0) -> FamilyChoice:
    """Pick M3 when |g2/g1| <= rho0, M1 when g2/g1 < -rho0, else M2."""
    g = _as_triple(g)
    if not (g.g1 > 0):
        raise ParameterError(f"family selection needs g1 > 0, got {g.g1}")
    if not (rho0 >= 0):
        raise ParameterError(f"rho0 must be >= 0, got {rho0}")
    ratio = float(g.g2) / float(g.g1)
    if abs(ratio) <= rho0:
        fam = "M3"
    elif ratio < 0:
        fam = "M1"
    else:
        fam = "M2"
    return FamilyChoice(fam, ratio, rho0)


def solve_family(family: str, g, mu=None, project_valid: bool = False):
    """Dispatch to the matching solver by family name."""
    if family == "M1":
        return solve_binpois(g, mu, project_valid)
    if family == "M2":
        return solve_negbinpois(g, mu, project_valid)
    if family == "M3":
        return solve_triplepois(g, project_valid)
    raise ParameterError(f"unknown family {family!r}")


def match_family(g, mu=None, rho0: float = DEFAULT_RHO0, project_valid: bool = False):
    """Select a family for ``g`` and solve for its parameters."""
    choice = select_family(g, rho0)
    return choice, solve_family(choice.family, g, mu, project_valid)
