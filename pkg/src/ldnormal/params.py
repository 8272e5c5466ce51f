"""Value types shared by the distribution, cumulant and Stein modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real

from .errors import ParameterError

FAMILIES = ("M1", "M2", "M3")


@dataclass(frozen=True)
class CumulantTriple:
    """First three factorial cumulants (g1, g2, g3) of an integer law.

    Components may be floats or exact ``Fraction`` values.
    """

    g1: Real
    g2: Real
    g3: Real

    def as_tuple(self):
        return (self.g1, self.g2, self.g3)

    def to_float(self) -> "CumulantTriple":
        return CumulantTriple(float(self.g1), float(self.g2), float(self.g3))

    def scaled(self, c) -> "CumulantTriple":
        return CumulantTriple(c * self.g1, c * self.g2, c * self.g3)

    @property
    def mean(self):
        return self.g1

    @property
    def variance(self):
        return self.g1 + self.g2

    def __iter__(self):
        return iter(self.as_tuple())


@dataclass(frozen=True)
class MomentTriple:
    """Raw moments m1 = E W, m2 = E W^2, m3 = E W^3."""

    m1: Real
    m2: Real
    m3: Real

    def __post_init__(self):
        if self.m1 < 0:
            raise ParameterError(f"m1 must be >= 0 for a non-negative variable, got {self.m1}")
        if self.m2 - self.m1 * self.m1 < 0:
            raise ParameterError(
                f"negative variance m2 - m1^2 = {self.m2 - self.m1 * self.m1}"
            )


def _check_prob(name, p):
    if not (0.0 < p < 1.0):
        raise ParameterError(f"{name} must lie in (0, 1), got {p}")


def _check_nonneg(name, x):
    if not (x >= 0) or math.isinf(x):
        raise ParameterError(f"{name} must be a finite value >= 0, got {x}")


@dataclass(frozen=True)
class BinPoisParams:
    """Parameters of B(n, p) * Poisson(lam)."""

    n: int
    p: float
    lam: float
    delta: float = 0.0
    projected: tuple = field(default=(), compare=False)

    family = "M1"

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 0:
            raise ParameterError(f"n must be a non-negative integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        _check_prob("p", self.p)
        _check_nonneg("lam", self.lam)
        if not (0.0 <= self.delta < 1.0):
            raise ParameterError(f"delta must lie in [0, 1), got {self.delta}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def theta(self) -> float:
        if self.lam == 0:
            return 0.0
        base = math.floor(self.n + self.lam / self.p)
        return math.inf if base == 0 else self.lam / (base * self.q)

    theta1 = theta

    @property
    def valid(self) -> bool:
        return self.theta < 0.5

    def condition_variants(self) -> dict:
        """The three floor arguments printed for the M1 condition, evaluated.

        Each entry maps the printed argument to ``(floor_value, 2*lam < q*floor_value)``.
        The package gates on the ``n+lam/p`` form.
        """
        out = {}
        for label, arg in (
            ("n+lam/p", self.n + self.lam / self.p),
            ("n+lam/q", self.n + self.lam / self.q),
            ("n+p/q", self.n + self.p / self.q),
        ):
            fl = math.floor(arg)
            out[label] = (fl, 2 * self.lam < self.q * fl)
        return out


@dataclass(frozen=True)
class NegBinPoisParams:
    """Parameters of NB(r, p) * Poisson(lam); NB counts failures, mean r q / p."""

    r: float
    p: float
    lam: float
    projected: tuple = field(default=(), compare=False)

    family = "M2"

    def __post_init__(self):
        if not (self.r > 0) or math.isinf(self.r):
            raise ParameterError(f"r must be a finite value > 0, got {self.r}")
        _check_prob("p", self.p)
        _check_nonneg("lam", self.lam)

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def theta(self) -> float:
        return self.lam * self.q / (self.r * self.q + self.lam * self.p)

    theta2 = theta

    @property
    def valid(self) -> bool:
        return self.theta < 0.5


@dataclass(frozen=True)
class TriplePoisParams:
    """Parameters of Poisson(lam) * 2 Poisson(omega/2) * 3 Poisson(eta/3)."""

    lam: float
    omega: float
    eta: float
    projected: tuple = field(default=(), compare=False)

    family = "M3"

    def __post_init__(self):
        _check_nonneg("lam", self.lam)
        _check_nonneg("omega", self.omega)
        _check_nonneg("eta", self.eta)

    @property
    def total(self) -> float:
        return self.lam + self.omega + self.eta

    @property
    def theta(self) -> float:
        if self.total == 0:
            return 0.0
        return (self.omega + 2 * self.eta) / self.total

    theta3 = theta

    @property
    def valid(self) -> bool:
        return self.theta < 0.5


@dataclass(frozen=True)
class NormalParams:
    mu: float
    sigma2: float

    family = "normal"

    def __post_init__(self):
        if not (self.sigma2 > 0) or math.isinf(self.sigma2):
            raise ParameterError(f"sigma2 must be a finite value > 0, got {self.sigma2}")
        if not math.isfinite(self.mu):
            raise ParameterError(f"mu must be finite, got {self.mu}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


FamilyParams = BinPoisParams | NegBinPoisParams | TriplePoisParams | NormalParams


def family_of(params) -> str:
    try:
        return params.family
    except AttributeError:
        raise ParameterError(f"not a family parameter object: {params!r}") from None


def as_fraction_or_float(x):
    return x if isinstance(x, Fraction) else float(x)
