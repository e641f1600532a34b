"""Label fields, threshold views and the near-critical reparametrization."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.stats import beta

from . import _arms
from .errors import CalibrationError, InfiniteLambdaError, UsageError
from .geometry import TRIANGULAR
from .rng import as_seed, uniform_block

P_CRITICAL = 0.5


@dataclass(frozen=True, eq=False)
class LabelField:
    """I.i.d. uniform labels on the carriers (sites or edges) of a geometry."""

    geometry: object = field(repr=False)
    values: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.values.shape != (self.geometry.carrier_count,):
            raise UsageError("label array does not match the carrier count")

    @property
    def carrier(self):
        return self.geometry.spec.carrier

    def edge_hi_lo(self):
        """Per-edge ``(hi, lo)`` arrays; for edge carriers ``lo`` is zero."""
        g = self.geometry
        if self.carrier == "edge":
            return self.values, np.zeros_like(self.values)
        a = self.values[g.edges[:, 0]]
        b = self.values[g.edges[:, 1]]
        return np.maximum(a, b), np.minimum(a, b)


class EdgeLexLabel(tuple):
    """``(hi, lo)`` pair of endpoint labels, compared lexicographically."""

    def __new__(cls, hi, lo):
        if hi < lo:
            raise UsageError("hi must be at least lo")
        return super().__new__(cls, (float(hi), float(lo)))

    @property
    def hi(self):
        return self[0]

    @property
    def lo(self):
        return self[1]


@dataclass(frozen=True)
class Calibration:
    """Window width ``r(eta)`` and, in measured mode, the 4-arm estimate behind it."""

    mode: str
    r_eta: float
    alpha4: float = None
    samples: int = None
    hits: int = None
    interval: tuple = None

    def __post_init__(self):
        if not self.r_eta > 0:
            raise UsageError("r_eta must be positive")
        if self.mode not in ("theoretical", "measured"):
            raise UsageError(f"unknown calibration mode {self.mode!r}")

    @classmethod
    def theoretical(cls, eta):
        """``r(eta) = eta^(3/4)`` with unit constant."""
        return cls("theoretical", float(eta) ** 0.75)


@dataclass(frozen=True)
class Window:
    """Near-critical parameter pair ``lambda < lambda'``."""

    lambda_lo: float
    lambda_hi: float

    def __post_init__(self):
        if not self.lambda_lo < self.lambda_hi:
            raise UsageError("window needs lambda_lo < lambda_hi")


@dataclass(frozen=True, eq=False)
class ConfigView:
    """Threshold view: a carrier is open iff its label is at most ``p``."""

    labels: LabelField = field(repr=False)
    p: float

    @property
    def geometry(self):
        return self.labels.geometry

    @property
    def open(self):
        """Open mask over carriers."""
        return self.labels.values <= self.p

    @property
    def site_open(self):
        """Open mask over sites (site carriers only)."""
        if self.labels.carrier != "site":
            raise UsageError("site states exist only for site percolation")
        return self.open

    @property
    def edge_open(self):
        """Open mask over edges; under the vertex rule an edge is open iff hi <= p."""
        hi, _ = self.labels.edge_hi_lo()
        return hi <= self.p


def _make_distinct(values):
    # nudge later carriers upward until all labels are bit-distinct
    while True:
        order = np.argsort(values, kind="stable")
        sv = values[order]
        dup = np.nonzero(sv[1:] == sv[:-1])[0]
        if dup.size == 0:
            return values
        for d in dup:
            idx = max(order[d], order[d + 1])
            values[idx] = np.nextafter(values[idx], 1.0)


def sample_labels(geometry, seed):
    """Labels for every carrier, a pure function of ``(geometry, seed)``."""
    values = uniform_block(seed, geometry.carrier_count)
    values = _make_distinct(values)
    values.setflags(write=False)
    return LabelField(geometry, values, int(as_seed(seed)))


def labels_from_array(geometry, values, seed=0):
    """Wrap an explicit label array (tests, snapshots, relabelings)."""
    values = np.array(values, dtype=np.float64)
    if np.any(values <= 0) or np.any(values >= 1):
        raise UsageError("labels must lie strictly inside (0, 1)")
    values = _make_distinct(values)
    values.setflags(write=False)
    return LabelField(geometry, values, int(seed))


def edge_lex_label(labels, edge):
    """``(max, min)`` of the endpoint labels of an edge of the triangular lattice."""
    g = labels.geometry
    if g.spec.kind != TRIANGULAR:
        raise UsageError("edges of the square-bond lattice carry their own labels")
    x, y = (int(v) for v in edge)
    if not (0 <= x < g.site_count and 0 <= y < g.site_count) or y not in g.nbr[x]:
        raise UsageError(f"sites {x} and {y} are not adjacent")
    a, b = labels.values[x], labels.values[y]
    return EdgeLexLabel(max(a, b), min(a, b))


def lambda_to_p(lam, cal):
    """``p(lambda) = 1/2 +- (1 - exp(-|lambda| r))``, clamped to [0, 1]."""
    x = float(lam) * cal.r_eta
    if x >= 0:
        p = P_CRITICAL - math.expm1(-x)
    else:
        p = P_CRITICAL + math.expm1(x)
    return min(1.0, max(0.0, p))


def p_to_lambda(p, cal):
    """Inverse of :func:`lambda_to_p` on ``0 < p < 1``."""
    p = float(p)
    if p <= 0.0 or p >= 1.0:
        raise InfiniteLambdaError("p must lie strictly inside (0, 1)")
    if p >= P_CRITICAL:
        return -math.log1p(-(p - P_CRITICAL)) / cal.r_eta
    return math.log1p(-(P_CRITICAL - p)) / cal.r_eta


def config_at(labels, p):
    """Threshold view at ``p``."""
    if not 0.0 <= p <= 1.0:
        raise UsageError("p must lie in [0, 1]")
    return ConfigView(labels, float(p))


def binomial_interval(hits, samples, level=0.95):
    """Exact (Clopper-Pearson) interval for a binomial proportion."""
    a = (1.0 - level) / 2.0
    lo = 0.0 if hits == 0 else float(beta.ppf(a, hits, samples - hits + 1))
    hi = 1.0 if hits == samples else float(beta.ppf(1 - a, hits + 1, samples - hits))
    return lo, hi


def calibrate_r(geometry, samples, seed=0):
    """Measured ``r(eta) = eta^2 / alpha4(eta, 1)``.

    ``alpha4`` is the frequency of four alternating arms from a site to
    max-norm distance 1 at ``p = 1/2``, each sample using fresh labels on
    the box of radius 1 around the site.
    """
    if 2 * geometry.m < 2 - 1e-12:
        raise UsageError("calibration needs a domain of side at least 2")
    if geometry.spec.kind != TRIANGULAR:
        raise UsageError("arm events are implemented for the triangular site lattice")
    samples = int(samples)
    if samples < 1:
        raise UsageError("need at least one sample")
    radius = geometry.spec.n
    hits = int(_arms.center_four_arm_hits(as_seed(seed), samples, radius, P_CRITICAL))
    if hits == 0:
        raise CalibrationError(
            f"no 4-arm events in {samples} samples; increase the sample count"
        )
    alpha = hits / samples
    eta = geometry.eta
    return Calibration("measured", eta * eta / alpha, alpha, samples, hits,
                       binomial_interval(hits, samples))
