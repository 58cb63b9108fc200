"""Sampled SCGF and rate-function curves, their file formats, and the Legendre transform.

Curves are written as CSV (stable headers, RFC-4180 quoting) plus a JSON
sidecar carrying every input parameter and a git-style content hash, so runs
are archivable and byte-reproducible.  The rate function uses the convention
that j is the tilt-conjugate variable of lambda, i.e. j estimates N times
the spatially averaged current.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gaussian import conductivity_kappa

__all__ = ["ScgfCurve", "RateCurve", "KappaLimit", "rate_function", "content_hash"]


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def content_hash(obj) -> str:
    """Git-style blob hash of the canonical JSON form of ``obj``."""
    payload = json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()


@dataclass
class ScgfCurve:
    """Sampled lambda -> F map with method and model metadata."""

    lam: np.ndarray
    value: np.ndarray
    method: str
    n_sites: int
    tau: float
    stderr: np.ndarray | None = None
    ess: np.ndarray | None = None
    flagged: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.lam.shape != self.value.shape or self.lam.ndim != 1:
            raise ConfigError("lam and value must be matching 1-d arrays")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            header = ["lambda", "value", "method", "N", "tau"]
            extra = self.stderr is not None
            if extra:
                header += ["stderr", "ess", "flagged"]
            w.writerow(header)
            for i in range(self.lam.size):
                row = [repr(float(self.lam[i])), repr(float(self.value[i])),
                       self.method, self.n_sites, repr(float(self.tau))]
                if extra:
                    row += [repr(float(self.stderr[i])), repr(float(self.ess[i])),
                            int(self.flagged[i])]
                w.writerow(row)

    def write_json(self, path) -> None:
        doc = self.to_json_dict()
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_json_dict(self) -> dict:
        doc = {
            "kind": "scgf_curve",
            "method": self.method,
            "N": self.n_sites,
            "tau": self.tau,
            "lambda": self.lam.tolist(),
            "value": self.value.tolist(),
            "params": _canonical(self.params),
        }
        if self.stderr is not None:
            doc["stderr"] = self.stderr.tolist()
            doc["ess"] = self.ess.tolist()
            doc["flagged"] = [bool(x) for x in self.flagged]
        doc["content_hash"] = content_hash({k: v for k, v in doc.items()})
        return doc


@dataclass
class RateCurve:
    """Sampled j -> rate map, j in units of N times the average current."""

    j: np.ndarray
    value: np.ndarray
    method: str
    n_sites: int
    tau: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.j = np.asarray(self.j, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.j.shape != self.value.shape or self.j.ndim != 1:
            raise ConfigError("j and value must be matching 1-d arrays")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "value", "method", "N", "tau"])
            for i in range(self.j.size):
                w.writerow([repr(float(self.j[i])), repr(float(self.value[i])),
                            self.method, self.n_sites, repr(float(self.tau))])

    def write_json(self, path) -> None:
        doc = {
            "kind": "rate_curve",
            "method": self.method,
            "N": self.n_sites,
            "tau": self.tau,
            "j": self.j.tolist(),
            "value": self.value.tolist(),
            "params": _canonical(self.params),
        }
        doc["content_hash"] = content_hash(doc)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class KappaLimit:
    """Macroscopic SCGF at weak drive: F_N(lambda) = kappa (lambda tau' + N lambda^2 T^2).

    The Legendre transform is then the exact quadratic
    (j - kappa tau')^2 / (4 kappa N T^2).
    """

    n_sites: int
    temperature: float
    tau_prime: float
    omega0: float
    omega: float
    gamma: float

    @property
    def kappa(self) -> float:
        return conductivity_kappa(self.omega0, self.omega, self.gamma, method="closed-form")

    def scgf(self, lam: float) -> float:
        return self.kappa * (lam * self.tau_prime
                             + self.n_sites * lam**2 * self.temperature**2)

    def rate(self, j: float) -> float:
        return (j - self.kappa * self.tau_prime) ** 2 / (
            4.0 * self.kappa * self.n_sites * self.temperature**2)


def _lower_convex_hull(lam: np.ndarray, val: np.ndarray) -> np.ndarray:
    """Values of the lower convex hull at the original abscissae."""
    pts = sorted(zip(lam, val))
    hull = []
    for x, y in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (x - x2) >= (y - y2) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append((x, y))
    hx = np.array([h[0] for h in hull])
    hy = np.array([h[1] for h in hull])
    return np.interp(lam, hx, hy)


def _golden_max(fun, lo: float, hi: float, tol: float = 1e-12) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > tol * max(1.0, abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return max(fc, fd)


def rate_function(scgf, j_grid) -> RateCurve:
    """Legendre-Fenchel transform of an SCGF: rate(j) = sup_lambda (lambda j - F(lambda)).

    ``scgf`` is a sampled :class:`ScgfCurve` (golden-section search over the
    piecewise-linear interpolant; non-convex inputs are convexified by their
    lower hull with a warning) or a :class:`KappaLimit` (closed-form
    quadratic).  The transform of a sampled curve is reliable only for j
    within the range of slopes spanned by the samples.
    """
    j_grid = np.asarray(j_grid, dtype=float)
    if j_grid.ndim != 1 or j_grid.size == 0:
        raise ConfigError("j_grid must be a non-empty 1-d array")
    if isinstance(scgf, KappaLimit):
        vals = np.array([scgf.rate(j) for j in j_grid])
        return RateCurve(j=j_grid, value=vals, method="kappa-limit",
                         n_sites=scgf.n_sites, tau=scgf.tau_prime / scgf.n_sites,
                         params={"kappa": scgf.kappa, "tau_prime": scgf.tau_prime,
                                 "T": scgf.temperature})
    if not isinstance(scgf, ScgfCurve):
        raise ConfigError("scgf must be a ScgfCurve or a KappaLimit")
    if scgf.lam.size < 3:
        raise ConfigError("need at least 3 SCGF samples for a transform")
    order = np.argsort(scgf.lam)
    lam = scgf.lam[order]
    val = scgf.value[order]
    second = np.diff(val, 2)
    span = max(1.0, float(np.max(np.abs(val))))
    if np.any(second < -1e-10 * span):
        warnings.warn("SCGF samples are not convex; using their lower convex hull",
                      UserWarning)
        val = _lower_convex_hull(lam, val)

    def transform(j):
        return _golden_max(lambda x: x * j - np.interp(x, lam, val), lam[0], lam[-1])

    vals = np.array([transform(j) for j in j_grid])
    return RateCurve(j=j_grid, value=vals, method=f"legendre[{scgf.method}]",
                     n_sites=scgf.n_sites, tau=scgf.tau, params=dict(scgf.params))
