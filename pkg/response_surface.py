"""
Quadratic defender-efficiency surfaces T(b, d) = b0 + b1*b + b2*d + b3*b*d + b4*b^2 + b5*d^2,
where b is the bad-bot ratio, d the defender ratio and T a time in ticks.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from simulation_errors import ParameterError
from stats_models import ols_fit

DEGENERATE_DET = 1e-12
SURFACE_TERMS = ("b", "d", "b:d", "b^2", "d^2")


@dataclass(frozen=True)
class QuadraticSurface:
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float
    fit: object = field(default=None, compare=False, repr=False)

    @classmethod
    def from_coefficients(cls, coefficients, fit=None):
        values = [float(c) for c in coefficients]
        if len(values) != 6:
            raise ParameterError(f"a quadratic surface has 6 coefficients, got {len(values)}", field="coefficients")
        return cls(*values, fit=fit)

    @property
    def coefficients(self):
        return (self.beta0, self.beta1, self.beta2, self.beta3, self.beta4, self.beta5)

    def evaluate(self, b, d):
        return (self.beta0 + self.beta1 * b + self.beta2 * d
                + self.beta3 * b * d + self.beta4 * b * b + self.beta5 * d * d)

    def gradient(self, b, d):
        return np.array([
            self.beta1 + self.beta3 * d + 2.0 * self.beta4 * b,
            self.beta2 + self.beta3 * b + 2.0 * self.beta5 * d,
        ])

    def hessian(self):
        return np.array([[2.0 * self.beta4, self.beta3], [self.beta3, 2.0 * self.beta5]])

    @property
    def determinant(self):
        return 4.0 * self.beta4 * self.beta5 - self.beta3 ** 2

    def to_dict(self):
        data = dict(zip(("beta0", "beta1", "beta2", "beta3", "beta4", "beta5"), self.coefficients))
        if self.fit is not None:
            data["r_squared"] = self.fit.r_squared
            data["n_obs"] = self.fit.n_obs
        return data


def fit_quadratic_surface(points):
    """Least-squares quadratic through (b, d, T) points."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ParameterError(f"points must be (b, d, T) triples, got shape {points.shape}", field="points")
    if len(points) < 6:
        raise ParameterError(f"a quadratic surface needs at least 6 points, got {len(points)}", field="points")
    b, d, t = points[:, 0], points[:, 1], points[:, 2]
    design = np.column_stack([b, d, b * d, b * b, d * d])
    fit = ols_fit(design, t, names=SURFACE_TERMS)
    surface = QuadraticSurface.from_coefficients(fit.coefficients, fit=fit)
    logging.debug(f"Fitted quadratic surface to {len(points)} points: {surface.coefficients}, R^2={fit.r_squared:.6g}")
    return surface


@dataclass(frozen=True)
class StationaryPoint:
    b: object
    d: object
    value: object
    classification: str

    def to_dict(self):
        return {"b": self.b, "d": self.d, "value": self.value, "classification": self.classification}


def surface_stationary_point(surface):
    """Point where the gradient vanishes, classified from the Hessian as max, min, saddle or degenerate."""
    det = surface.determinant
    if abs(det) < DEGENERATE_DET:
        return StationaryPoint(b=None, d=None, value=None, classification="degenerate")
    b, d = np.linalg.solve(surface.hessian(), [-surface.beta1, -surface.beta2])
    if det < 0:
        classification = "saddle"
    elif surface.beta4 < 0:
        classification = "max"
    else:
        classification = "min"
    return StationaryPoint(b=float(b), d=float(d), value=float(surface.evaluate(b, d)), classification=classification)


@dataclass(frozen=True)
class BoxExtrema:
    argmin: tuple
    min: float
    argmax: tuple
    max: float

    def to_dict(self):
        return {"argmin": list(self.argmin), "min": self.min, "argmax": list(self.argmax), "max": self.max}


def _check_box(box):
    (b_lo, b_hi), (d_lo, d_hi) = box
    if b_lo > b_hi or d_lo > d_hi:
        raise ParameterError(f"empty box {box}", field="box")
    return float(b_lo), float(b_hi), float(d_lo), float(d_hi)


def surface_extrema_on_box(surface, box):
    """Exact min and max of the surface over [b_lo, b_hi] x [d_lo, d_hi].

    Candidates are the four corners, the optimum of each edge-restricted
    quadratic that falls inside its edge, and the interior stationary point.
    """
    b_lo, b_hi, d_lo, d_hi = _check_box(box)
    candidates = [(b_lo, d_lo), (b_lo, d_hi), (b_hi, d_lo), (b_hi, d_hi)]

    if surface.beta5 != 0:
        for b in (b_lo, b_hi):
            d = -(surface.beta2 + surface.beta3 * b) / (2.0 * surface.beta5)
            if d_lo <= d <= d_hi:
                candidates.append((b, d))
    if surface.beta4 != 0:
        for d in (d_lo, d_hi):
            b = -(surface.beta1 + surface.beta3 * d) / (2.0 * surface.beta4)
            if b_lo <= b <= b_hi:
                candidates.append((b, d))

    point = surface_stationary_point(surface)
    if point.classification != "degenerate" and b_lo <= point.b <= b_hi and d_lo <= point.d <= d_hi:
        candidates.append((point.b, point.d))

    values = [float(surface.evaluate(b, d)) for b, d in candidates]
    low = int(np.argmin(values))
    high = int(np.argmax(values))
    return BoxExtrema(argmin=candidates[low], min=values[low], argmax=candidates[high], max=values[high])


def surface_grid(surface, box, steps=21):
    """Evaluation grid of the surface over the box, as columns b, d, T."""
    b_lo, b_hi, d_lo, d_hi = _check_box(box)
    if steps < 2:
        raise ParameterError(f"grid needs at least 2 steps per axis, got {steps}", field="steps")
    bb, dd = np.meshgrid(np.linspace(b_lo, b_hi, steps), np.linspace(d_lo, d_hi, steps), indexing="ij")
    return pd.DataFrame({"b": bb.ravel(), "d": dd.ravel(), "T": surface.evaluate(bb, dd).ravel()})
