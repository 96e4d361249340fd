"""
Leggett-Garg quantities from joint Gaussian readout statistics.

A readout y_i is dichotomized as Q_i = sgn(y_i). For a zero-mean bivariate
Gaussian with covariance [[A, B], [B, C]] the sign correlator is

    C_ij = (1 - 2*alpha/pi) * sgn(B),   alpha = arctan(sqrt(AC/B^2 - 1)).

With rho = B/sqrt(AC), tan(alpha) = sqrt(1 - rho^2)/|rho|, so
alpha = arccos(|rho|) and 1 - 2*alpha/pi = (2/pi)*arcsin(|rho|). Multiplying
by sgn(B) gives the arcsine law C_ij = (2/pi)*arcsin(rho), which is what is
evaluated here: it is continuous at B = 0 and well conditioned near |rho| = 1.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from errors import DomainError, ParameterError

PSD_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MeasurementRecord:
    """
    Joint statistics of performed S_y readouts.

    Attributes:
        labels (tuple): pulse or slot indices of the readouts, in order
        mu (ndarray): readout means
        gamma_y (ndarray): readout covariance matrix Gamma_Y, same order
    """

    labels: tuple
    mu: np.ndarray
    gamma_y: np.ndarray

    def __post_init__(self):
        labels = tuple(int(label) for label in self.labels)
        n = len(labels)
        mu = np.array(self.mu, dtype=float).reshape(n)
        gamma = np.array(self.gamma_y, dtype=float).reshape(n, n)
        if n:
            if not np.array_equal(gamma, gamma.T):
                gamma = 0.5 * (gamma + gamma.T)
            if np.any(np.diag(gamma) <= 0):
                raise DomainError("readout variances must be strictly positive")
        mu.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma_y", gamma)

    @property
    def n(self):
        return len(self.labels)

    def subset(self, labels):
        """Record restricted to the given labels, in the given order."""
        positions = [self.labels.index(label) for label in labels]
        return MeasurementRecord(
            labels=tuple(labels),
            mu=self.mu[positions],
            gamma_y=self.gamma_y[np.ix_(positions, positions)],
        )


@dataclass(frozen=True)
class LgiResult:
    """
    Pairwise correlators and the Leggett-Garg parameter K_n.

    Attributes:
        n (int): number of measurements
        correlators (ndarray): symmetric n x n matrix of C_ij, unit diagonal
        k_value (float): K_n
        k_reduced (float): K'_n = K_n / floor(n/2)
    """

    n: int
    correlators: np.ndarray
    k_value: float
    k_reduced: float

    @property
    def violated(self):
        return self.k_value < 0


def _arcsine_law(rho):
    values = (2.0 / math.pi) * np.arcsin(np.clip(rho, -1.0, 1.0))
    # alpha = 0 branch: fully (anti)correlated pairs give exactly +-1
    return np.where(np.abs(rho) >= 1.0, np.sign(rho), values)


def corr_sign(a, b, c):
    """
    Sign correlator <sgn(y_i) sgn(y_j)> of a zero-mean Gaussian pair.

    Args:
        a (float): var(y_i)
        b (float): cov(y_i, y_j)
        c (float): var(y_j)

    Returns:
        float: correlator in [-1, 1]; 0 when b == 0

    Raises:
        DomainError: if an entry is not finite, a or c is not positive, or
            b^2 > a*c beyond tolerance
    """
    if not all(math.isfinite(x) for x in (a, b, c)):
        raise DomainError(f"covariance entries must be finite, got a={a}, b={b}, c={c}")
    if not (a > 0 and c > 0):
        raise DomainError(f"variances must be positive, got a={a}, c={c}")
    if b * b > a * c * (1.0 + PSD_TOLERANCE):
        raise DomainError(f"matrix [[{a}, {b}], [{b}, {c}]] is not positive semidefinite")
    if b == 0:
        return 0.0
    return float(_arcsine_law(b / math.sqrt(a * c)))


def pairwise_correlators(record):
    """
    Correlator matrix of all readout pairs of a record.

    Args:
        record (MeasurementRecord): at least two readouts

    Returns:
        ndarray: symmetric matrix with C_ij off the diagonal and 1 on it
    """
    if record.n < 2:
        raise ParameterError(f"need at least 2 readouts for correlators, got {record.n}")
    gamma = record.gamma_y
    if not np.all(np.isfinite(gamma)):
        raise DomainError("readout covariance has non-finite entries")
    scale = np.sqrt(np.outer(np.diag(gamma), np.diag(gamma)))
    rho = gamma / scale
    excess = np.max(rho * rho) - 1.0
    if excess > PSD_TOLERANCE:
        raise DomainError(f"readout covariance is not positive semidefinite (|rho|^2 - 1 = {excess:.3g})")
    correlators = _arcsine_law(rho)
    np.fill_diagonal(correlators, 1.0)
    return correlators


def k_n(correlators):
    """
    Generalized Leggett-Garg parameter.

    K_n = sum_{j<i} C_ij + floor(n/2); macrorealism predicts K_n >= 0.

    Args:
        correlators (ndarray): n x n correlator matrix, n >= 3

    Returns:
        LgiResult: correlators with K_n and K'_n
    """
    correlators = np.asarray(correlators, dtype=float)
    n = correlators.shape[0]
    if correlators.shape != (n, n):
        raise ParameterError(f"correlator matrix must be square, got shape {correlators.shape}")
    if n < 3:
        raise ParameterError(f"K_n needs at least 3 measurements, got {n}")
    half = n // 2
    k_value = float(np.sum(correlators[np.tril_indices(n, k=-1)])) + half
    return LgiResult(n=n, correlators=correlators, k_value=k_value, k_reduced=k_value / half)


def k3_triple(correlators, a, b, c):
    """
    Three-point parameter C_ab + C_bc + C_ac + 1 for positions a < b < c.

    Positions are 0-based indices into the correlator matrix.
    """
    n = np.shape(correlators)[0]
    if not 0 <= a < b < c < n:
        raise ParameterError(f"triple ({a}, {b}, {c}) must satisfy 0 <= a < b < c < {n}")
    return float(correlators[a, b] + correlators[b, c] + correlators[a, c] + 1.0)


def macrorealist_minimum(n):
    """
    Smallest K_n over all 2^n deterministic +-1 assignments.

    Every macrorealist model is a convex mixture of these assignments, so this
    is the macrorealist lower bound of K_n (zero for every n >= 3).
    """
    if n < 3:
        raise ParameterError(f"K_n needs at least 3 measurements, got {n}")
    best = math.inf
    for signs in itertools.product((-1.0, 1.0), repeat=n):
        q = np.array(signs)
        best = min(best, k_n(np.outer(q, q)).k_value)
    return best
