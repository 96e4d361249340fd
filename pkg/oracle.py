"""
Monte-Carlo verifiers for the analytic pipeline.

- Gaussian sign sampling: draw readouts from Gamma_Y, dichotomize, average.
- Linear-map propagation: push samples of V through the same per-sample
  relations as the covariance updates.
- Per-pair sign sampling: re-draw every correlator of K_n from the run
  that produced it and add them up.
- Classical macrorealist twin: a rotating classical spin read out
  non-invasively, which satisfies K_n >= 0 by construction.

Sampling is split into fixed-size chunks, each with its own Philox stream
spawned from the seed, so estimates do not depend on the worker count.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from errors import DomainError, ParameterError
from gaussian_dynamics import JY, JZ, sy_index, sz_index
from protocol import SequenceSpec, run_sequence
from utils import parallel_map, spawn_generators

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 16
PROPAGATION_CHUNK_SIZE = 1 << 12
MIN_SIGN_SAMPLES = 1000
PSD_TOLERANCE = 1e-9


@dataclass(frozen=True)
class McEstimate:
    """
    A Monte-Carlo estimate.

    Attributes:
        value (float): sample mean
        std_error (float): standard error of the mean
        n_samples (int): number of samples drawn
        seed (int): seed the streams were spawned from
    """

    value: float
    std_error: float
    n_samples: int
    seed: int

    def within(self, expected, sigmas):
        """True when expected lies within the given number of standard errors."""
        return abs(self.value - expected) <= sigmas * self.std_error


@dataclass(frozen=True)
class McMatrix:
    """Entrywise Monte-Carlo estimate of a matrix (covariances or correlators)."""

    value: np.ndarray
    std_error: np.ndarray
    n_samples: int
    seed: int


def _chunk_sizes(n_samples, chunk_size):
    full, rest = divmod(int(n_samples), chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def _accumulate(n_samples, seed, draw, workers, chunk_size=CHUNK_SIZE):
    """
    Run draw(rng, size) -> (size, ...) per chunk; merge sums and sums of squares.

    Returns:
        tuple: (mean, variance of one sample) arrays
    """
    sizes = _chunk_sizes(n_samples, chunk_size)
    streams = spawn_generators(seed, len(sizes))
    logger.debug("Drawing %d samples in %d chunks", n_samples, len(sizes))

    def run(job):
        rng, size = job
        values = draw(rng, size)
        return values.sum(axis=0), (values * values).sum(axis=0)

    partials = parallel_map(run, list(zip(streams, sizes)), workers)
    total = sum(p[0] for p in partials)
    total_sq = sum(p[1] for p in partials)
    mean = total / n_samples
    variance = np.maximum(total_sq / n_samples - mean * mean, 0.0)
    return mean, variance


def _gaussian_factor(gamma):
    """
    Matrix F with F F^T = gamma from the spectral decomposition.

    Eigenvalues below -1e-9*trace are rejected; the remaining negative or
    numerically zero ones are clamped to 0.
    """
    gamma = np.asarray(gamma, dtype=float)
    trace = float(np.trace(gamma))
    eigenvalues, eigenvectors = eigh(gamma)
    if eigenvalues[0] < -PSD_TOLERANCE * trace:
        raise DomainError(f"covariance is not PSD (smallest eigenvalue {eigenvalues[0]:.6g})")
    eigenvalues = np.where(eigenvalues <= 1e-12 * trace, 0.0, eigenvalues)
    return eigenvectors * np.sqrt(eigenvalues)


def _check_samples(n_samples, minimum=1):
    if int(n_samples) != n_samples or n_samples < minimum:
        raise ParameterError(f"n_samples must be an integer >= {minimum}, got {n_samples!r}")
    return int(n_samples)


def _sign_sampler(gamma, mu=None):
    factor = _gaussian_factor(gamma)
    mu = np.zeros(factor.shape[0]) if mu is None else np.asarray(mu, dtype=float)

    def signs(rng, size):
        y = rng.standard_normal((size, factor.shape[1])) @ factor.T + mu
        return np.sign(y)

    return signs


def mc_sign_corr(gamma_y_2x2, n_samples, seed, workers=1):
    """
    Empirical <sgn(y_1) sgn(y_2)> of a zero-mean Gaussian pair.

    Args:
        gamma_y_2x2 (array): 2x2 PSD covariance
        n_samples (int): at least 1000
        seed (int): stream seed

    Returns:
        McEstimate: sign-product mean with binomial-type standard error
    """
    gamma = np.asarray(gamma_y_2x2, dtype=float)
    if gamma.shape != (2, 2):
        raise ParameterError(f"expected a 2x2 covariance, got shape {gamma.shape}")
    n_samples = _check_samples(n_samples, MIN_SIGN_SAMPLES)
    signs = _sign_sampler(gamma)

    def products(rng, size):
        q = signs(rng, size)
        return q[:, 0] * q[:, 1]

    mean, variance = _accumulate(n_samples, seed, products, workers)
    return McEstimate(float(mean), float(math.sqrt(variance / n_samples)), n_samples, seed)


def _kn_statistic(q):
    # sum_{j<i} Q_i Q_j = ((sum Q)^2 - n) / 2 for Q = +-1
    n = q.shape[1]
    total = q.sum(axis=1)
    return (total * total - n) / 2 + n // 2


def mc_gaussian_kn(record, n_samples, seed, workers=1):
    """
    Empirical K_n of the dichotomized joint readouts of a record.

    A two-readout record gives C_12 + 1, drawn from the same samples as
    mc_sign_corr with the same seed.
    """
    if record.n < 2:
        raise ParameterError(f"need at least 2 readouts, got {record.n}")
    n_samples = _check_samples(n_samples)
    signs = _sign_sampler(record.gamma_y, record.mu)
    mean, variance = _accumulate(n_samples, seed, lambda rng, size: _kn_statistic(signs(rng, size)), workers)
    return McEstimate(float(mean), float(math.sqrt(variance / n_samples)), n_samples, seed)


def mc_witness_kn(table, spec, params, n_samples, seed, workers=1):
    """
    K_n rebuilt from independent sign samples of every correlator's own run.

    Each pair (i, j) of the table is re-simulated with the slots of its mask
    and sampled with stream seed [seed, k] for the k-th pair, so the pairs are
    independent and the standard errors add in quadrature.

    Args:
        table (CorrelatorTable): per-pair correlators and masks
        spec (SequenceSpec): sequence the table was built for
        params (PhysicalParams): physical parameters
        n_samples (int): samples per pair, at least 1000

    Returns:
        McEstimate: K_n = sum C_ij + floor(n/2)
    """
    n = len(table.labels)
    if n < 3:
        raise ParameterError(f"K_n needs at least 3 measurements, got {n}")
    total, variance = float(n // 2), 0.0
    for index, (pair, mask) in enumerate(sorted(table.masks.items())):
        run = SequenceSpec.from_slots(
            spec.n_slots, spec.theta, mask,
            back_action_on=spec.back_action_on, scattering_on=spec.scattering_on,
        )
        gamma = run_sequence(run, params).subset(pair).gamma_y
        estimate = mc_sign_corr(gamma, n_samples, [seed, index], workers)
        total += estimate.value
        variance += estimate.std_error ** 2
    return McEstimate(total, math.sqrt(variance), _check_samples(n_samples), seed)


def default_readout_noise(params):
    """Shot noise sqrt(N_L/4) referred to J_z units through the gain g N_L/2."""
    if params.signal_gain == 0:
        raise ParameterError("readout noise in J_z units is unbounded for g = 0")
    return math.sqrt(params.n_photons / 4) / params.signal_gain


def default_spin_variance(params):
    """Coherent-spin-state variance N_A/2 of J_y and J_z, the scale default_readout_noise is in."""
    return params.n_atoms / 2


def _macrorealist_sampler(n, theta, readout_noise, spin_variance, slots):
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    if readout_noise < 0 or spin_variance <= 0:
        raise ParameterError("readout_noise must be >= 0 and spin_variance > 0")
    phases = theta * np.arange(n)
    # J_z(t_i) = J_y sin(phi_i) + J_z cos(phi_i) for rotation about x
    weights = np.stack([np.sin(phases), np.cos(phases)])
    columns = np.asarray(slots) - 1
    spin_std = math.sqrt(spin_variance)

    def signs(rng, size):
        spins = spin_std * rng.standard_normal((size, 2))
        noise = readout_noise * rng.standard_normal((size, n))
        readouts = spins @ weights + noise
        return np.sign(readouts[:, columns])

    return signs


def mc_macrorealist_kn(n, theta, readout_noise, n_samples, seed, spin_variance=1.0, workers=1):
    """
    K_n of the classical non-invasive rotating-spin model.

    Initial (J_y, J_z) are Gaussian with variance spin_variance, rotate by
    theta per slot and are read at every slot as sgn(J_z(t_i) + noise).
    The default spin_variance of 1 is a unit scale; pass
    default_spin_variance(params) to pair it with default_readout_noise(params).
    """
    if n < 3:
        raise ParameterError(f"K_n needs at least 3 measurements, got {n}")
    n_samples = _check_samples(n_samples)
    signs = _macrorealist_sampler(n, theta, readout_noise, spin_variance, range(1, n + 1))
    mean, variance = _accumulate(n_samples, seed, lambda rng, size: _kn_statistic(signs(rng, size)), workers)
    return McEstimate(float(mean), float(math.sqrt(variance / n_samples)), n_samples, seed)


def mc_macrorealist_correlators(n, theta, readout_noise, n_samples, seed, performed=None,
                                spin_variance=1.0, workers=1):
    """
    Pair correlators of the classical model, reading only the performed slots.

    Args:
        performed (list, optional): 1-based slots read out; defaults to all

    Returns:
        McMatrix: correlators among the performed slots, in slot order
    """
    slots = sorted(performed) if performed is not None else list(range(1, n + 1))
    if not slots or slots[0] < 1 or slots[-1] > n:
        raise ParameterError(f"performed slots {slots} outside 1..{n}")
    n_samples = _check_samples(n_samples)
    signs = _macrorealist_sampler(n, theta, readout_noise, spin_variance, slots)

    def products(rng, size):
        q = signs(rng, size)
        return q[:, :, None] * q[:, None, :]

    mean, variance = _accumulate(n_samples, seed, products, workers)
    return McMatrix(mean, np.sqrt(variance / n_samples), n_samples, seed)


def mc_propagate(spec, params, n_samples, seed, workers=1):
    """
    Empirical covariance of V after a sequence, from per-sample propagation.

    Each sample starts from the initial Gaussian and goes through the same
    linear relations as the covariance updates: rotation of (J_y, J_z), the
    QND map M_Q, and for scattering J -> chi J + w with var(w) equal to the
    injected noise.

    Returns:
        McMatrix: covariance estimate and entrywise standard errors
            sqrt((C_ij^2 + C_ii C_jj) / N)
    """
    n_samples = _check_samples(n_samples, 2)
    n_pulses = len(spec.performed_slots)
    dim = 2 + 2 * n_pulses
    initial_std = np.sqrt([params.n_atoms / 2] * 2 + [params.n_photons / 4] * (2 * n_pulses))
    c, s = math.cos(spec.theta), math.sin(spec.theta)
    rotation = np.array([[c, -s], [s, c]])
    chi = params.chi
    noise_std = math.sqrt(params.loss_noise)

    def draw(rng, size):
        v = rng.standard_normal((size, dim)) * initial_std
        jx = float(params.n_atoms)
        pulse = 0
        for slot in range(1, spec.n_slots + 1):
            if slot > 1:
                v[:, :2] = v[:, :2] @ rotation.T
            if not spec.performed[slot - 1]:
                continue
            pulse += 1
            m_q = np.eye(dim)
            m_q[sy_index(pulse), JZ] = params.g * params.sx
            if spec.back_action_on:
                m_q[JY, sz_index(pulse)] = params.g * jx
            v = v @ m_q.T
            if spec.scattering_on and chi != 1.0:
                v[:, :2] = chi * v[:, :2] + noise_std * rng.standard_normal((size, 2))
                if params.polarization_decay:
                    jx *= chi
        return np.concatenate([v, (v[:, :, None] * v[:, None, :]).reshape(size, -1)], axis=1)

    mean, _ = _accumulate(n_samples, seed, draw, workers, PROPAGATION_CHUNK_SIZE)
    first, second = mean[:dim], mean[dim:].reshape(dim, dim)
    cov = second - np.outer(first, first)
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov)
    std_error = np.sqrt((cov * cov + np.outer(diag, diag)) / n_samples)
    return McMatrix(cov, std_error, n_samples, seed)
