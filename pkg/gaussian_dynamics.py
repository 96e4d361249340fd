"""
Gaussian atom-light state and the three primitive transformations.

The state is the mean vector and covariance matrix of
V = (J_y, J_z, S_y^(1), S_z^(1), ..., S_y^(n), S_z^(n)).
The large x-polarizations <J_x> and <S_x> are carried as classical scalars
(jx, sx) and enter the QND map as c-numbers.

All operations take a state and return a new one; nothing is mutated.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import block_diag, eigvalsh

from errors import DomainError, ParameterError, SequencingError
from lgi_metrics import MeasurementRecord

# Atomic coordinates in V
JY = 0
JZ = 1

PSD_TOLERANCE = 1e-9
UNCERTAINTY_TOLERANCE = 1e-9


def sy_index(pulse_index):
    """Position of S_y of a 1-based pulse index in V."""
    return 2 * pulse_index


def sz_index(pulse_index):
    """Position of S_z of a 1-based pulse index in V."""
    return 2 * pulse_index + 1


@dataclass(frozen=True)
class PhysicalParams:
    """
    Physical parameters of the atom-light system.

    Attributes:
        g (float): atom-light coupling per pulse
        n_atoms (float): number of atoms N_A
        n_photons (float): photons per light pulse N_L
        eta (float): per-photon scattering parameter
        polarization_decay (bool): scattering also shrinks <J_x>, and with it
            the back-action gain g*jx; off keeps jx at N_A
    """

    g: float = 1e-7
    n_atoms: float = 1e6
    n_photons: float = 5e8
    eta: float = 0.5e-9
    polarization_decay: bool = False

    def __post_init__(self):
        for name in ("g", "n_atoms", "n_photons", "eta"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f"{name} must be a finite real number, got {value!r}")
        if not isinstance(self.polarization_decay, bool):
            raise ParameterError(f"polarization_decay must be a bool, got {self.polarization_decay!r}")
        if self.n_atoms <= 0:
            raise ParameterError(f"n_atoms must be positive, got {self.n_atoms}")
        if self.n_photons <= 0:
            raise ParameterError(f"n_photons must be positive, got {self.n_photons}")
        if self.eta < 0:
            raise ParameterError(f"eta must be non-negative, got {self.eta}")
        if self.chi <= 0.0:
            raise ParameterError(f"eta*n_photons = {self.eta * self.n_photons} leaves no unscattered atoms")

    @property
    def chi(self):
        """Fraction of atoms that do not scatter a photon, exp(-eta*N_L)."""
        return math.exp(-self.eta * self.n_photons)

    @property
    def sx(self):
        """Classical <S_x> of a fresh pulse."""
        return self.n_photons / 2

    @property
    def signal_gain(self):
        """Gain g*<S_x> with which J_z is imprinted on S_y."""
        return self.g * self.sx

    @property
    def loss_noise(self):
        """Variance N_A(1-chi)(chi/2 + 2/3) added to J_y and J_z by scattering."""
        chi = self.chi
        return self.n_atoms * (1.0 - chi) * (chi / 2 + 2.0 / 3.0)


@dataclass(frozen=True)
class CollectiveState:
    """
    Mean and covariance of the quantum components plus classical polarizations.

    Attributes:
        n_slots (int): number of allocated pulse modes
        mean (ndarray): mean of V, length 2 + 2*n_slots
        cov (ndarray): symmetric covariance of V
        jx (float): classical <J_x>
        sx (float): classical <S_x> of each fresh pulse
        g (float): coupling used by the QND map
        pulses_used (int): pulses already interacted
    """

    n_slots: int
    mean: np.ndarray
    cov: np.ndarray
    jx: float
    sx: float
    g: float
    pulses_used: int = 0

    def __post_init__(self):
        dim = 2 + 2 * self.n_slots
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (dim,) or cov.shape != (dim, dim):
            raise ParameterError(
                f"state with {self.n_slots} slots needs mean ({dim},) and cov ({dim}, {dim}), "
                f"got {mean.shape} and {cov.shape}"
            )
        if not 0 <= self.pulses_used <= self.n_slots:
            raise SequencingError(f"pulses_used={self.pulses_used} outside [0, {self.n_slots}]")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return 2 + 2 * self.n_slots

    @property
    def atomic_cov(self):
        return self.cov[:2, :2]

    @property
    def var_jy(self):
        return float(self.cov[JY, JY])

    @property
    def var_jz(self):
        return float(self.cov[JZ, JZ])


def _symmetrize(cov):
    return 0.5 * (cov + cov.T)


def init_state(params, n_slots):
    """
    Build the fully x-polarized initial state.

    Atoms start in a coherent spin state, var(J_y) = var(J_z) = N_A/2; every
    pulse starts at shot noise, var(S_y) = var(S_z) = N_L/4. All means are zero.

    Args:
        params (PhysicalParams): physical parameters
        n_slots (int): number of pulse modes to allocate

    Returns:
        CollectiveState: the initial state
    """
    if not isinstance(params, PhysicalParams):
        raise ParameterError("params must be a PhysicalParams instance")
    if int(n_slots) != n_slots or n_slots < 1:
        raise ParameterError(f"n_slots must be an integer >= 1, got {n_slots!r}")
    n_slots = int(n_slots)

    atoms = np.diag([params.n_atoms / 2, params.n_atoms / 2])
    pulse = np.diag([params.n_photons / 4, params.n_photons / 4])
    cov = block_diag(atoms, *([pulse] * n_slots))
    return CollectiveState(
        n_slots=n_slots,
        mean=np.zeros(2 + 2 * n_slots),
        cov=cov,
        jx=float(params.n_atoms),
        sx=params.sx,
        g=float(params.g),
    )


def rotate(state, theta):
    """
    Larmor precession about x by angle theta.

    (J_y, J_z) -> (J_y cos(theta) - J_z sin(theta), J_y sin(theta) + J_z cos(theta))
    is applied to the atomic means, the atomic block and the atom-light
    cross-covariances. Light blocks and jx are untouched.
    """
    if not math.isfinite(theta):
        raise ParameterError(f"theta must be finite, got {theta!r}")
    theta = math.fmod(theta, 2 * math.pi)
    if theta == 0.0:
        return state

    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])

    mean = state.mean.copy()
    mean[:2] = rot @ state.mean[:2]

    cov = state.cov.copy()
    rows = rot @ state.cov[:2, :]
    cov[:2, :] = rows
    cov[:, :2] = rows.T
    cov[:2, :2] = _symmetrize(rot @ state.atomic_cov @ rot.T)
    return replace(state, mean=mean, cov=cov)


def _check_next_pulse(state, pulse_index):
    if pulse_index != state.pulses_used + 1:
        raise SequencingError(
            f"pulse {pulse_index} requested but pulse {state.pulses_used + 1} is next"
        )
    if pulse_index > state.n_slots:
        raise SequencingError(f"pulse {pulse_index} exceeds the {state.n_slots} allocated slots")


def qnd_matrix(state, pulse_index, back_action_on=True):
    """
    Explicit linear map M_Q of one QND interaction.

    M_Q is the identity except for the light back-action entry
    S_y^(i) <- g*sx*J_z (block B_l) and, when back action is on, the atomic
    entry J_y <- g*jx*S_z^(i) (block B_at).

    Args:
        state (CollectiveState): state the pulse acts on
        pulse_index (int): 1-based index of the pulse, must be the next one
        back_action_on (bool): keep the B_at block

    Returns:
        ndarray: the (dim, dim) matrix M_Q
    """
    _check_next_pulse(state, pulse_index)
    m_q = np.eye(state.dim)
    m_q[sy_index(pulse_index), JZ] = state.g * state.sx
    if back_action_on:
        m_q[JY, sz_index(pulse_index)] = state.g * state.jx
    return m_q


def qnd_update(state, pulse_index, back_action_on=True):
    """
    Apply the QND interaction of the next pulse.

    Equivalent to mean -> M_Q mean and cov -> M_Q cov M_Q^T with M_Q from
    qnd_matrix. The map is applied as row and column updates, so every entry
    where M_Q acts as the identity (the whole J_z row and column) is carried
    over bit for bit.
    """
    _check_next_pulse(state, pulse_index)
    sy, sz = sy_index(pulse_index), sz_index(pulse_index)
    signal = state.g * state.sx
    kick = state.g * state.jx

    mean = state.mean.copy()
    cov = state.cov.copy()

    mean[sy] += signal * mean[JZ]
    cov[sy, :] += signal * cov[JZ, :]
    cov[:, sy] += signal * cov[:, JZ]

    if back_action_on:
        mean[JY] += kick * mean[sz]
        cov[JY, :] += kick * cov[sz, :]
        cov[:, JY] += kick * cov[:, sz]

    return replace(state, mean=mean, cov=_symmetrize(cov), pulses_used=pulse_index)


def loss_update(state, params):
    """
    Off-resonant scattering: a fraction 1 - chi of the atoms is lost.

    Gamma_J -> chi^2 Gamma_J + N_A(1-chi)(chi/2 + 2/3) 1; the atomic means and
    the atom-light cross-covariances scale by chi. jx scales by chi only with
    params.polarization_decay; otherwise jx is left as it is.
    """
    chi = params.chi
    if chi == 1.0:
        return state

    mean = state.mean.copy()
    mean[:2] *= chi

    cov = state.cov.copy()
    cov[:2, :] *= chi
    cov[:, :2] *= chi
    cov[:2, :2] += params.loss_noise * np.eye(2)
    jx = state.jx * chi if params.polarization_decay else state.jx
    return replace(state, mean=mean, cov=cov, jx=jx)


def pulse_step(state, params, back_action_on=True, scattering_on=True):
    """Fire the next light pulse: QND interaction, then scattering loss if enabled."""
    state = qnd_update(state, state.pulses_used + 1, back_action_on)
    if scattering_on:
        state = loss_update(state, params)
    return state


def readout_cov(state, performed):
    """
    Joint statistics of the S_y readouts of already fired pulses.

    Args:
        state (CollectiveState): state after the pulses
        performed (list): 1-based pulse indices, in the desired order

    Returns:
        MeasurementRecord: means and covariance of the listed readouts
    """
    performed = tuple(int(p) for p in performed)
    for pulse in performed:
        if not 1 <= pulse <= state.pulses_used:
            raise SequencingError(
                f"pulse {pulse} has not been fired ({state.pulses_used} pulses used)"
            )
    idx = [sy_index(p) for p in performed]
    return MeasurementRecord(
        labels=performed,
        mu=state.mean[idx],
        gamma_y=state.cov[np.ix_(idx, idx)],
    )


def validate_state(state):
    """
    Check the structural invariants of a state.

    Raises:
        DomainError: if cov is not symmetric, not PSD within tolerance, or the
            atomic block violates var(J_y) var(J_z) >= jx^2/4
    """
    cov = state.cov
    scale = max(float(np.max(np.abs(cov))), 1.0)
    if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
        raise DomainError("covariance matrix is not symmetric")

    trace = float(np.trace(cov))
    smallest = float(eigvalsh(cov)[0])
    if smallest < -PSD_TOLERANCE * trace:
        raise DomainError(f"covariance matrix is not PSD (smallest eigenvalue {smallest:.6g})")

    if state.jx < 0:
        raise DomainError(f"negative x-polarization {state.jx}")

    product = state.var_jy * state.var_jz
    bound = state.jx ** 2 / 4
    if product < bound * (1.0 - UNCERTAINTY_TOLERANCE):
        raise DomainError(
            f"uncertainty relation violated: var(J_y)*var(J_z) = {product:.6g} < {bound:.6g}"
        )
