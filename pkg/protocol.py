"""
Experiment orchestration: equally spaced pulse sequences, angle sweeps,
three-point optimization inside longer sequences, and the two-pulse
disturbance audit.

A macrorealist holds that C_ij does not depend on which other slots were
measured, so every correlator entering K_n or K_3 may be taken from its own
sequence. With discarded="fired" each C_ij is the lowest value over the
sequences that contain slots i and j (the other slots fire and are
discarded); with discarded="skipped" only the slots of the pair (or triple)
fire. All readouts of one sequence share a joint +-1 distribution, so K_n
of a single run can never be negative.
"""

import itertools
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from errors import ParameterError
from gaussian_dynamics import init_state, pulse_step, readout_cov, rotate
from lgi_metrics import MeasurementRecord, k3_triple, k_n, pairwise_correlators
from utils import parallel_map

logger = logging.getLogger(__name__)

MAX_OPTIMIZER_SLOTS = 12
DEFAULT_GRID_POINTS = 512
TIE_TOLERANCE = 1e-12
DISCARD_MODES = ("fired", "skipped")


@dataclass(frozen=True)
class SequenceSpec:
    """
    An equally spaced sequence of measurement slots.

    Attributes:
        n_slots (int): number of time slots
        theta (float): rotation angle between consecutive slots
        performed (tuple): one flag per slot; None means every slot fires
        back_action_on (bool): keep the atomic back-action block of M_Q
        scattering_on (bool): apply scattering loss after each pulse
    """

    n_slots: int
    theta: float
    performed: tuple = None
    back_action_on: bool = True
    scattering_on: bool = True

    def __post_init__(self):
        if int(self.n_slots) != self.n_slots or self.n_slots < 1:
            raise ParameterError(f"n_slots must be an integer >= 1, got {self.n_slots!r}")
        if not math.isfinite(self.theta):
            raise ParameterError(f"theta must be finite, got {self.theta!r}")
        performed = self.performed
        if performed is None:
            performed = (True,) * int(self.n_slots)
        performed = tuple(bool(flag) for flag in performed)
        if len(performed) != self.n_slots:
            raise ParameterError(f"performed mask has {len(performed)} entries for {self.n_slots} slots")
        object.__setattr__(self, "n_slots", int(self.n_slots))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "performed", performed)

    @classmethod
    def from_slots(cls, n_slots, theta, slots, **toggles):
        """Build a spec whose performed slots are the given 1-based indices."""
        slots = set(slots)
        if not slots <= set(range(1, n_slots + 1)):
            raise ParameterError(f"performed slots {sorted(slots)} outside 1..{n_slots}")
        return cls(n_slots, theta, tuple(i in slots for i in range(1, n_slots + 1)), **toggles)

    @property
    def performed_slots(self):
        return tuple(i for i, flag in enumerate(self.performed, start=1) if flag)


@dataclass(frozen=True)
class SweepRow:
    theta: float
    n: int
    k_value: float
    k_reduced: float
    back_action_on: bool
    scattering_on: bool


@dataclass(frozen=True)
class SweepResult:
    """Rows of an angle sweep, in grid order."""

    rows: tuple

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    @property
    def thetas(self):
        return np.array([row.theta for row in self.rows])

    @property
    def k_reduced(self):
        return np.array([row.k_reduced for row in self.rows])

    def min_reduced(self):
        return float(np.min(self.k_reduced))


@dataclass(frozen=True)
class CorrelatorTable:
    """
    Per-pair correlators of a sequence, each from its own run.

    Attributes:
        labels (tuple): 1-based performed slots, in time order
        correlators (ndarray): symmetric matrix indexed like labels, 1 on the diagonal
        masks (dict): (i, j) -> slots fired up to and including j in the run
            that produced C_ij
    """

    labels: tuple
    correlators: np.ndarray
    masks: dict


@dataclass(frozen=True)
class TripleCandidate:
    k3: float
    correlators: tuple
    masks: tuple


@dataclass(frozen=True)
class TripleResult:
    """
    Best three-point parameter found for one angle.

    Attributes:
        theta (float): rotation angle between slots
        n_slots (int): sequence length searched
        k3 (float): C_ab + C_bc + C_ac + 1 of the witness
        triple (tuple): 1-based slots (a, b, c) entering K_3
        correlators (tuple): (C_ab, C_bc, C_ac)
        masks (tuple): fired slots of the run behind each correlator, in the
            same order; slots outside the triple are performed but discarded
        back_action_on (bool)
        scattering_on (bool)
    """

    theta: float
    n_slots: int
    k3: float
    triple: tuple
    correlators: tuple
    masks: tuple
    back_action_on: bool
    scattering_on: bool


@dataclass(frozen=True)
class AuditResult:
    """Differences between two identical readouts taken in quick succession."""

    mean_diff: float
    var_diff: float


def run_sequence(spec, params):
    """
    Simulate a sequence and return the joint statistics of its readouts.

    Slot 1 is measured before any rotation; every later slot is preceded by a
    rotation of theta. Unperformed slots advance time but fire no light.

    Args:
        spec (SequenceSpec): the sequence
        params (PhysicalParams): physical parameters

    Returns:
        MeasurementRecord: readouts labelled by their 1-based slot index
    """
    slots = spec.performed_slots
    if len(slots) < 2:
        raise ParameterError(f"a sequence needs at least 2 performed slots, got {len(slots)}")

    state = init_state(params, len(slots))
    for slot in range(1, spec.n_slots + 1):
        if slot > 1:
            state = rotate(state, spec.theta)
        if spec.performed[slot - 1]:
            state = pulse_step(state, params, spec.back_action_on, spec.scattering_on)

    record = readout_cov(state, range(1, len(slots) + 1))
    return MeasurementRecord(labels=slots, mu=record.mu, gamma_y=record.gamma_y)


def _check_discarded(discarded):
    if discarded not in DISCARD_MODES:
        raise ParameterError(f"discarded must be one of {DISCARD_MODES}, got {discarded!r}")


def _improves(candidate, incumbent):
    k_new, mask_new = candidate
    k_old, mask_old = incumbent
    if k_new < k_old - TIE_TOLERANCE:
        return True
    return abs(k_new - k_old) <= TIE_TOLERANCE and mask_new < mask_old


def _keep_lowest(table, key, value, mask):
    if key not in table or _improves((value, mask), table[key]):
        table[key] = (value, mask)


def _walk_fired(spec, params, slots):
    """
    Depth-first walk over every choice of which allowed slots fire.

    Yields (fired, state) right after each pulse, so every fired prefix is
    visited exactly once and shares its history with all of its extensions.
    """
    last = spec.n_slots

    def walk(slot, fired, state):
        if slot > 1:
            state = rotate(state, spec.theta)
        if slot in slots:
            lit = pulse_step(state, params, spec.back_action_on, spec.scattering_on)
            now = fired + (slot,)
            yield now, lit
            if slot < last:
                yield from walk(slot + 1, now, lit)
        if slot < last:
            yield from walk(slot + 1, fired, state)

    yield from walk(1, (), init_state(params, len(slots)))


def _latest_correlations(state, n_fired):
    """C between the newest readout and every earlier one, oldest first."""
    return pairwise_correlators(readout_cov(state, range(1, n_fired + 1)))[-1, :-1]


def _pair_correlator(spec, params, pair):
    only = SequenceSpec.from_slots(
        spec.n_slots, spec.theta, pair,
        back_action_on=spec.back_action_on, scattering_on=spec.scattering_on,
    )
    return float(pairwise_correlators(run_sequence(only, params))[0, 1])


def best_correlators(spec, params, discarded="fired"):
    """
    Lowest correlator of every pair of performed slots, each from its own run.

    With discarded="fired" C_ij is minimised over every subset of the
    performed slots that contains i and j; the other slots fire and their
    outcomes are dropped. Slots after j cannot change C_ij, so the reported
    mask stops at j. With discarded="skipped" only i and j fire.
    Ties within TIE_TOLERANCE go to the lexicographically smallest mask.

    Args:
        spec (SequenceSpec): sequence whose performed slots are the candidates
        params (PhysicalParams): physical parameters
        discarded (str): "fired" or "skipped"

    Returns:
        CorrelatorTable: correlators and the run behind each one
    """
    _check_discarded(discarded)
    slots = spec.performed_slots
    if len(slots) < 2:
        raise ParameterError(f"a sequence needs at least 2 performed slots, got {len(slots)}")

    best = {}
    if discarded == "fired":
        if len(slots) > MAX_OPTIMIZER_SLOTS:
            raise ParameterError(
                f"discarded=fired searches at most {MAX_OPTIMIZER_SLOTS} performed slots, got {len(slots)}"
            )
        for fired, state in _walk_fired(spec, params, set(slots)):
            if len(fired) < 2:
                continue
            latest = _latest_correlations(state, len(fired))
            for earlier, value in zip(fired[:-1], latest):
                _keep_lowest(best, (earlier, fired[-1]), float(value), fired)
    else:
        for pair in itertools.combinations(slots, 2):
            best[pair] = (_pair_correlator(spec, params, pair), pair)

    position = {slot: p for p, slot in enumerate(slots)}
    correlators = np.eye(len(slots))
    for (i, j), (value, _) in best.items():
        correlators[position[i], position[j]] = correlators[position[j], position[i]] = value
    return CorrelatorTable(
        labels=slots,
        correlators=correlators,
        masks={pair: mask for pair, (_, mask) in best.items()},
    )


def evaluate_sequence(spec, params, discarded="fired"):
    """K_n over the performed slots, every correlator taken from its best run."""
    return k_n(best_correlators(spec, params, discarded).correlators)


def make_theta_grid(start=0.0, stop=2 * math.pi, points=DEFAULT_GRID_POINTS):
    """Uniform angle grid with both endpoints included."""
    if points < 1:
        raise ParameterError(f"theta grid needs at least one point, got {points}")
    return np.linspace(start, stop, int(points))


def _check_grid(theta_grid):
    grid = np.asarray(theta_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ParameterError("theta grid is empty")
    if not np.all(np.isfinite(grid)):
        raise ParameterError("theta grid contains non-finite angles")
    if np.any(np.diff(grid) <= 0):
        raise ParameterError("theta grid must be strictly increasing")
    return grid


def sweep_theta(template, params, theta_grid, workers=1, discarded="fired"):
    """
    Evaluate K_n and K'_n of a sequence template at every grid angle.

    Args:
        template (SequenceSpec): sequence whose theta is replaced per point
        params (PhysicalParams): physical parameters
        theta_grid (array): strictly increasing angles
        workers (int): worker threads; results are merged in grid order
        discarded (str): how the run behind each correlator is chosen

    Returns:
        SweepResult: one row per angle
    """
    grid = _check_grid(theta_grid)
    _check_discarded(discarded)
    logger.info(
        "Sweeping %d angles for n=%d (back action %s, scattering %s, discarded %s)",
        grid.size, len(template.performed_slots),
        "on" if template.back_action_on else "off",
        "on" if template.scattering_on else "off",
        discarded,
    )

    def evaluate(theta):
        result = evaluate_sequence(replace(template, theta=float(theta)), params, discarded)
        return SweepRow(
            theta=float(theta),
            n=result.n,
            k_value=result.k_value,
            k_reduced=result.k_reduced,
            back_action_on=template.back_action_on,
            scattering_on=template.scattering_on,
        )

    return SweepResult(rows=tuple(parallel_map(evaluate, grid, workers)))


def _check_optimizer_slots(n_slots):
    if int(n_slots) != n_slots or not 3 <= n_slots <= MAX_OPTIMIZER_SLOTS:
        raise ParameterError(f"triple search needs 3 <= n_slots <= {MAX_OPTIMIZER_SLOTS}, got {n_slots!r}")


def _fired_triples(spec, params):
    # C_ab never sees slots after b, so its best run is the pair's best run
    pairs, bc, ac = {}, {}, {}
    for fired, state in _walk_fired(spec, params, set(range(1, spec.n_slots + 1))):
        if len(fired) < 2:
            continue
        latest = [float(value) for value in _latest_correlations(state, len(fired))]
        c = fired[-1]
        for p, earlier in enumerate(fired[:-1]):
            _keep_lowest(pairs, (earlier, c), latest[p], fired)
        for p, q in itertools.combinations(range(len(fired) - 1), 2):
            triple = (fired[p], fired[q], c)
            _keep_lowest(bc, triple, latest[q], fired)
            _keep_lowest(ac, triple, latest[p], fired)

    table = {}
    for (a, b, c), (c_bc, mask_bc) in bc.items():
        c_ab, mask_ab = pairs[(a, b)]
        c_ac, mask_ac = ac[(a, b, c)]
        table[(a, b, c)] = TripleCandidate(
            k3=c_ab + c_bc + c_ac + 1.0,
            correlators=(c_ab, c_bc, c_ac),
            masks=(tuple(sorted(set(mask_ab) | {c})), mask_bc, mask_ac),
        )
    return table


def _skipped_triples(spec, params):
    table = {}
    for triple in itertools.combinations(range(1, spec.n_slots + 1), 3):
        only = SequenceSpec.from_slots(
            spec.n_slots, spec.theta, triple,
            back_action_on=spec.back_action_on, scattering_on=spec.scattering_on,
        )
        correlators = pairwise_correlators(run_sequence(only, params))
        table[triple] = TripleCandidate(
            k3=k3_triple(correlators, 0, 1, 2),
            correlators=(float(correlators[0, 1]), float(correlators[1, 2]), float(correlators[0, 2])),
            masks=(triple,) * 3,
        )
    return table


def scan_triples(n_slots, theta, params, back_action_on=True, scattering_on=True, discarded="fired"):
    """
    Best K_3 of every triple, each correlator from its own run.

    With discarded="fired" each of C_ab, C_bc and C_ac is minimised over the
    runs that fire all three slots of the triple plus any others, whose
    outcomes are discarded. With discarded="skipped" only the triple fires.

    Returns:
        dict: triple -> TripleCandidate
    """
    _check_optimizer_slots(n_slots)
    _check_discarded(discarded)
    spec = SequenceSpec(n_slots, theta, back_action_on=back_action_on, scattering_on=scattering_on)
    logger.debug("Scanning triples for n_slots=%d at theta=%.6g (%s)", n_slots, theta, discarded)
    if discarded == "fired":
        return _fired_triples(spec, params)
    return _skipped_triples(spec, params)


def optimize_triple(n_slots, theta, params, back_action_on=True, scattering_on=True, discarded="fired"):
    """
    Minimum K_3 over all triples.

    Ties within 1e-12 go to the lexicographically smallest triple.

    Returns:
        TripleResult: the optimal witness
    """
    table = scan_triples(n_slots, theta, params, back_action_on, scattering_on, discarded)
    lowest = min(candidate.k3 for candidate in table.values())
    triple = min(triple for triple, candidate in table.items() if candidate.k3 <= lowest + TIE_TOLERANCE)
    witness = table[triple]
    return TripleResult(
        theta=float(theta),
        n_slots=int(n_slots),
        k3=witness.k3,
        triple=triple,
        correlators=witness.correlators,
        masks=witness.masks,
        back_action_on=back_action_on,
        scattering_on=scattering_on,
    )


def sweep_triple(n_slots, params, theta_grid, back_action_on=True, scattering_on=True,
                 discarded="fired", workers=1):
    """Optimized three-point parameter at every grid angle, merged in grid order."""
    grid = _check_grid(theta_grid)
    logger.info("Optimizing triples for n_slots=%d over %d angles", n_slots, grid.size)
    return parallel_map(
        lambda theta: optimize_triple(n_slots, float(theta), params, back_action_on, scattering_on, discarded),
        grid,
        workers,
    )


def disturbance_audit(params, back_action_on=True, scattering_on=True):
    """
    Two identical readouts with no evolution in between.

    <S_y^(2) - S_y^(1)> estimates the mean disturbance of J_z and
    var(S_y^(2)) - var(S_y^(1)) = g^2 var(d) its variance; both vanish for
    an ideal QND measurement.

    Returns:
        AuditResult: mean and variance differences
    """
    spec = SequenceSpec(2, 0.0, back_action_on=back_action_on, scattering_on=scattering_on)
    record = run_sequence(spec, params)
    return AuditResult(
        mean_diff=float(record.mu[1] - record.mu[0]),
        var_diff=float(record.gamma_y[1, 1] - record.gamma_y[0, 0]),
    )


def audit_prediction(params, scattering_on=True):
    """
    Closed-form variance difference of the disturbance audit.

    (g N_L/2)^2 [(chi^2 - 1) N_A/2 + N_A (1-chi)(chi/2 + 2/3)], zero without scattering.
    """
    if not scattering_on:
        return 0.0
    chi = params.chi
    return params.signal_gain ** 2 * ((chi ** 2 - 1.0) * params.n_atoms / 2 + params.loss_noise)
