"""Dispersive effective model: cavity pull, Lamb shift, and
virtual-photon coupling between the two detuned ensembles.

With detunings Delta_k = nu_c - nu_k well outside the collective
coupling, each ensemble pulls the cavity by chi_k = g_k^2/Delta_k, is
Lamb-shifted by the same magnitude, and the ensembles acquire a
transverse exchange coupling of magnitude
U = (g_I g_II/2)(1/Delta_I + 1/Delta_II).  Eliminating the photon from
the single-excitation model gives the spin sector as a 2x2 block over
{E_I, E_II}:

    [[nu_I - chi_I, -s_1 s_2 U], [-s_1 s_2 U, nu_II - chi_II]]

where (s_1, s_2) are the antinode drive signs.  The minus sign on the
diagonal is level repulsion: spins sitting below the cavity are pushed
further down by the coupling, which is what the exact model does order
by order (deviation O(g^4/Delta^3)).  chi_k and U as reported on the
model keep their textbook signed-formula values.

Which eigenmode is visible depends on the drive: the two cavity
antinodes have opposite field sign, so the drive vector is
(s_1 g_I, s_2 g_II)/g_col and the orthogonal combination stays dark.
Bright/dark labels therefore always come from drive weights, never from
energy ordering or symmetry names alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coupled import CavitySpec, EnsembleSpec, single_excitation_model
from .errors import DispersiveRangeError
from .spin import FieldSetting

__all__ = [
    "DEFAULT_FLOOR",
    "DispersiveModel",
    "PumpProbeSignal",
    "dispersive_shift",
    "ensemble_ensemble_coupling",
    "build_dispersive_model",
    "dispersive_model_from_frequencies",
    "dispersive_spin_modes",
    "validation_from_frequencies",
    "drive_basis_states",
    "drive_weights",
    "pump_probe_signal",
    "dispersive_validation",
    "ValidationReport",
]

# Smallest spin-cavity detuning magnitude (MHz) accepted as dispersive.
DEFAULT_FLOOR = 12.0


def _check_floor(delta: float, floor: float, enforce: bool, label: str) -> None:
    if enforce and abs(delta) < floor:
        raise DispersiveRangeError(
            f"{label} detuning {delta:+.3f} MHz is below the dispersive floor "
            f"of {floor:g} MHz"
        )


@dataclass(frozen=True)
class DispersiveModel:
    """Dispersive parameters of the two-ensemble system plus the 2x2
    spin block over {E_I, E_II} (all frequencies MHz)."""

    chi_i: float
    chi_ii: float
    detuning_i: float
    detuning_ii: float
    u_coupling: float
    spin_block: np.ndarray
    g_i: float
    g_ii: float
    antinode_signs: tuple = (1, -1)
    center: float = 0.0


@dataclass(frozen=True)
class PumpProbeSignal:
    """Cavity-pull signal versus pump frequency."""

    pump_frequencies: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        pump = np.asarray(self.pump_frequencies, dtype=float)
        shift = np.asarray(self.shift, dtype=float)
        if pump.shape != shift.shape:
            raise ValueError("pump_frequencies and shift must have equal shapes")
        object.__setattr__(self, "pump_frequencies", pump)
        object.__setattr__(self, "shift", shift)


def dispersive_shift(
    g: float, delta: float, floor: float = DEFAULT_FLOOR, enforce: bool = True
) -> float:
    """Cavity pull chi = g^2/delta (signed, MHz)."""
    _check_floor(delta, floor, enforce, "spin")
    return g**2 / delta


def ensemble_ensemble_coupling(
    g_i: float,
    g_ii: float,
    delta_i: float,
    delta_ii: float,
    floor: float = DEFAULT_FLOOR,
    enforce: bool = True,
) -> float:
    """Virtual-photon exchange rate U = (g_I g_II/2)(1/Delta_I + 1/Delta_II)."""
    _check_floor(delta_i, floor, enforce, "ensemble I")
    _check_floor(delta_ii, floor, enforce, "ensemble II")
    return 0.5 * g_i * g_ii * (1.0 / delta_i + 1.0 / delta_ii)


def dispersive_model_from_frequencies(
    cavity: CavitySpec,
    couplings: tuple,
    transitions: tuple,
    floor: float = DEFAULT_FLOOR,
    enforce: bool = True,
) -> DispersiveModel:
    """Dispersive parameters for explicit spin transition frequencies."""
    g_i, g_ii = couplings
    w_i, w_ii = transitions
    d_i = cavity.center - w_i
    d_ii = cavity.center - w_ii
    chi_i = dispersive_shift(g_i, d_i, floor, enforce)
    chi_ii = dispersive_shift(g_ii, d_ii, floor, enforce)
    u = ensemble_ensemble_coupling(g_i, g_ii, d_i, d_ii, floor, enforce)
    s_i, s_ii = cavity.antinode_signs
    u_block = -s_i * s_ii * u
    block = np.array([[w_i - chi_i, u_block], [u_block, w_ii - chi_ii]])
    return DispersiveModel(
        chi_i=chi_i,
        chi_ii=chi_ii,
        detuning_i=d_i,
        detuning_ii=d_ii,
        u_coupling=u,
        spin_block=block,
        g_i=g_i,
        g_ii=g_ii,
        antinode_signs=cavity.antinode_signs,
        center=cavity.center,
    )


def build_dispersive_model(
    cavity: CavitySpec,
    ens_i: EnsembleSpec,
    ens_ii: EnsembleSpec,
    field_setting: FieldSetting,
    floor: float = DEFAULT_FLOOR,
    enforce: bool = True,
) -> DispersiveModel:
    """Evaluate the dispersive parameters at the given field."""
    return dispersive_model_from_frequencies(
        cavity,
        (ens_i.coupling, ens_ii.coupling),
        (ens_i.transition(field_setting), ens_ii.transition(field_setting)),
        floor,
        enforce,
    )


def drive_basis_states(g_i: float, g_ii: float, antinode_signs=(1, -1)) -> tuple:
    """Bright/dark combinations selected by the drive, over {E_I, E_II}.

    The bright vector is parallel to the drive (s_1 g_I, s_2 g_II)/g_col
    and the dark one orthogonal to it.  With the (+, -) sign pair these
    are the antisymmetric and symmetric superpositions respectively.
    """
    g_col = math.hypot(g_i, g_ii)
    if g_col == 0.0:
        raise ValueError("at least one coupling must be nonzero")
    s1, s2 = antinode_signs
    bright = np.array([s1 * g_i, s2 * g_ii]) / g_col
    dark = np.array([-s2 * g_ii, s1 * g_i]) / g_col
    return bright, dark


def drive_weights(g_i: float, g_ii: float, antinode_signs, mode_vector) -> float:
    """Squared overlap of a unit-norm spin mode with the drive vector."""
    v = np.asarray(mode_vector, dtype=float)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"mode vector must be unit norm (got {norm:.8f})")
    bright, _ = drive_basis_states(g_i, g_ii, antinode_signs)
    return float(np.dot(bright, v) ** 2)


def dispersive_spin_modes(
    model: DispersiveModel, omega_i: float | None = None, omega_ii: float | None = None
) -> tuple:
    """Eigenmodes of the dispersive spin block, labeled by drive weight.

    Returns ((bright_frequency, bright_vector), (dark_frequency,
    dark_vector)).  Optional omega overrides rebuild the block at other
    bare spin frequencies while keeping chi and U fixed.
    """
    block = np.asarray(model.spin_block, dtype=float)
    if omega_i is not None or omega_ii is not None:
        w_i = (model.center - model.detuning_i) if omega_i is None else omega_i
        w_ii = (model.center - model.detuning_ii) if omega_ii is None else omega_ii
        s_i, s_ii = model.antinode_signs
        u_block = -s_i * s_ii * model.u_coupling
        block = np.array(
            [
                [w_i - model.chi_i, u_block],
                [u_block, w_ii - model.chi_ii],
            ]
        )
    vals, vecs = np.linalg.eigh(block)
    modes = [(float(vals[k]), vecs[:, k]) for k in range(2)]
    weights = [
        drive_weights(model.g_i, model.g_ii, model.antinode_signs, v) for _, v in modes
    ]
    bright_idx = int(np.argmax(weights))
    return modes[bright_idx], modes[1 - bright_idx]


def _unit_lorentzian(x: np.ndarray, hwhm: float) -> np.ndarray:
    return hwhm**2 / (x**2 + hwhm**2)


def pump_probe_signal(
    cavity: CavitySpec,
    ens_i: EnsembleSpec,
    ens_ii: EnsembleSpec,
    field_setting: FieldSetting,
    pump_frequencies,
    width: float | None = None,
    floor: float = DEFAULT_FLOOR,
    enforce: bool = True,
) -> PumpProbeSignal:
    """Cavity-shift signal versus pump frequency.

    Each dispersive spin mode m contributes a unit-peak Lorentzian at
    its frequency, scaled by its drive weight and its chi-weighted mode
    content.  The sign is negative: pumping depolarizes spins and moves
    the cavity back toward its bare frequency.  Line widths default to
    the content-weighted ensemble spin widths.
    """
    pump = np.asarray(pump_frequencies, dtype=float)
    if ens_i.coupling == 0.0 and ens_ii.coupling == 0.0:
        return PumpProbeSignal(pump, np.zeros_like(pump))
    model = build_dispersive_model(cavity, ens_i, ens_ii, field_setting, floor, enforce)
    bright, dark = dispersive_spin_modes(model)
    shift = np.zeros_like(pump)
    for freq, vec in (bright, dark):
        weight = drive_weights(model.g_i, model.g_ii, model.antinode_signs, vec)
        pull = model.chi_i * vec[0] ** 2 + model.chi_ii * vec[1] ** 2
        hwhm = width
        if hwhm is None:
            hwhm = ens_i.spin_hwhm * vec[0] ** 2 + ens_ii.spin_hwhm * vec[1] ** 2
        shift -= weight * pull * _unit_lorentzian(pump - freq, hwhm)
    return PumpProbeSignal(pump, shift)


@dataclass(frozen=True)
class ValidationReport:
    """Spin-mode frequencies of the exact 3x3 model against the
    dispersive 2x2 block, with absolute deviations (MHz)."""

    exact: tuple
    dispersive: tuple
    deviations: tuple

    @property
    def max_deviation(self) -> float:
        return max(self.deviations)


def dispersive_validation(
    cavity: CavitySpec,
    ens_i: EnsembleSpec,
    ens_ii: EnsembleSpec,
    field_setting: FieldSetting,
    floor: float = DEFAULT_FLOOR,
) -> ValidationReport:
    """Validation report at a field point (see validation_from_frequencies)."""
    return validation_from_frequencies(
        cavity,
        (ens_i.coupling, ens_ii.coupling),
        (ens_i.transition(field_setting), ens_ii.transition(field_setting)),
        floor,
    )


def validation_from_frequencies(
    cavity: CavitySpec,
    couplings: tuple,
    transitions: tuple,
    floor: float = DEFAULT_FLOOR,
) -> ValidationReport:
    """Compare the dispersive spin-mode frequencies against the two
    spin-like eigenvalues (least photon content) of the exact model."""
    exact_model = single_excitation_model(cavity, couplings, transitions)
    photon = np.abs(exact_model.eigenvectors[:, 0]) ** 2
    spin_like = np.sort(exact_model.eigenfrequencies[np.argsort(photon)[:2]])

    if couplings[0] == 0.0 and couplings[1] == 0.0:
        disp = np.sort(np.asarray(transitions, dtype=float))
    else:
        model = dispersive_model_from_frequencies(
            cavity, couplings, transitions, floor, enforce=True
        )
        disp = np.sort(np.linalg.eigvalsh(model.spin_block))
    dev = np.abs(spin_like - disp)
    return ValidationReport(
        exact=tuple(float(x) for x in spin_like),
        dispersive=tuple(float(x) for x in disp),
        deviations=tuple(float(x) for x in dev),
    )
