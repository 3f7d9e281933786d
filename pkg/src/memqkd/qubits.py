"""Spin memory and time-bin photonic qubits as completely positive maps.

The memory qubit lives in the basis {up, down} and is stored as a 2x2
density matrix. Photonic qubits are equal-amplitude superpositions of an
early and a late time bin, (|e> + exp(i*phi)|l>)/sqrt(2), so a single
phase phi fixes the state.

Reflecting a photon off the node and detecting it behind the time-delay
interferometer applies a heralded Kraus map to the spin,

    K_m = |up><up| + m exp(i phi) |down><down|
          + eps * (|down><down| + m exp(i phi) |up><up|),

where m = +/-1 is the detector that fired and eps is the amplitude
leakage sqrt(r_down/r_up) from the residual reflection of the uncoupled
spin state. With eps = 0 this teleports the photon phase onto the spin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

# Azimuthal angle of the positive-sign state of each basis. The four
# bases are separated by 45 degrees on the equator; the negative sign
# adds pi.
BASIS_ANGLE = {"X": 0.0, "Y": math.pi / 2.0, "A": math.pi / 4.0, "B": 3.0 * math.pi / 4.0}


class NonPhysicalStateError(ValueError):
    """Raised when a density matrix violates trace/hermiticity/positivity."""


@dataclass(frozen=True)
class TimeBinQubit:
    """One photonic time-bin qubit, identified by basis label and sign."""

    basis: str
    sign: int = 1

    def __post_init__(self) -> None:
        if self.basis not in BASIS_ANGLE:
            raise ValueError(f"unknown basis {self.basis!r}, expected one of X, Y, A, B")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    @property
    def phase(self) -> float:
        """Relative phase between the early and late bins, in [0, 2*pi)."""
        phi = BASIS_ANGLE[self.basis] + (0.0 if self.sign == 1 else math.pi)
        return phi % (2.0 * math.pi)


@dataclass(frozen=True)
class HeraldResult:
    """Which interferometer output detector registered the photon."""

    m: int

    def __post_init__(self) -> None:
        if self.m not in (1, -1):
            raise ValueError(f"herald outcome must be +1 or -1, got {self.m}")


@dataclass(frozen=True)
class NoiseParams:
    """Calibrated error model of the memory node.

    eps_leak:          amplitude leakage of the uncoupled-state reflection.
                       The physical value is sqrt(r_down/r_up) ~= 0.208;
                       the default is calibrated so the heralded
                       spin-photon fidelity is 0.9445 at n_m = 0.002.
    p_mw:              dephasing probability per microwave pi pulse
                       (ohmic-heating proxy, calibrated against the
                       observed error rate at the N = 124 operating point)
    p_scatter_dephase: dephasing probability per undetected scattered
                       photon; 0.5 means full dephasing (worst case)
    f_readout:         single-shot readout fidelity
    f_init:            spin initialization fidelity
    eta_detect:        overall heralding efficiency; photons that scatter
                       without being detected occur at rate (1 - eta_detect)
    """

    eps_leak: float = 0.24114
    p_mw: float = 0.0011
    p_scatter_dephase: float = 0.5
    f_readout: float = 0.9998
    f_init: float = 0.998
    eta_detect: float = 0.423

    def __post_init__(self) -> None:
        if self.eps_leak < 0:
            raise ValueError(f"eps_leak must be non-negative, got {self.eps_leak}")
        for name in ("p_mw", "p_scatter_dephase", "f_readout", "f_init", "eta_detect"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @classmethod
    def ideal(cls) -> "NoiseParams":
        """Noise-free node with unit efficiency."""
        return cls(
            eps_leak=0.0,
            p_mw=0.0,
            p_scatter_dephase=0.0,
            f_readout=1.0,
            f_init=1.0,
            eta_detect=1.0,
        )


class SpinState:
    """2x2 density matrix of the memory qubit over {up, down}."""

    __slots__ = ("rho",)

    def __init__(self, rho: np.ndarray, validate: bool = True):
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (2, 2):
            raise NonPhysicalStateError(f"density matrix must be 2x2, got {rho.shape}")
        if validate:
            _check_physical(rho)
        self.rho = rho

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> "SpinState":
        r = math.sqrt(x * x + y * y + z * z)
        if r > 1 + 1e-12:
            raise NonPhysicalStateError(f"Bloch vector has norm {r} > 1")
        rho = 0.5 * np.array(
            [[1.0 + z, x - 1j * y], [x + 1j * y, 1.0 - z]], dtype=complex
        )
        return cls(rho, validate=False)

    @classmethod
    def down(cls) -> "SpinState":
        return cls.from_bloch(0.0, 0.0, -1.0)

    def bloch_vector(self) -> tuple[float, float, float]:
        x = 2.0 * self.rho[1, 0].real
        y = 2.0 * self.rho[1, 0].imag
        z = (self.rho[0, 0] - self.rho[1, 1]).real
        return (x, y, z)

    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def expect_x(self) -> float:
        return self.bloch_vector()[0]

    def expect_z(self) -> float:
        return self.bloch_vector()[2]

    def isclose(self, other: "SpinState", atol: float = 1e-10) -> bool:
        return bool(np.allclose(self.rho, other.rho, atol=atol))

    def __repr__(self) -> str:
        x, y, z = self.bloch_vector()
        return f"SpinState(bloch=({x:+.4f}, {y:+.4f}, {z:+.4f}))"


def _check_physical(rho: np.ndarray) -> None:
    if not np.allclose(rho, rho.conj().T, atol=1e-9):
        raise NonPhysicalStateError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-9 or abs(np.trace(rho).imag) > 1e-9:
        raise NonPhysicalStateError(f"trace must be 1, got {np.trace(rho)}")
    eigs = np.linalg.eigvalsh(rho)
    if eigs.min() < -1e-9:
        raise NonPhysicalStateError(f"negative eigenvalue {eigs.min()}")


def initialize_spin(f_init: float = 1.0) -> SpinState:
    """Spin after projective feedback initialization into the down state.

    With fidelity f the result is the classical mixture
    f |down><down| + (1-f) |up><up|, so <Z> = -(2f - 1).
    """
    if not 0 <= f_init <= 1:
        raise ValueError(f"f_init must lie in [0, 1], got {f_init}")
    return SpinState(
        np.array([[1.0 - f_init, 0.0], [0.0, f_init]], dtype=complex), validate=False
    )


def prepare_superposition(f_init: float = 1.0) -> SpinState:
    """Initialization followed by the pi/2 pulse that starts a memory cycle.

    For perfect initialization this is the pure +X state (|up>+|down>)/sqrt(2).
    Imperfect initialization leaves a shortened Bloch vector (2f-1, 0, 0).
    """
    x0 = 2.0 * f_init - 1.0
    return SpinState.from_bloch(x0, 0.0, 0.0)


def herald_kraus(phase: float, m: int, eps_leak: float) -> np.ndarray:
    """Kraus operator of the heralded reflection for outcome m."""
    if m not in (1, -1):
        raise ValueError(f"herald outcome must be +1 or -1, got {m}")
    e = np.exp(1j * phase)
    return np.array(
        [[1.0 + eps_leak * m * e, 0.0], [0.0, m * e + eps_leak]], dtype=complex
    )


def apply_herald(spin: SpinState, phase: float, m: int, eps_leak: float) -> SpinState:
    """Post-selected heralded map for a known detector outcome m."""
    k = herald_kraus(phase, m, eps_leak)
    rho = k @ spin.rho @ k.conj().T
    norm = np.trace(rho).real
    if norm <= 0:
        raise NonPhysicalStateError("herald outcome has zero probability")
    return SpinState(rho / norm, validate=False)


def herald_probability(spin: SpinState, phase: float, m: int, eps_leak: float) -> float:
    """Born probability of detector outcome m, conditioned on a herald."""
    k = herald_kraus(phase, m, eps_leak)
    p = np.trace(k @ spin.rho @ k.conj().T).real
    # Normalize over the two outcomes; the diagonal Kraus pair sums to
    # 2 (1 + eps^2) times the identity on the populations.
    return float(p / (2.0 * (1.0 + eps_leak**2)))


def reflect_and_herald(
    spin: SpinState,
    qubit: TimeBinQubit,
    noise: NoiseParams,
    rng: np.random.Generator,
) -> tuple[HeraldResult, SpinState]:
    """Reflect one photonic qubit off the node and detect it.

    Samples the detector outcome from the Born probabilities and returns
    the heralded spin state. With eps_leak = 0 and the spin prepared in
    (|up>+|down>)/sqrt(2), the result is exactly
    (|up> + m exp(i phi) |down>)/sqrt(2).
    """
    _check_physical(spin.rho)
    p_plus = herald_probability(spin, qubit.phase, +1, noise.eps_leak)
    m = 1 if rng.random() < p_plus else -1
    return HeraldResult(m), apply_herald(spin, qubit.phase, m, noise.eps_leak)


def apply_pi_pulse(spin: SpinState) -> SpinState:
    """Microwave pi pulse: conjugation by the bit-flip operator."""
    return SpinState(_SX @ spin.rho @ _SX, validate=False)


def apply_dephasing(spin: SpinState, p: float) -> SpinState:
    """Phase-flip channel rho -> (1-p) rho + p Z rho Z."""
    if not 0 <= p <= 1:
        raise ValueError(f"dephasing probability must lie in [0, 1], got {p}")
    rho = (1.0 - p) * spin.rho + p * (_SZ @ spin.rho @ _SZ)
    return SpinState(rho, validate=False)


def measure_x(
    spin: SpinState, f_readout: float, rng: np.random.Generator
) -> int:
    """Projective X-basis readout with a classical bit-flip error.

    The outcome is sampled from tr(rho P_+x) and then flipped with
    probability 1 - f_readout.
    """
    if not 0 <= f_readout <= 1:
        raise ValueError(f"f_readout must lie in [0, 1], got {f_readout}")
    p_plus = 0.5 + spin.rho[0, 1].real
    m = 1 if rng.random() < p_plus else -1
    if rng.random() < 1.0 - f_readout:
        m = -m
    return m


def spin_photon_fidelity(noise: NoiseParams, n_m: float) -> float:
    """Heralded spin-photon entangled-state fidelity versus photon load.

    Two effects degrade the Bell-state overlap: the amplitude leakage of
    the uncoupled spin state, contributing a factor 1/(1 + eps^2), and
    the chance that an additional photon reached the cavity without being
    detected. Undetected scatters are Poisson with mean
    lam = n_m * (1 - eta_detect) and each dephases the spin with
    probability p_scatter_dephase, attenuating the coherence by
    exp(-2 * p_scatter_dephase * lam). The fidelity is

        F = (1 + exp(-2 p lam)) / (2 (1 + eps^2)),

    monotone non-increasing in both n_m and eps_leak.
    """
    if n_m < 0:
        raise ValueError(f"n_m must be non-negative, got {n_m}")
    lam = n_m * (1.0 - noise.eta_detect)
    coherence = math.exp(-2.0 * noise.p_scatter_dephase * lam)
    return (1.0 + coherence) / (2.0 * (1.0 + noise.eps_leak**2))
