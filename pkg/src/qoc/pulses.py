"""Piecewise-constant time evolution, transfer costs, and their gradients.

Sign conventions
----------------
A segment with Hamiltonian H_k = H_drift + sum_a u_a(k) H_a propagates as

    forward:   exp(-i dt H_k)     physical play-out direction
    reversed:  exp(+i dt H_k)     optimization direction for the iterative
                                  scheme, so that playing the optimized
                                  segments in reverse order under the forward
                                  sign implements the adjoint exactly

Gradients use the first-order rule dU_k/du ~ (+-i dt) H_a U_k; the overall
sign of each analytic gradient below is fixed against the central-difference
oracle (see tests), which is authoritative.  All gradients cost one forward
sweep plus one backward adjoint sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DecompositionError
from .hamiltonians import SystemModel
from .linalg import StateVector

__all__ = [
    "SIGN_FORWARD",
    "SIGN_REVERSED",
    "PulseGrid",
    "PulseSequence",
    "Workspace",
    "propagate",
    "segment_unitaries",
    "state_infidelity",
    "subsystem_impurity",
    "ground_leakage",
    "state_infidelity_gradient",
    "impurity_gradient",
    "ground_leakage_gradient",
    "finite_difference_gradient",
    "random_initial_pulses",
    "write_pulse_file",
    "read_pulse_file",
    "pulse_file_text",
    "parse_pulse_file_text",
]

SIGN_FORWARD = "forward"
SIGN_REVERSED = "reversed"
_SIGN_FACTOR = {SIGN_FORWARD: -1.0, SIGN_REVERSED: +1.0}


@dataclass(frozen=True)
class PulseGrid:
    """Uniform time grid: K segments of duration dt."""

    dt: float
    segments: int

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise ValueError(f"segment duration must be positive, got {self.dt}")
        if self.segments < 1:
            raise ValueError(f"segment count must be >= 1, got {self.segments}")

    @property
    def duration(self) -> float:
        return self.dt * self.segments


@dataclass(frozen=True)
class PulseSequence:
    """K x A real control amplitudes on a grid, with a sign convention tag."""

    grid: PulseGrid
    amplitudes: np.ndarray
    channels: tuple[str, ...]
    sign: str
    bounds: tuple[float, float] = (-np.inf, np.inf)
    platform: str = ""

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.float64)
        if amps.ndim != 2:
            raise ValueError(f"amplitudes must be K x A, got shape {amps.shape}")
        if amps.shape[0] != self.grid.segments:
            raise ValueError(
                f"amplitude rows {amps.shape[0]} != grid segments {self.grid.segments}"
            )
        if amps.shape[1] != len(self.channels):
            raise ValueError(
                f"amplitude columns {amps.shape[1]} != channel count {len(self.channels)}"
            )
        if self.sign not in _SIGN_FACTOR:
            raise ValueError(f"sign must be forward or reversed, got {self.sign!r}")
        lo, hi = self.bounds
        if not (lo <= hi):
            raise ValueError(f"invalid bounds {self.bounds}")
        if amps.size and (amps.min() < lo or amps.max() > hi):
            raise ValueError("amplitudes exceed the configured box bounds")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def num_channels(self) -> int:
        return len(self.channels)

    def with_amplitudes(self, amps: np.ndarray) -> "PulseSequence":
        return replace(self, amplitudes=np.asarray(amps, dtype=np.float64))

    def reversed_play_order(self) -> "PulseSequence":
        """Segments in reverse time order under the opposite sign.

        For a reversed-sign sequence this is the physical (forward-sign)
        realisation of the adjoint of the optimized propagator.
        """
        flipped = SIGN_FORWARD if self.sign == SIGN_REVERSED else SIGN_REVERSED
        return replace(self, amplitudes=self.amplitudes[::-1].copy(), sign=flipped)


@dataclass
class Workspace:
    """Cached per-segment unitaries and forward states from one propagation."""

    model: SystemModel
    pulses: PulseSequence
    unitaries: np.ndarray  # (K, d, d)
    forward: np.ndarray  # (K+1, d); forward[k] = state after k segments

    @property
    def final_amplitudes(self) -> np.ndarray:
        return self.forward[-1]

    def backward_adjoint(self, vec: np.ndarray) -> np.ndarray:
        """bw[k] = (U_K ... U_{k+2} U_{k+1})† vec, returned for k = 1..K."""
        k_seg = self.unitaries.shape[0]
        bw = np.empty((k_seg, self.unitaries.shape[1]), dtype=complex)
        acc = np.asarray(vec, dtype=complex)
        bw[k_seg - 1] = acc  # nothing after the last segment
        for k in range(k_seg - 1, 0, -1):
            acc = self.unitaries[k].conj().T @ acc
            bw[k - 1] = acc
        return bw

    def consistency_residual(self, initial: StateVector) -> float:
        """Distance between a fresh propagation and the cached final state."""
        redone, _ = propagate(self.model, self.pulses, initial)
        return float(np.linalg.norm(redone.amplitudes - self.forward[-1]))


def segment_hamiltonians(model: SystemModel, amplitudes: np.ndarray) -> np.ndarray:
    """(K, d, d) stack of per-segment total Hamiltonians."""
    amps = np.asarray(amplitudes, dtype=np.float64)
    stack = model.control_stack
    h = np.broadcast_to(model.drift.matrix, (amps.shape[0],) + model.drift.matrix.shape).copy()
    if stack.shape[0]:
        h += np.einsum("ka,aij->kij", amps, stack)
    return h


def segment_unitaries(model: SystemModel, pulses: PulseSequence) -> np.ndarray:
    """All segment propagators at once, via batched Hermitian eigensolves."""
    h = segment_hamiltonians(model, pulses.amplitudes)
    factor = _SIGN_FACTOR[pulses.sign]
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"segment eigendecomposition failed: {exc}") from exc
    phases = np.exp(1j * factor * pulses.grid.dt * w)
    return (v * phases[:, None, :]) @ v.conj().transpose(0, 2, 1)


def propagate(
    model: SystemModel, pulses: PulseSequence, initial: StateVector
) -> tuple[StateVector, Workspace]:
    """Apply the segment propagators in order; norm is preserved to roundoff."""
    if initial.dim != model.dim:
        raise ValueError(f"state dim {initial.dim} != model dim {model.dim}")
    if pulses.num_channels != model.num_channels:
        raise ValueError(
            f"pulse channels {pulses.num_channels} != model channels {model.num_channels}"
        )
    u = segment_unitaries(model, pulses)
    k_seg = u.shape[0]
    fw = np.empty((k_seg + 1, model.dim), dtype=complex)
    fw[0] = initial.amplitudes
    for k in range(k_seg):
        fw[k + 1] = u[k] @ fw[k]
    ws = Workspace(model=model, pulses=pulses, unitaries=u, forward=fw)
    return StateVector(fw[-1], initial.site_dims), ws


# ---------------------------------------------------------------------------
# Costs


def state_infidelity(final: StateVector, target: StateVector) -> float:
    """1 - |<target|final>|^2; zero iff equal up to a global phase."""
    c = target.overlap(final)
    return max(0.0, 1.0 - abs(c) ** 2)


def _perm_matrix(state_amps: np.ndarray, site_dims: Sequence[int], part: Sequence[int]):
    """Amplitudes as a (part x rest) matrix plus the inverse permutation."""
    n = len(site_dims)
    part_sorted = sorted(set(int(p) for p in part))
    if not part_sorted or len(part_sorted) == n:
        raise ValueError("site subset must be a non-empty proper subset")
    if any(p < 0 or p >= n for p in part_sorted):
        raise ValueError(f"site subset {part_sorted} out of range")
    rest = [i for i in range(n) if i not in part_sorted]
    perm = part_sorted + rest
    tensor = np.transpose(state_amps.reshape(tuple(site_dims)), perm)
    d_a = math.prod(site_dims[i] for i in part_sorted)
    matrix = tensor.reshape(d_a, -1)
    inv = np.argsort(perm)
    perm_dims = tuple(site_dims[i] for i in perm)
    return matrix, perm_dims, inv


def _unpermute(matrix: np.ndarray, perm_dims, inv) -> np.ndarray:
    return np.transpose(matrix.reshape(perm_dims), inv).reshape(-1)


def subsystem_impurity(state: StateVector, keep: Iterable[int]) -> float:
    """1 - tr(rho_keep^2); zero iff the state is a product across the cut."""
    m, _, _ = _perm_matrix(state.amplitudes, state.site_dims, list(keep))
    rho = m @ m.conj().T
    return max(0.0, 1.0 - float(np.vdot(rho, rho).real))


def ground_leakage(state: StateVector, frozen: Iterable[int]) -> float:
    """1 - <0...0| rho_frozen |0...0>; zero iff the frozen block sits in |0...0>."""
    m, _, _ = _perm_matrix(state.amplitudes, state.site_dims, list(frozen))
    return max(0.0, 1.0 - float(np.vdot(m[0], m[0]).real))


# ---------------------------------------------------------------------------
# Analytic gradients (one forward plus one backward sweep each)


def _require_sign(pulses: PulseSequence, expected: str, what: str) -> None:
    if pulses.sign != expected:
        raise ContractError(
            f"{what} requires sign={expected!r} pulses, got {pulses.sign!r}"
        )


def _gradient_terms(ws: Workspace, adjoint: np.ndarray) -> np.ndarray:
    """A[k, a] = <bw_k| H_a |fw_k> for every segment and channel."""
    stack = ws.model.control_stack
    fw = ws.forward[1:]  # state after segment k, k = 1..K
    bw = ws.backward_adjoint(adjoint)
    if not stack.shape[0]:
        return np.zeros((fw.shape[0], 0), dtype=complex)
    h_fw = np.einsum("aij,kj->kai", stack, fw)
    return np.einsum("ki,kai->ka", bw.conj(), h_fw)


def infidelity_value_and_gradient(
    model: SystemModel,
    pulses: PulseSequence,
    initial: StateVector,
    target: StateVector,
) -> tuple[float, np.ndarray, Workspace]:
    """Cost and d(cost)/du for the overlap infidelity, forward convention."""
    _require_sign(pulses, SIGN_FORWARD, "state-transfer gradient")
    final, ws = propagate(model, pulses, initial)
    c = target.overlap(final)
    cost = max(0.0, 1.0 - abs(c) ** 2)
    terms = _gradient_terms(ws, target.amplitudes)
    grad = -2.0 * pulses.grid.dt * np.imag(np.conj(c) * terms)
    return cost, grad, ws


def impurity_value_and_gradient(
    model: SystemModel,
    pulses: PulseSequence,
    initial: StateVector,
    keep: Iterable[int],
) -> tuple[float, np.ndarray, Workspace]:
    """Cost and gradient for the reduced-state impurity, reversed convention.

    The adjoint vector is (rho_keep (x) 1) |phi>, the closed form of the
    elementwise double-sum definition.
    """
    _require_sign(pulses, SIGN_REVERSED, "impurity gradient")
    final, ws = propagate(model, pulses, initial)
    m, perm_dims, inv = _perm_matrix(final.amplitudes, final.site_dims, list(keep))
    rho = m @ m.conj().T
    cost = max(0.0, 1.0 - float(np.vdot(rho, rho).real))
    lam = _unpermute(rho @ m, perm_dims, inv)
    terms = _gradient_terms(ws, lam)
    grad = 4.0 * pulses.grid.dt * np.imag(terms)
    return cost, grad, ws


def ground_leakage_value_and_gradient(
    model: SystemModel,
    pulses: PulseSequence,
    initial: StateVector,
    frozen: Iterable[int],
) -> tuple[float, np.ndarray, Workspace]:
    """Cost and gradient for the frozen-block ground projection, reversed sign.

    The adjoint vector is (|0..0><0..0|_frozen (x) 1) |phi>.
    """
    _require_sign(pulses, SIGN_REVERSED, "ground-projection gradient")
    final, ws = propagate(model, pulses, initial)
    m, perm_dims, inv = _perm_matrix(final.amplitudes, final.site_dims, list(frozen))
    cost = max(0.0, 1.0 - float(np.vdot(m[0], m[0]).real))
    eta_m = np.zeros_like(m)
    eta_m[0] = m[0]
    eta = _unpermute(eta_m, perm_dims, inv)
    terms = _gradient_terms(ws, eta)
    grad = 2.0 * pulses.grid.dt * np.imag(terms)
    return cost, grad, ws


def state_infidelity_gradient(model, pulses, initial, target) -> np.ndarray:
    return infidelity_value_and_gradient(model, pulses, initial, target)[1]


def impurity_gradient(model, pulses, initial, keep) -> np.ndarray:
    return impurity_value_and_gradient(model, pulses, initial, keep)[1]


def ground_leakage_gradient(model, pulses, initial, frozen) -> np.ndarray:
    return ground_leakage_value_and_gradient(model, pulses, initial, frozen)[1]


def finite_difference_gradient(
    cost: Callable[[np.ndarray], float], amplitudes: np.ndarray, step: float
) -> np.ndarray:
    """Central differences of a cost over a K x A amplitude matrix."""
    if not (step > 0.0):
        raise ValueError("step must be positive")
    amps = np.asarray(amplitudes, dtype=np.float64)
    grad = np.zeros_like(amps)
    for k in range(amps.shape[0]):
        for a in range(amps.shape[1]):
            up = amps.copy()
            up[k, a] += step
            dn = amps.copy()
            dn[k, a] -= step
            grad[k, a] = (cost(up) - cost(dn)) / (2.0 * step)
    return grad


def random_initial_pulses(
    grid: PulseGrid,
    channels: Sequence[str],
    bounds: tuple[float, float],
    seed,
    sign: str,
    fraction: float = 0.1,
    platform: str = "",
) -> PulseSequence:
    """Uniform random amplitudes inside ``fraction`` of the box, seeded."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = bounds
    amps = rng.uniform(fraction * lo, fraction * hi, size=(grid.segments, len(channels)))
    return PulseSequence(
        grid=grid, amplitudes=amps, channels=tuple(channels), sign=sign,
        bounds=bounds, platform=platform,
    )


# ---------------------------------------------------------------------------
# Pulse file format: header lines, a separator, then K rows of A amplitudes.
# Floats are written with repr-precision so files round-trip bit-exactly.


def pulse_file_text(seq: PulseSequence) -> str:
    lines = [
        "# qoc pulse sequence v1",
        f"platform: {seq.platform}",
        f"sign: {seq.sign}",
        f"dt: {seq.grid.dt!r}",
        f"segments: {seq.grid.segments}",
        f"channels: {' '.join(seq.channels)}",
        f"bounds: {seq.bounds[0]!r} {seq.bounds[1]!r}",
        "---",
    ]
    for row in seq.amplitudes:
        lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def parse_pulse_file_text(text: str) -> PulseSequence:
    header: dict[str, str] = {}
    lines = text.splitlines()
    try:
        split = lines.index("---")
    except ValueError:
        raise ValueError("pulse file missing '---' separator") from None
    for line in lines[:split]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()
    grid = PulseGrid(dt=float(header["dt"]), segments=int(header["segments"]))
    channels = tuple(header["channels"].split()) if header.get("channels") else ()
    lo, hi = (float(tok) for tok in header["bounds"].split())
    rows = [
        [float(tok) for tok in line.split()]
        for line in lines[split + 1 :]
        if line.strip()
    ]
    amps = np.asarray(rows, dtype=np.float64).reshape(grid.segments, len(channels))
    return PulseSequence(
        grid=grid,
        amplitudes=amps,
        channels=channels,
        sign=header["sign"],
        bounds=(lo, hi),
        platform=header.get("platform", ""),
    )


def write_pulse_file(seq: PulseSequence, path) -> None:
    with open(path, "w") as fh:
        fh.write(pulse_file_text(seq))


def read_pulse_file(path) -> PulseSequence:
    with open(path) as fh:
        return parse_pulse_file_text(fh.read())
