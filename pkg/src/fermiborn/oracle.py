"""Brute-force reference implementations on dense statevectors.

Everything here is exponential in the mode count and exists to pin down the
polynomial code paths: the compiled circuit is simulated gate by gate, output
distributions are computed exactly (hidden modes marginalized), and Z-string
expectations fall out as signed sums. Dense Majorana matrices are provided so
covariance tables can be checked directly against Fock-space second moments.

Bit-order convention, used everywhere: variable/qubit 0 is the most
significant bit of a basis-state index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compiler import GateList, compile_model
from .engine import FbmModel, ZString, mode_index
from .errors import InvalidInputError

#: Hard cap on dense simulation width (65536 amplitudes). Large enough for
#: every reference check in the test suite, small enough that each stays fast.
MAX_QUBITS = 16


@dataclass
class StateVector:
    """Dense amplitudes over d qubits, unit norm, qubit 0 = most significant."""

    d: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.d <= MAX_QUBITS:
            raise InvalidInputError(f"qubit count must be in [1, {MAX_QUBITS}], got {self.d}")
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        if a.shape != (2 ** self.d,):
            raise InvalidInputError(
                f"amplitude vector must have length {2 ** self.d}, got {a.shape}"
            )
        norm = np.linalg.norm(a)
        if abs(norm - 1.0) > 1e-10:
            raise InvalidInputError(f"state norm is {norm!r}, not 1")
        self.amplitudes = a

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass
class Distribution:
    """Probabilities over all bitstrings of n bits, most significant bit first."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (2 ** self.n,):
            raise InvalidInputError(
                f"need {2 ** self.n} probabilities for {self.n} bits, got {p.shape}"
            )
        if np.any(p < -1e-12):
            raise InvalidInputError("negative probability")
        total = p.sum()
        if abs(total - 1.0) > 1e-10:
            raise InvalidInputError(f"probabilities sum to {total!r}, not 1")
        self.probs = np.clip(p, 0.0, None)


def _gate_matrix(name: str, angle: float | None) -> np.ndarray:
    if name == "ry":
        c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if name == "rz":
        return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])
    if name == "h":
        return np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)
    if name == "cnot":
        return np.array([[1, 0, 0, 0],
                         [0, 1, 0, 0],
                         [0, 0, 0, 1],
                         [0, 0, 1, 0]], dtype=np.complex128)
    if name == "rxx":
        c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
        xx = np.zeros((4, 4), dtype=np.complex128)
        xx[0, 3] = xx[1, 2] = xx[2, 1] = xx[3, 0] = 1.0
        return c * np.eye(4) - 1j * s * xx
    raise InvalidInputError(f"no unitary for gate {name!r}")


def simulate_circuit(circuit: GateList) -> StateVector:
    """Apply the circuit's gates to |0...0>; measure gates are tags, not ops."""
    d = circuit.qubits
    if d > MAX_QUBITS:
        raise InvalidInputError(f"{d} qubits exceeds the dense-simulation cap {MAX_QUBITS}")
    psi = np.zeros((2,) * d, dtype=np.complex128)
    psi[(0,) * d] = 1.0
    for g in circuit.gates:
        if g.name == "measure":
            continue
        u = _gate_matrix(g.name, g.angle)
        if len(g.qubits) == 1:
            q = g.qubits[0]
            psi = np.moveaxis(np.tensordot(u, psi, axes=([1], [q])), 0, q)
        else:
            a, b = g.qubits
            u4 = u.reshape(2, 2, 2, 2)
            psi = np.moveaxis(np.tensordot(u4, psi, axes=([2, 3], [a, b])), [0, 1], [a, b])
    return StateVector(d, psi.reshape(-1))


def exact_distribution(model: FbmModel) -> Distribution:
    """Exact output law over the n measured bits of the compiled model."""
    if model.d > MAX_QUBITS:
        raise InvalidInputError(
            f"model has d={model.d} modes; dense reference capped at {MAX_QUBITS}"
        )
    circuit = compile_model(model)
    state = simulate_circuit(circuit)
    probs = state.probabilities().reshape((2,) * model.d)
    measured = set(circuit.measured_qubits)
    hidden = tuple(q for q in range(model.d) if q not in measured)
    if hidden:
        probs = probs.sum(axis=hidden)
    return Distribution(model.n, probs.reshape(-1))


def distribution_zstring(dist: Distribution, z: ZString) -> float:
    """<Z_z> directly from an explicit distribution: a signed probability sum."""
    if z.indices and z.indices[-1] >= dist.n:
        raise InvalidInputError(f"string {z.indices} out of range for {dist.n} bits")
    signs = np.ones(2 ** dist.n)
    idx = np.arange(2 ** dist.n)
    for v in z.indices:
        bit = (idx >> (dist.n - 1 - v)) & 1
        signs *= 1.0 - 2.0 * bit
    return float(np.dot(signs, dist.probs))


def exact_zstring(model: FbmModel, z: ZString) -> float:
    """Oracle counterpart of the expectation engine, via the full distribution."""
    if z.indices and z.indices[-1] >= model.n:
        raise InvalidInputError(f"string {z.indices} out of range for n={model.n}")
    return distribution_zstring(exact_distribution(model), z)


def tvd(p: Distribution, q: Distribution) -> float:
    """Total variation distance, half the l1 difference."""
    if p.n != q.n:
        raise InvalidInputError(f"support mismatch: {p.n} vs {q.n} bits")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def majorana_matrices(d: int) -> list[np.ndarray]:
    """Dense Jordan-Wigner Majorana operators m_0..m_{2d-1} on d qubits.

    m_{2j} = Z^(j) X_j, m_{2j+1} = Z^(j) Y_j with a Z string on all qubits
    before j. Under this convention Z_j = -i m_{2j} m_{2j+1}, matching the
    compiled-gate mapping.
    """
    if not 1 <= d <= 7:
        raise InvalidInputError(f"dense Majorana matrices limited to d <= 7, got {d}")
    x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
    eye = np.eye(2, dtype=np.complex128)
    out = []
    for j in range(d):
        for local in (x, y):
            factors = [z] * j + [local] + [eye] * (d - j - 1)
            m = factors[0]
            for f in factors[1:]:
                m = np.kron(m, f)
            out.append(m)
    return out


def second_moments(rho: np.ndarray) -> np.ndarray:
    """Covariance -i Tr[m_p m_q rho] (p != q) of a dense 4-mode operator.

    Accepts any 16x16 operator, normalized or not; callers pass unit-trace
    Gaussian components. The diagonal is set to zero.
    """
    if rho.shape != (16, 16):
        raise InvalidInputError(f"expected a 16x16 operator, got {rho.shape}")
    ms = majorana_matrices(4)
    cov = np.zeros((8, 8), dtype=np.complex128)
    for p in range(8):
        for q in range(8):
            if p != q:
                cov[p, q] = -1j * np.trace(ms[p] @ ms[q] @ rho)
    return cov
