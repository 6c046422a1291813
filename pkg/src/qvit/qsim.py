"""Exact simulation of RBS-based circuits.

Two backends:

* a dense statevector backend over all 2**n amplitudes, used as the
  reference oracle (complex, so phase bugs cannot hide), and
* a fast path for states confined to the Hamming-weight-1 ("unary")
  subspace, where an RBS gate acts as a plain 2D Givens rotation on the
  n real amplitudes.

Conventions, fixed once and used everywhere:

* Qubit 0 is the leftmost position in ket notation.  For the dense
  backend the flat index of a basis state is the bitstring read with
  qubit 0 as the most significant bit, so the unary amplitude i lives at
  flat index ``1 << (n - 1 - i)``.
* ``RBS(q1, q2, theta)`` acts on the ordered pair (q1, q2) as the matrix
  ``[[1,0,0,0],[0,c,s,0],[0,-s,c,0],[0,0,0,1]]`` in the basis
  (|00>, |01>, |10>, |11>), c = cos(theta), s = sin(theta).  Restricted
  to the weight-1 subspace this is
  ``(a_q1, a_q2) <- (c*a_q1 - s*a_q2, s*a_q1 + c*a_q2)``,
  i.e. q2 receives +sin(theta)*a_q1 (verified against the dense backend
  in the test suite).
* ``RY(q, alpha)`` rotates by the full angle:
  ``[[cos a, -sin a], [sin a, cos a]]``.  Under this convention the
  eight-gate decomposition H,H / CZ / RY(+theta/2), RY(-theta/2) / CZ /
  H,H composes to exactly RBS(theta), with trivial global phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Dense states are an oracle, never a production path; beyond 14 qubits
# the memory/time cost stops being worth it.
DENSE_MAX_QUBITS = 14

_GATE_ARITY = {"X": 1, "H": 1, "RY": 1, "CZ": 2, "RBS": 2}
_GATE_HAS_ANGLE = {"X": False, "H": False, "RY": True, "CZ": False, "RBS": True}


@dataclass(frozen=True)
class Gate:
    """One circuit instruction: kind, qubit indices and optional angle."""

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in _GATE_ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != _GATE_ARITY[self.kind]:
            raise ValueError(
                f"{self.kind} expects {_GATE_ARITY[self.kind]} qubit(s), "
                f"got {self.qubits}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.kind} qubits must be distinct, got {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise ValueError(f"negative qubit index in {self.qubits}")
        if _GATE_HAS_ANGLE[self.kind]:
            if self.angle is None or not np.isfinite(self.angle):
                raise ValueError(f"{self.kind} needs a finite angle, got {self.angle}")
        elif self.angle is not None:
            raise ValueError(f"{self.kind} takes no angle")

    @classmethod
    def x(cls, q: int) -> "Gate":
        return cls("X", (q,))

    @classmethod
    def h(cls, q: int) -> "Gate":
        return cls("H", (q,))

    @classmethod
    def ry(cls, q: int, angle: float) -> "Gate":
        return cls("RY", (q,), float(angle))

    @classmethod
    def cz(cls, q1: int, q2: int) -> "Gate":
        return cls("CZ", (q1, q2))

    @classmethod
    def rbs(cls, q1: int, q2: int, angle: float) -> "Gate":
        return cls("RBS", (q1, q2), float(angle))


@dataclass(frozen=True)
class Circuit:
    """Ordered gate program over ``n_qubits`` qubits."""

    n_qubits: int
    gates: tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits) >= self.n_qubits:
                raise ValueError(
                    f"gate {g.kind}{g.qubits} out of range for {self.n_qubits} qubits"
                )

    def __len__(self) -> int:
        return len(self.gates)


def circuit_to_text(circuit: Circuit) -> str:
    """One gate per line, angles with 15 significant digits."""
    lines = []
    for g in circuit.gates:
        parts = [g.kind] + [str(q) for q in g.qubits]
        if g.angle is not None:
            parts.append(f"{g.angle:.15g}")
        lines.append(" ".join(parts))
    return "\n".join(lines)


def rbs_matrix(angle: float) -> np.ndarray:
    """4x4 RBS matrix mixing |01> and |10>, identity on |00> and |11>."""
    if not np.isfinite(angle):
        raise ValueError("angle must be finite")
    c, s = np.cos(angle), np.sin(angle)
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, s, 0.0],
            [0.0, -s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def rbs_decomposition(q1: int, q2: int, angle: float) -> list[Gate]:
    """RBS(theta) as H,H / CZ / RY(+-theta/2) / CZ / H,H.

    With this package's full-angle RY the composition reproduces
    rbs_matrix(angle) exactly (global phase 1).
    """
    if q1 == q2:
        raise ValueError("q1 and q2 must differ")
    return [
        Gate.h(q1),
        Gate.h(q2),
        Gate.cz(q1, q2),
        Gate.ry(q1, +angle / 2.0),
        Gate.ry(q2, -angle / 2.0),
        Gate.cz(q1, q2),
        Gate.h(q1),
        Gate.h(q2),
    ]


# ---------------------------------------------------------------------------
# dense backend


def zero_state(n_qubits: int) -> np.ndarray:
    """|0...0> as a complex 2**n amplitude vector."""
    if not 1 <= n_qubits <= DENSE_MAX_QUBITS:
        raise ValueError(
            f"dense backend supports 1..{DENSE_MAX_QUBITS} qubits, got {n_qubits}"
        )
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[0] = 1.0
    return psi


def _n_from_dense(state: np.ndarray) -> int:
    n = int(state.size).bit_length() - 1
    if 1 << n != state.size:
        raise ValueError(f"dense state length {state.size} is not a power of two")
    return n


def apply_gate_dense(state: np.ndarray, gate: Gate) -> np.ndarray:
    """Apply one gate to a dense state; returns a new array."""
    n = _n_from_dense(state)
    if max(gate.qubits) >= n:
        raise ValueError(f"gate {gate.kind}{gate.qubits} out of range for n={n}")
    psi = np.array(state, dtype=complex).reshape((2,) * n)
    if gate.kind == "X":
        psi = np.flip(psi, axis=gate.qubits[0])
    elif gate.kind == "H":
        m = np.moveaxis(psi, gate.qubits[0], 0)
        a0, a1 = m[0].copy(), m[1].copy()
        r = np.sqrt(0.5)
        m[0] = r * (a0 + a1)
        m[1] = r * (a0 - a1)
    elif gate.kind == "RY":
        m = np.moveaxis(psi, gate.qubits[0], 0)
        a0, a1 = m[0].copy(), m[1].copy()
        c, s = np.cos(gate.angle), np.sin(gate.angle)
        m[0] = c * a0 - s * a1
        m[1] = s * a0 + c * a1
    elif gate.kind == "CZ":
        m = np.moveaxis(psi, gate.qubits, (0, 1))
        m[1, 1] = -m[1, 1]
    elif gate.kind == "RBS":
        m = np.moveaxis(psi, gate.qubits, (0, 1))
        a01, a10 = m[0, 1].copy(), m[1, 0].copy()
        c, s = np.cos(gate.angle), np.sin(gate.angle)
        m[0, 1] = c * a01 + s * a10
        m[1, 0] = -s * a01 + c * a10
    else:  # pragma: no cover - Gate validates kinds
        raise ValueError(f"unknown gate kind {gate.kind!r}")
    return psi.reshape(-1)


def run_dense(circuit: Circuit, state: np.ndarray | None = None) -> np.ndarray:
    """Run a circuit on the dense backend, starting from |0...0> by default."""
    if circuit.n_qubits > DENSE_MAX_QUBITS:
        raise ValueError(
            f"dense backend capped at {DENSE_MAX_QUBITS} qubits "
            f"(asked for {circuit.n_qubits})"
        )
    psi = zero_state(circuit.n_qubits) if state is None else np.asarray(state, dtype=complex)
    if psi.size != 1 << circuit.n_qubits:
        raise ValueError("initial state has wrong length for this circuit")
    for g in circuit.gates:
        psi = apply_gate_dense(psi, g)
    return psi


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    """Full 2**n x 2**n matrix of a circuit (oracle-sized circuits only)."""
    dim = 1 << circuit.n_qubits
    cols = []
    for j in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[j] = 1.0
        cols.append(run_dense(circuit, e))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# unary (Hamming-weight-1) fast path


def unary_basis_index(n_qubits: int, i: int) -> int:
    """Flat dense index of the basis state with only qubit i excited."""
    if not 0 <= i < n_qubits:
        raise ValueError(f"qubit {i} out of range for n={n_qubits}")
    return 1 << (n_qubits - 1 - i)


def unary_from_dense(state: np.ndarray, n_qubits: int) -> np.ndarray:
    """Project a dense state onto its weight-1 amplitudes (real parts).

    Raises if there is significant amplitude outside the subspace or a
    significant imaginary component inside it.
    """
    idx = [unary_basis_index(n_qubits, i) for i in range(n_qubits)]
    amps = state[idx]
    outside = np.linalg.norm(np.delete(state, idx))
    if outside > 1e-10:
        raise ValueError(f"state leaks outside the weight-1 subspace: {outside:.3e}")
    if np.abs(amps.imag).max(initial=0.0) > 1e-10:
        raise ValueError("weight-1 amplitudes have an imaginary component")
    return np.ascontiguousarray(amps.real)


def apply_rbs_unary(
    amps: np.ndarray, q1: int, q2: int, angle: float
) -> np.ndarray:
    """Givens rotation of the (q1, q2) amplitudes; other entries untouched."""
    if q1 == q2:
        raise ValueError("q1 and q2 must differ")
    n = amps.shape[0]
    if not (0 <= q1 < n and 0 <= q2 < n):
        raise ValueError(f"qubits ({q1},{q2}) out of range for n={n}")
    out = np.array(amps, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    a, b = out[q1], out[q2]
    out[q1] = c * a - s * b
    out[q2] = s * a + c * b
    return out


def run_unary(circuit: Circuit) -> np.ndarray:
    """Simulate an {X-initialization, RBS...} circuit on n real amplitudes.

    The circuit must hold exactly one X, before any RBS gate; anything
    else falls outside the weight-1 subspace and is rejected.
    """
    amps = None
    for g in circuit.gates:
        if g.kind == "X":
            if amps is not None:
                raise ValueError("only a single excitation-creating X is supported")
            amps = np.zeros(circuit.n_qubits)
            amps[g.qubits[0]] = 1.0
        elif g.kind == "RBS":
            if amps is None:
                raise ValueError("RBS before the initializing X leaves |0...0>")
            amps = apply_rbs_unary(amps, g.qubits[0], g.qubits[1], g.angle)
        else:
            raise ValueError(f"gate {g.kind} is not weight-1 preserving")
    if amps is None:
        raise ValueError("circuit never enters the weight-1 subspace")
    return amps


def measure_qubit_one_prob(state: np.ndarray, qubit: int) -> float:
    """Probability that ``qubit`` reads 1.

    Dense states are complex arrays of length 2**n; unary states are real
    arrays of length n, for which the answer is amplitudes[qubit]**2.
    """
    state = np.asarray(state)
    if np.iscomplexobj(state):
        n = _n_from_dense(state)
        if not 0 <= qubit < n:
            raise ValueError(f"qubit {qubit} out of range for n={n}")
        idx = np.arange(state.size)
        mask = (idx >> (n - 1 - qubit)) & 1 == 1
        return float(np.sum(np.abs(state[mask]) ** 2))
    if not 0 <= qubit < state.shape[0]:
        raise ValueError(f"qubit {qubit} out of range for n={state.shape[0]}")
    return float(state[qubit] ** 2)
