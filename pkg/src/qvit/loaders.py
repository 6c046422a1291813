"""Unary amplitude-encoding circuits for unit vectors.

A unit vector x of dimension n is written into the weight-1 subspace by
an X on qubit 0 followed by a cascade of n-1 RBS gates on neighbouring
qubits, with angles computed by the recursion

    alpha_k = arccos(x_k / prod_{j<k} sin(alpha_j)),   k = 0..n-2.

arccos keeps every partial sine product nonnegative, so the recursion
can only produce vectors whose last nonzero entry is positive.  Vectors
violating that are encoded as ``-x`` and the flip is carried next to the
angles as a classical ``sign`` tag; downstream consumers square the
measured quantities, so the tag never changes a model output, but it
keeps the program invertible as a vector codec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qsim import Circuit, Gate

# Below this, every remaining amplitude is itself below the product and
# any choice of angle is consistent; 0 keeps the program deterministic.
_DEGENERATE_PRODUCT = 1e-12


@dataclass(frozen=True)
class LoaderProgram:
    """Angles plus classical sign tag; encodes ``sign * x``."""

    n: int
    angles: np.ndarray  # (n-1,), each in [0, pi]
    sign: float  # +1.0 or -1.0

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        if self.angles.shape != (self.n - 1,):
            raise ValueError(
                f"expected {self.n - 1} angles for n={self.n}, got {self.angles.shape}"
            )
        if self.sign not in (+1.0, -1.0):
            raise ValueError(f"sign must be +-1, got {self.sign}")


def compute_loader_angles(x: np.ndarray) -> LoaderProgram:
    """Angles encoding the unit vector x (as sign*x, see module docstring).

    The recursion alpha_k = arccos(y_k / prod sin(alpha_j)) is evaluated
    through the tail masses rem_k = sum_{j>=k} y_j^2, for which
    cos(alpha_k) = y_k / sqrt(rem_k) and sin(alpha_k) =
    sqrt(rem_{k+1}) / sqrt(rem_k); atan2 on (sqrt(rem_{k+1}), y_k) gives
    the same angles without the arccos boundary sensitivity, and a tail
    of exact zeros yields exactly zero angles.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("x must be a 1-D vector with n >= 2")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains NaN or infinity")
    norm = np.linalg.norm(x)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"x must be a unit vector (norm {norm!r}); not normalizing")

    nonzero = np.nonzero(x)[0]
    sign = -1.0 if x[nonzero[-1]] < 0 else 1.0
    y = sign * x

    n = x.shape[0]
    tail = np.zeros(n + 1)  # tail[k] = sum_{j >= k} y_j^2
    for j in range(n - 1, -1, -1):
        tail[j] = tail[j + 1] + y[j] * y[j]
    angles = np.zeros(n - 1)
    for k in range(n - 1):
        if np.sqrt(tail[k]) < _DEGENERATE_PRODUCT:
            break  # every remaining amplitude is below the product; stay 0
        angles[k] = np.arctan2(np.sqrt(tail[k + 1]), y[k])
    return LoaderProgram(n=n, angles=angles, sign=sign)


def decode_loader(prog: LoaderProgram) -> np.ndarray:
    """Unit vector a program encodes, sign tag applied (inverse of compute)."""
    amps = loader_amplitudes(prog)
    return prog.sign * amps


def loader_amplitudes(prog: LoaderProgram) -> np.ndarray:
    """Amplitudes the loader circuit produces (equals sign * source vector)."""
    n = prog.n
    amps = np.empty(n)
    prod = 1.0
    for k in range(n - 1):
        amps[k] = np.cos(prog.angles[k]) * prod
        prod *= np.sin(prog.angles[k])
    amps[n - 1] = prod
    return amps


def build_loader_circuit(prog: LoaderProgram) -> Circuit:
    """X on qubit 0 followed by the RBS cascade (exactly n-1 RBS gates)."""
    gates = [Gate.x(0)]
    gates += [Gate.rbs(k, k + 1, prog.angles[k]) for k in range(prog.n - 1)]
    return Circuit(n_qubits=prog.n, gates=tuple(gates))


def build_adjoint_loader(prog: LoaderProgram) -> Circuit:
    """Inverse loader: cascade reversed with negated angles, then the X.

    Composing loader then adjoint returns |0...0> exactly.  Note the
    trailing X only relabels the readout: the overlap amplitude that sits
    on |10...0> after the reversed cascade moves to |0...0>.  Circuits
    that measure the overlap on qubit 0 (the attention score circuit)
    therefore stop before the X; see `adjoint_cascade_gates`.
    """
    gates = [
        Gate.rbs(k, k + 1, -prog.angles[k]) for k in range(prog.n - 2, -1, -1)
    ]
    gates.append(Gate.x(0))
    return Circuit(n_qubits=prog.n, gates=tuple(gates))


def adjoint_cascade_gates(prog: LoaderProgram) -> list[Gate]:
    """The reversed, negated RBS cascade without the trailing X.

    Applied to a weight-1 state psi, the amplitude left on |10...0> is
    sign * <x, psi>, so squaring the qubit-0 excitation probability reads
    off an inner product.
    """
    return [Gate.rbs(k, k + 1, -prog.angles[k]) for k in range(prog.n - 2, -1, -1)]
