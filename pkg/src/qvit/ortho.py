"""Pyramid orthogonal layers built from RBS gates.

A pyramid layer on n wires is the fixed diamond schedule of n(n-1)/2
RBS gates on neighbouring wires.  On the weight-1 subspace each gate is
a Givens rotation, so the whole layer is an n x n special-orthogonal
matrix with exactly as many free angles as SO(n) has dimensions.

The layer can be streamed (O(n^2) scalar rotations, never materializing
the matrix), extracted into an explicit matrix, differentiated exactly
in reverse mode, or produced from a given SO(n) matrix by Givens
elimination along the schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qsim import Circuit, Gate


class NonOrthogonalError(ValueError):
    """Input matrix is not orthogonal within tolerance."""


class NegativeDeterminantError(ValueError):
    """Orthogonal input has det = -1; pyramid layers span SO(n) only."""


def pyramid_wiring(n: int) -> tuple[tuple[int, int], ...]:
    """Fixed diamond schedule of adjacent pairs, n(n-1)/2 of them.

    Gates are emitted column by column (time order), top to bottom inside
    each column; columns with disjoint pairs commute, the canonical order
    just keeps angle vectors reproducible.  n=4 yields
    (0,1),(1,2),(0,1),(2,3),(1,2),(0,1).
    """
    if n < 2:
        raise ValueError("pyramid needs n >= 2")
    pairs = []
    for col in range(2 * n - 3):
        top = min(col, 2 * (n - 2) - col)
        pairs.extend((q, q + 1) for q in range(col % 2, top + 1, 2))
    assert len(pairs) == n * (n - 1) // 2
    return tuple(pairs)


@dataclass(frozen=True)
class PyramidLayer:
    """Angle vector bound to the pyramid schedule for its dimension."""

    n: int
    angles: np.ndarray  # (n*(n-1)/2,) in schedule order
    wiring: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        object.__setattr__(self, "wiring", pyramid_wiring(self.n))
        if self.angles.shape != (len(self.wiring),):
            raise ValueError(
                f"n={self.n} needs {len(self.wiring)} angles, "
                f"got shape {self.angles.shape}"
            )
        if not np.all(np.isfinite(self.angles)):
            raise ValueError("angles must be finite")


def identity_layer(n: int) -> PyramidLayer:
    return PyramidLayer(n, np.zeros(n * (n - 1) // 2))


def random_layer(n: int, rng: np.random.Generator, std: float = 0.1) -> PyramidLayer:
    """Near-identity initialization: angles ~ N(0, std^2)."""
    return PyramidLayer(n, rng.normal(0.0, std, size=n * (n - 1) // 2))


def layer_to_circuit(layer: PyramidLayer) -> Circuit:
    gates = tuple(
        Gate.rbs(q1, q2, a) for (q1, q2), a in zip(layer.wiring, layer.angles)
    )
    return Circuit(n_qubits=layer.n, gates=gates)


def _rotate_rows(mat: np.ndarray, q: int, c: float, s: float) -> None:
    """In place: (row_q, row_q1) <- (c*row_q - s*row_q1, s*row_q + c*row_q1)."""
    a = mat[q].copy()
    b = mat[q + 1]
    mat[q] = c * a - s * b
    mat[q + 1] = s * a + c * b


def extract_matrix(layer: PyramidLayer) -> np.ndarray:
    """The matrix M with circuit(x) = M x on unary amplitudes."""
    m = np.eye(layer.n)
    for (q, _), theta in zip(layer.wiring, layer.angles):
        _rotate_rows(m, q, np.cos(theta), np.sin(theta))
    return m


def apply_layer(layer: PyramidLayer, x: np.ndarray) -> np.ndarray:
    """Stream the rotations over a vector; equals extract_matrix(layer) @ x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (layer.n,):
        raise ValueError(f"expected vector of dim {layer.n}, got {x.shape}")
    out = x.copy()
    for (q, _), theta in zip(layer.wiring, layer.angles):
        c, s = np.cos(theta), np.sin(theta)
        a, b = out[q], out[q + 1]
        out[q] = c * a - s * b
        out[q + 1] = s * a + c * b
    return out


def apply_layer_columns(layer: PyramidLayer, mat: np.ndarray) -> np.ndarray:
    """Apply the layer to every column of a (n, m) matrix at once."""
    mat = np.asarray(mat, dtype=float)
    if mat.shape[0] != layer.n:
        raise ValueError(f"expected {layer.n} rows, got {mat.shape}")
    out = mat.copy()
    for (q, _), theta in zip(layer.wiring, layer.angles):
        _rotate_rows(out, q, np.cos(theta), np.sin(theta))
    return out


def forward_columns_with_tape(
    layer: PyramidLayer, mat: np.ndarray
) -> tuple[np.ndarray, list]:
    """Like apply_layer_columns but records pre-rotation rows for backward."""
    out = np.array(mat, dtype=float)
    tape = []
    cos = np.cos(layer.angles)
    sin = np.sin(layer.angles)
    for i, (q, _) in enumerate(layer.wiring):
        a = out[q].copy()
        b = out[q + 1].copy()
        tape.append((a, b))
        out[q] = cos[i] * a - sin[i] * b
        out[q + 1] = sin[i] * a + cos[i] * b
    return out, tape


def backward_columns(
    layer: PyramidLayer, tape: list, delta: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode through the rotation stream.

    ``delta`` is dL/d(output); returns (dL/d(angles), dL/d(input)).
    """
    grad_angles = np.zeros_like(layer.angles)
    d = np.array(delta, dtype=float)
    cos = np.cos(layer.angles)
    sin = np.sin(layer.angles)
    for i in range(len(layer.wiring) - 1, -1, -1):
        q = layer.wiring[i][0]
        c, s = cos[i], sin[i]
        a, b = tape[i]
        # d(out_q)/dtheta = -s*a - c*b ; d(out_q1)/dtheta = c*a - s*b
        grad_angles[i] = np.sum(d[q] * (-s * a - c * b) + d[q + 1] * (c * a - s * b))
        dq = d[q].copy()
        dq1 = d[q + 1]
        d[q] = c * dq + s * dq1
        d[q + 1] = -s * dq + c * dq1
    return grad_angles, d


def layer_grad(
    layer: PyramidLayer, x: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of upstream . apply_layer(layer, x).

    Returns (d/d angles, d/d x), both in the natural orders.
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if x.shape != (layer.n,) or upstream.shape != (layer.n,):
        raise ValueError("x and upstream must both have the layer dimension")
    _, tape = forward_columns_with_tape(layer, x[:, None])
    grad_angles, d = backward_columns(layer, tape, upstream[:, None])
    return grad_angles, d[:, 0]


def compile_matrix(
    m: np.ndarray,
    orth_tol: float = 1e-8,
    det_tol: float = 1e-6,
) -> PyramidLayer:
    """Angles reproducing a given special-orthogonal matrix.

    Walks the pyramid schedule, peeling one inverse rotation off the
    right of the matrix per gate; gate occurrence o of pair (q, q+1)
    zeroes the sub-diagonal entry (n-1-o, q), so column q is cleared
    bottom-up and the residual ends at the identity.  By construction
    extract_matrix(compile_matrix(M)) == M up to roundoff.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise NonOrthogonalError(f"expected a square matrix of dim >= 2, got {m.shape}")
    n = m.shape[0]
    residual = np.abs(m.T @ m - np.eye(n)).max()
    if residual > orth_tol:
        raise NonOrthogonalError(
            f"matrix is not orthogonal: max |M^T M - I| = {residual:.3e}"
        )
    det = np.linalg.det(m)
    if det < 0:
        raise NegativeDeterminantError(
            f"det = {det:.6f}; pyramid layers realize SO(n) only "
            "(pre-multiply a diagonal sign flip if a reflection is wanted)"
        )
    if abs(det - 1.0) > det_tol:
        raise NonOrthogonalError(f"det = {det!r} is not +1 within {det_tol}")

    wiring = pyramid_wiring(n)
    angles = np.zeros(len(wiring))
    a = m.copy()
    seen: dict[int, int] = {}
    for i, (q, _) in enumerate(wiring):
        occ = seen.get(q, 0)
        seen[q] = occ + 1
        r = n - 1 - occ
        theta = np.arctan2(a[r, q], a[r, q + 1])
        angles[i] = theta
        c, s = np.cos(theta), np.sin(theta)
        col_q = a[:, q].copy()
        col_q1 = a[:, q + 1]
        a[:, q] = c * col_q - s * col_q1
        a[:, q + 1] = s * col_q + c * col_q1
    leftover = np.abs(a - np.eye(n)).max()
    if leftover > orth_tol:
        raise NonOrthogonalError(
            f"elimination residual {leftover:.3e} exceeds {orth_tol}"
        )
    return PyramidLayer(n, angles)
