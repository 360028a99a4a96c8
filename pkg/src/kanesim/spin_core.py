"""Operator algebra for one- and two-donor spin systems.

Operators are plain dense ``numpy`` arrays of complex128. The Hilbert space
of a donor is electron (x) nucleus, and two donors are ordered
``e1 (x) n1 (x) e2 (x) n2``. For every spin the "up" state is the first
basis vector, so the nuclear qubit states are ``|0> = up`` and
``|1> = down``, and ``|down>`` for an electron is ``[0, 1]``.
"""
from __future__ import annotations

from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError

ELECTRON = "e"
NUCLEUS = "n"

#: Tolerances used by the density-matrix validity predicates.
TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8
PURITY_TOL = 1e-8

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}

UP = np.array([1, 0], dtype=complex)
DOWN = np.array([0, 1], dtype=complex)


class SpinLabel(NamedTuple):
    """A single spin site: donor index and species (``"e"`` or ``"n"``)."""

    site: int
    species: str

    def __str__(self):
        return f"{self.species}{self.site}"

    @classmethod
    def parse(cls, text: "str | SpinLabel") -> "SpinLabel":
        """Build a label from strings such as ``"e1"`` or ``"n2"``."""
        if isinstance(text, SpinLabel):
            label = text
        else:
            text = str(text).strip()
            if len(text) != 2 or text[0] not in (ELECTRON, NUCLEUS) or not text[1].isdigit():
                raise DomainError(f"cannot parse spin label {text!r}")
            label = cls(int(text[1]), text[0])
        if label.site not in (1, 2) or label.species not in (ELECTRON, NUCLEUS):
            raise DomainError(f"invalid spin label {label!r}")
        return label


def layout(n_donors: int) -> tuple:
    """Return the site ordering for ``n_donors`` donors (1 or 2)."""
    if n_donors not in (1, 2):
        raise DomainError(f"n_donors must be 1 or 2, got {n_donors}")
    return tuple(
        SpinLabel(site, species)
        for site in range(1, n_donors + 1)
        for species in (ELECTRON, NUCLEUS)
    )


def n_donors_of(dim: int) -> int:
    """Number of donors for a Hilbert-space dimension of 4 or 16."""
    if dim == 4:
        return 1
    if dim == 16:
        return 2
    raise DomainError(f"dimension {dim} does not describe one or two donors")


def _site_index(target, labels) -> int:
    target = SpinLabel.parse(target)
    labels = [SpinLabel.parse(s) for s in labels]
    try:
        return labels.index(target)
    except ValueError:
        raise DomainError(f"{target} is not part of layout {[str(s) for s in labels]}") from None


def tensor(*ops) -> np.ndarray:
    """Kronecker product of the given operators or kets, left to right."""
    if not ops:
        raise DomainError("tensor needs at least one operand")
    return reduce(np.kron, [np.asarray(op, dtype=complex) for op in ops])


def embed(single: np.ndarray, target, labels: Sequence) -> np.ndarray:
    """Embed a 2x2 operator on ``target``, identity on the other sites."""
    k = _site_index(target, labels)
    factors = [I2] * len(labels)
    factors[k] = np.asarray(single, dtype=complex)
    return tensor(*factors)


def pauli(axis: str, target, labels: Sequence) -> np.ndarray:
    """Pauli ``axis`` (X, Y or Z) acting on ``target`` within ``labels``.

    Examples
    --------
    >>> pauli("Z", "n1", ["n1"]).real
    array([[ 1.,  0.],
           [ 0., -1.]])
    """
    key = str(axis).upper()
    if key not in PAULI:
        raise DomainError(f"unknown Pauli axis {axis!r}")
    return embed(PAULI[key], target, labels)


def total_z(labels: Sequence) -> np.ndarray:
    """Sum of Z over every site of ``labels`` (diagonal)."""
    return sum(pauli("Z", s, labels) for s in labels)


def z_diagonals(labels: Sequence) -> dict:
    """Diagonal of Z for each site, keyed by :class:`SpinLabel`."""
    return {SpinLabel.parse(s): np.real(np.diag(pauli("Z", s, labels))) for s in labels}


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and np.max(np.abs(op - op.conj().T)) < tol


def is_unitary(op: np.ndarray, tol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return np.max(np.abs(op.conj().T @ op - np.eye(op.shape[0]))) < tol


def purity(rho: np.ndarray) -> float:
    """Tr(rho^2)."""
    rho = np.asarray(rho)
    return float(np.real(np.vdot(rho.conj().T, rho)))


def density_matrix_defects(rho: np.ndarray) -> dict:
    """Trace error, Hermiticity error and minimum eigenvalue of ``rho``."""
    rho = np.asarray(rho)
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    sym = 0.5 * (rho + rho.conj().T)
    return {
        "trace_error": float(abs(np.trace(rho) - 1.0)),
        "hermiticity_error": herm,
        "min_eigenvalue": float(np.linalg.eigvalsh(sym)[0]),
    }


def check_density_matrix(rho: np.ndarray, error=DomainError, what: str = "state") -> np.ndarray:
    """Raise ``error`` unless ``rho`` is a valid density matrix.

    Valid means unit trace to 1e-9, Hermitian to 1e-10 and minimum
    eigenvalue at least -1e-8. The input is returned unchanged.
    """
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise error(f"{what} is not a square matrix")
    d = density_matrix_defects(rho)
    problems = []
    if d["trace_error"] >= TRACE_TOL:
        problems.append(f"|Tr - 1| = {d['trace_error']:.3e}")
    if d["hermiticity_error"] >= HERMITIAN_TOL:
        problems.append(f"non-Hermitian by {d['hermiticity_error']:.3e}")
    if d["min_eigenvalue"] < -POSITIVITY_TOL:
        problems.append(f"min eigenvalue {d['min_eigenvalue']:.3e}")
    if problems:
        raise error(f"{what} is not a valid density matrix: " + ", ".join(problems))
    return rho


def expectation(obs: np.ndarray, rho: np.ndarray) -> float:
    """Tr(obs rho) for a Hermitian observable."""
    obs = np.asarray(obs)
    rho = np.asarray(rho)
    if obs.shape != rho.shape:
        raise DomainError(f"observable {obs.shape} and state {rho.shape} dimensions differ")
    value = np.trace(obs @ rho)
    if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
        raise DomainError("expectation value has an imaginary part; is the observable Hermitian?")
    return float(value.real)


def partial_trace(rho: np.ndarray, keep, labels: Sequence) -> np.ndarray:
    """Reduced density matrix on the site(s) ``keep``.

    ``keep`` is a single label or a sequence of labels; the kept sites
    are returned in layout order.
    """
    rho = np.asarray(rho, dtype=complex)
    labels = [SpinLabel.parse(s) for s in labels]
    if isinstance(keep, (str, SpinLabel)):
        keep = [keep]
    idx = sorted({_site_index(k, labels) for k in keep})
    n = len(labels)
    if rho.shape != (2**n, 2**n):
        raise DomainError(f"state shape {rho.shape} does not match {n} sites")
    traced = [k for k in range(n) if k not in idx]
    t = rho.reshape([2] * (2 * n))
    # Trace out the highest axes first so the remaining indices stay valid.
    for k in sorted(traced, reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + m)
    d = 2 ** len(idx)
    return t.reshape(d, d)


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """(<X>, <Y>, <Z>) of a single-spin density matrix."""
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise DomainError(f"Bloch vector needs a 2x2 state, got {rho.shape}")
    return np.array([expectation(PAULI[a], rho) for a in "XYZ"])


def bloch_radius(rho: np.ndarray) -> float:
    """Length of the Bloch vector; 1 for pure states, 0 for I/2."""
    return float(np.linalg.norm(bloch_vector(rho)))


# -- state constructors -------------------------------------------------------

_SQ2 = 1.0 / np.sqrt(2.0)
_QUBIT_KETS = {
    "0": UP,
    "1": DOWN,
    "+": _SQ2 * (UP + DOWN),
    "-": _SQ2 * (UP - DOWN),
}
_MINUS_SIGNS = ("−", "–")

_BELL = {
    "00+11": (np.array([1, 0, 0, 1]) * _SQ2).astype(complex),
    "00-11": (np.array([1, 0, 0, -1]) * _SQ2).astype(complex),
    "01+10": (np.array([0, 1, 1, 0]) * _SQ2).astype(complex),
    "01-10": (np.array([0, 1, -1, 0]) * _SQ2).astype(complex),
}
_BELL_ALIASES = {
    "phi+": "00+11",
    "phi-": "00-11",
    "psi+": "01+10",
    "psi-": "01-10",
    "Φ+": "00+11",
    "Φ-": "00-11",
    "Ψ+": "01+10",
    "Ψ-": "01-10",
}


def normalize_label(label: str) -> str:
    """Canonical ASCII form of a state label (unicode minus, Greek tags)."""
    text = str(label).strip()
    for m in _MINUS_SIGNS:
        text = text.replace(m, "-")
    text = text.replace("|", "").replace(">", "").replace(" ", "")
    return _BELL_ALIASES.get(text.lower() if text.lower() in _BELL_ALIASES else text, text)


def nuclear_ket(label: str, n_donors: int) -> np.ndarray:
    """Nuclear-qubit ket for a label such as ``"0"``, ``"+1"`` or ``"00+11"``."""
    text = normalize_label(label)
    if n_donors == 2 and text in _BELL:
        return _BELL[text].copy()
    if len(text) == n_donors and all(c in _QUBIT_KETS for c in text):
        return tensor(*[_QUBIT_KETS[c] for c in text])
    # "ab+cd" / "ab-cd": equal superposition of two basis states
    for sign, op in ((1.0, "+"), (-1.0, "-")):
        left, sep, right = text.partition(op)
        if sep and len(left) == len(right) == n_donors and set(left + right) <= {"0", "1"} and left != right:
            return _SQ2 * (tensor(*[_QUBIT_KETS[c] for c in left]) + sign * tensor(*[_QUBIT_KETS[c] for c in right]))
    raise DomainError(f"unknown state label {label!r} for {n_donors} donor(s)")


def embed_nuclear_ket(nuc: np.ndarray, n_donors: int) -> np.ndarray:
    """Full ket with every electron down and nuclei in ``nuc``."""
    nuc = np.asarray(nuc, dtype=complex).reshape([2] * n_donors)
    out = np.zeros([2] * (2 * n_donors), dtype=complex)
    if n_donors == 1:
        out[1, :] = nuc
    else:
        out[1, :, 1, :] = nuc
    return out.reshape(-1)


def nuclear_subspace_indices(n_donors: int) -> np.ndarray:
    """Indices of the electrons-down sector, ordered like nuclear kets."""
    eye = np.eye(2**n_donors, dtype=complex)
    return np.array([int(np.argmax(np.abs(embed_nuclear_ket(v, n_donors)))) for v in eye])


def ket_to_dm(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def make_ket(label: str, n_donors: int = 1) -> np.ndarray:
    return embed_nuclear_ket(nuclear_ket(label, n_donors), n_donors)


def make_state(label: str, n_donors: int = 1) -> np.ndarray:
    """Pure density matrix with electrons polarized down.

    Parameters
    ----------
    label : str
        ``"0"``, ``"1"``, ``"+"`` or ``"-"`` per nucleus (``"0+"`` for two
        donors), or a Bell tag (``"00+11"``, ``"Phi+"`` and friends).
    n_donors : int
        1 or 2.
    """
    if n_donors not in (1, 2):
        raise DomainError(f"n_donors must be 1 or 2, got {n_donors}")
    return ket_to_dm(make_ket(label, n_donors))
