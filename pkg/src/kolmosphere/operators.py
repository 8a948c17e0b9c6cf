"""
Truncated per-mode operators of the linearised two-jet flow.

For a fixed azimuthal order ``m`` every operator acts on the coefficients
``c_n`` of ``u = sum_n c_n Y_n^m`` with ``n = n_lo, ..., n_hi``.  Because
the basis is orthonormal, all L2 inner products are plain coefficient
sums and all operators are banded (bandwidth at most 2).

Band storage
------------
``bands[k]`` holds the ``k``-th diagonal: ``M[i, i + k]`` for ``k >= 0``
and ``M[i - k, i]`` for ``k < 0``, each of length ``dim - |k|``.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .harmonics import _check_theta, coupling, eval_basis_dtheta, laplace_eigenvalue

__all__ = [
    "BandedOperator",
    "Kind",
    "ModeSpace",
    "Scale",
    "SpectralVector",
    "assemble_A",
    "assemble_B2",
    "assemble_L",
    "assemble_Lambda",
    "assemble_cos",
    "assemble_sin2_form",
    "default_n_hi",
    "project_P",
    "project_Q",
    "read_banded",
    "sobolev_scale",
    "velocity_profile",
    "write_banded",
]

MIN_SPAN = 8
BANDED_FORMAT = "kolmosphere-banded 1"


class Kind(enum.Enum):
    FULL = "FULL"
    REDUCED = "REDUCED"


class Scale(enum.Enum):
    MINUS_LAPLACE = "MINUS_LAPLACE"
    MINUS_A = "MINUS_A"


def _lowest_degree(m, kind):
    return max(2 if kind is Kind.FULL else 3, abs(m))


def default_n_hi(alpha, m, kind=Kind.REDUCED):
    """Starting truncation ``max(64, n_lo + ceil(6 sqrt|alpha m|))``."""
    n_lo = _lowest_degree(m, kind)
    return max(64, n_lo + int(math.ceil(6.0 * math.sqrt(abs(alpha * m)))))


@dataclass(frozen=True)
class ModeSpace:
    """
    Degrees ``n_lo..n_hi`` at azimuthal order ``m``.

    ``Kind.FULL`` starts at ``max(2, |m|)``; ``Kind.REDUCED`` drops the
    ``Y_2^m`` direction and starts at ``max(3, |m|)``.
    """

    m: int
    n_hi: int
    kind: Kind = Kind.FULL

    def __post_init__(self):
        if int(self.m) != self.m or self.m == 0:
            raise ValueError("m must be a nonzero integer")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n_hi", int(self.n_hi))
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.n_hi < self.n_lo + MIN_SPAN:
            raise ValueError(
                f"n_hi={self.n_hi} too small, need at least n_lo + {MIN_SPAN} = {self.n_lo + MIN_SPAN}"
            )

    @property
    def n_lo(self) -> int:
        return _lowest_degree(self.m, self.kind)

    @property
    def dim(self) -> int:
        return self.n_hi - self.n_lo + 1

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.n_lo, self.n_hi + 1)

    def reduced(self) -> "ModeSpace":
        return ModeSpace(self.m, self.n_hi, Kind.REDUCED)

    def full(self) -> "ModeSpace":
        return ModeSpace(self.m, self.n_hi, Kind.FULL)

    def with_n_hi(self, n_hi) -> "ModeSpace":
        return ModeSpace(self.m, n_hi, self.kind)

    def index(self, n) -> int:
        """Row of degree ``n``."""
        if not self.n_lo <= n <= self.n_hi:
            raise IndexError(f"degree {n} not in [{self.n_lo}, {self.n_hi}]")
        return int(n) - self.n_lo


@dataclass(frozen=True)
class SpectralVector:
    """Coefficients of ``sum_n c_n Y_n^m`` over ``space``."""

    space: ModeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def basis(cls, space, n):
        """The unit vector ``Y_n^m``."""
        c = np.zeros(space.dim, dtype=complex)
        c[space.index(n)] = 1.0
        return cls(space, c)

    @classmethod
    def random(cls, space, rng):
        """Standard complex Gaussian coefficients."""
        c = rng.standard_normal(space.dim) + 1j * rng.standard_normal(space.dim)
        return cls(space, c)

    def inner(self, other) -> complex:
        """``(self, other)``, linear in the first slot."""
        return complex(np.vdot(other.coeffs, self.coeffs))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def sobolev_norm(self, s, which=Scale.MINUS_LAPLACE) -> float:
        return sobolev_scale(self, s, which).norm()


class BandedOperator:
    """
    Immutable banded matrix on a :class:`ModeSpace`.

    Parameters
    ----------
    space : ModeSpace
    bands : mapping of int to array_like
        Diagonal offset to values, see the module docstring for layout.
    """

    __slots__ = ("space", "bands")

    def __init__(self, space: ModeSpace, bands: Mapping[int, np.ndarray]):
        dim = space.dim
        store = {}
        for k, v in sorted(bands.items()):
            k = int(k)
            arr = np.array(v)
            if arr.dtype.kind not in "fc":
                arr = arr.astype(float)
            if abs(k) > 2:
                raise ValueError("bandwidth must not exceed 2")
            if arr.shape != (dim - abs(k),):
                raise ValueError(f"band {k} needs length {dim - abs(k)}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"band {k} has non-finite entries")
            arr.setflags(write=False)
            store[k] = arr
        if 0 not in store:
            store[0] = np.zeros(dim)
            store[0].setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "bands", dict(sorted(store.items())))

    def __setattr__(self, name, value):
        raise AttributeError("BandedOperator is immutable")

    def __repr__(self):
        return f"BandedOperator(m={self.space.m}, n={self.space.n_lo}..{self.space.n_hi}, bandwidth={self.bandwidth})"

    @property
    def bandwidth(self) -> int:
        nz = [abs(k) for k, v in self.bands.items() if np.any(v != 0)]
        return max(nz, default=0)

    @property
    def shape(self):
        return (self.space.dim, self.space.dim)

    @property
    def is_real(self) -> bool:
        return all(np.isrealobj(v) or not np.any(v.imag) for v in self.bands.values())

    def todense(self) -> np.ndarray:
        dtype = complex if any(np.iscomplexobj(v) for v in self.bands.values()) else float
        out = np.zeros(self.shape, dtype=dtype)
        for k, v in self.bands.items():
            out += np.diag(v, k)
        return out

    def tosparse(self, format="csc"):
        offs = list(self.bands)
        return sp.diags([self.bands[k] for k in offs], offs, shape=self.shape, format=format)

    def matvec(self, u):
        """Apply to a :class:`SpectralVector` or a raw coefficient array."""
        if isinstance(u, SpectralVector):
            if u.space != self.space:
                raise ValueError("vector lives on a different space")
            return SpectralVector(self.space, self.matvec(u.coeffs))
        x = np.asarray(u)
        dtype = np.result_type(x, *self.bands.values())
        out = (self.bands[0] * x).astype(dtype)
        for k, v in self.bands.items():
            if k > 0:
                out[:-k] += v * x[k:]
            elif k < 0:
                out[-k:] += v * x[:k]
        return out

    __matmul__ = matvec

    def _combine(self, other, sign):
        if self.space != other.space:
            raise ValueError("operators live on different spaces")
        keys = set(self.bands) | set(other.bands)
        out = {}
        for k in keys:
            a = self.bands.get(k)
            b = other.bands.get(k)
            if a is None:
                out[k] = sign * b
            elif b is None:
                out[k] = a
            else:
                out[k] = a + sign * b
        return BandedOperator(self.space, out)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __mul__(self, scalar):
        return BandedOperator(self.space, {k: scalar * v for k, v in self.bands.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def shifted(self, z):
        """``z I - self``."""
        out = {k: -v for k, v in self.bands.items()}
        out[0] = z - self.bands[0]
        return BandedOperator(self.space, out)

    def conj(self):
        return BandedOperator(self.space, {k: np.conj(v) for k, v in self.bands.items()})

    def transpose(self):
        return BandedOperator(self.space, {-k: v for k, v in self.bands.items()})

    def restrict(self, space: ModeSpace):
        """Compress onto a sub-range of degrees (e.g. FULL to REDUCED)."""
        if space.m != self.space.m or space.n_hi != self.space.n_hi or space.n_lo < self.space.n_lo:
            raise ValueError("target space is not a sub-slice of this space")
        drop = space.n_lo - self.space.n_lo
        return BandedOperator(space, {k: v[drop:] for k, v in self.bands.items()})

    def equals(self, other) -> bool:
        """Exact entrywise equality."""
        return self.space == other.space and np.array_equal(self.todense(), other.todense())


def _diag(space, values):
    return BandedOperator(space, {0: values})


def assemble_A(space: ModeSpace) -> BandedOperator:
    """Diagonal ``2 - lambda_n``."""
    return _diag(space, 2.0 - laplace_eigenvalue(space.degrees))


def assemble_B2(space: ModeSpace) -> BandedOperator:
    """Diagonal ``1 - 6 / lambda_n``."""
    return _diag(space, 1.0 - 6.0 / laplace_eigenvalue(space.degrees))


def _cos_offdiag(space):
    # a_n^m couples n-1 and n for n = n_lo+1..n_hi
    return coupling(space.degrees[1:], space.m)


def assemble_cos(space: ModeSpace) -> BandedOperator:
    """
    Multiplication by ``cos(theta)``, truncated by dropping the coupling
    out of ``n_hi``.
    """
    a = _cos_offdiag(space)
    return BandedOperator(space, {-1: a, 0: np.zeros(space.dim), 1: a})


def assemble_Lambda(space: ModeSpace) -> BandedOperator:
    """``cos(theta) * B2``; column ``n`` is scaled by ``1 - 6/lambda_n``."""
    a = _cos_offdiag(space)
    b = assemble_B2(space).bands[0]
    # M[n-1, n] = a_n b_n ; M[n+1, n] = a_{n+1} b_n
    return BandedOperator(space, {-1: a * b[:-1], 0: np.zeros(space.dim), 1: a * b[1:]})


def assemble_L(space: ModeSpace, alpha) -> BandedOperator:
    """``A - i alpha m Lambda``."""
    lam = assemble_Lambda(space)
    c = -1j * float(alpha) * space.m
    bands = {k: c * v for k, v in lam.bands.items() if k != 0}
    bands[0] = assemble_A(space).bands[0].astype(complex)
    return BandedOperator(space, bands)


def assemble_sin2_form(space: ModeSpace) -> BandedOperator:
    """
    Gram matrix of multiplication by ``sin(theta)``: ``I - C^T C``.

    The coupling from ``n_lo`` down to ``n_lo - 1`` leaves the space but
    still contributes to ``||cos(theta) u||``, so it is kept on the first
    diagonal entry.  Only the top edge is truncated, which slightly
    over-estimates the form there.
    """
    a = _cos_offdiag(space)
    a_lo = coupling(space.n_lo, space.m)
    below = np.concatenate([[a_lo], a])  # coupling to n - 1
    above = np.concatenate([a, [0.0]])  # coupling to n + 1
    diag = 1.0 - below**2 - above**2
    two = a[:-1] * a[1:]
    return BandedOperator(space, {-2: -two, 0: diag, 2: -two})


def _kernel_row(space):
    return space.kind is Kind.FULL and abs(space.m) <= 2


def project_Q(u: SpectralVector) -> SpectralVector:
    """Remove the ``Y_2^m`` component (identity when ``|m| >= 3``)."""
    if u.space.kind is not Kind.FULL:
        raise ValueError("project_Q acts on FULL spaces")
    c = u.coeffs.copy()
    if _kernel_row(u.space):
        c[0] = 0.0
    return SpectralVector(u.space, c)


def project_P(u: SpectralVector) -> SpectralVector:
    """Keep only the ``Y_2^m`` component."""
    if u.space.kind is not Kind.FULL:
        raise ValueError("project_P acts on FULL spaces")
    c = np.zeros_like(u.coeffs)
    if _kernel_row(u.space):
        c[0] = u.coeffs[0]
    return SpectralVector(u.space, c)


def sobolev_scale(u: SpectralVector, s, which=Scale.MINUS_LAPLACE) -> SpectralVector:
    """Apply ``(-Delta)^s`` or ``(-A)^s`` diagonally."""
    lam = laplace_eigenvalue(u.space.degrees)
    which = Scale(which)
    base = lam if which is Scale.MINUS_LAPLACE else lam - 2.0
    return SpectralVector(u.space, u.coeffs * base**s)


def velocity_profile(n, a, theta, pole_limit=False):
    """
    Zonal speed ``-(a / (lambda_n sin theta)) dY_n^0/dtheta`` of the
    ``n``-jet flow.

    Parameters
    ----------
    n : int
        Degree, ``n >= 1``.
    a : float
        Amplitude.
    theta : array_like
        Colatitudes.  Poles are rejected unless ``pole_limit`` is set, in
        which case the removable singularity is filled with its limit.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    th = np.atleast_1d(_check_theta(theta))
    at_pole = (th == 0.0) | (th == np.pi)
    if np.any(at_pole) and not pole_limit:
        raise ValueError("theta at a pole; pass pole_limit=True for the limit value")
    lam = laplace_eigenvalue(n)
    out = np.empty(th.shape)
    inner = ~at_pole
    out[inner] = -(a / lam) * eval_basis_dtheta(n, 0, th[inner]) / np.sin(th[inner])
    # P_n'(+-1) = (+-1)^(n+1) lambda_n / 2
    edge = 0.5 * a * math.sqrt((2 * n + 1) / (4 * math.pi))
    out[th == 0.0] = edge
    out[th == np.pi] = edge * (-1) ** (n + 1)
    return out if np.ndim(theta) else float(out[0])


def write_banded(op: BandedOperator, fh=None) -> str:
    """
    Serialise to the plain-text banded format.

    Layout::

        # kolmosphere-banded 1
        m <int>
        n_lo <int>
        n_hi <int>
        bandwidth <int>
        kind <FULL|REDUCED>
        dtype <real|complex>
        band <offset> <v_0> <v_1> ...

    Complex entries are written as ``re im`` pairs; floats use ``repr`` so
    reading back reproduces the operator bit for bit.
    """
    sp_ = op.space
    cplx = any(np.iscomplexobj(v) for v in op.bands.values())
    buf = io.StringIO()
    buf.write(f"# {BANDED_FORMAT}\n")
    buf.write(f"m {sp_.m}\nn_lo {sp_.n_lo}\nn_hi {sp_.n_hi}\n")
    buf.write(f"bandwidth {max(abs(k) for k in op.bands)}\n")
    buf.write(f"kind {sp_.kind.value}\ndtype {'complex' if cplx else 'real'}\n")
    for k, v in op.bands.items():
        if cplx:
            v = np.asarray(v, dtype=complex)
            vals = np.column_stack([v.real, v.imag]).ravel()
        else:
            vals = v
        buf.write("band " + str(k) + "".join(" " + repr(float(x)) for x in vals) + "\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_banded(text: str) -> BandedOperator:
    """Inverse of :func:`write_banded`."""
    header = {}
    bands = {}
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != f"# {BANDED_FORMAT}":
        raise ValueError("not a kolmosphere banded file")
    for ln in lines[1:]:
        key, *rest = ln.split()
        if key == "band":
            bands[int(rest[0])] = rest[1:]
        else:
            header[key] = rest[0]
    space = ModeSpace(int(header["m"]), int(header["n_hi"]), Kind(header["kind"]))
    if space.n_lo != int(header["n_lo"]):
        raise ValueError("n_lo inconsistent with m and kind")
    parsed = {}
    for k, vals in bands.items():
        arr = np.array([float(x) for x in vals])
        if header["dtype"] == "complex":
            arr = arr[0::2] + 1j * arr[1::2]
        parsed[k] = arr
    op = BandedOperator(space, parsed)
    if max(abs(k) for k in op.bands) != int(header["bandwidth"]):
        raise ValueError("bandwidth header does not match bands")
    return op
