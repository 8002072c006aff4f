"""Exact finite-alphabet objects: sequence spaces, input laws, MAC kernels.

Sequences of length ``n`` over an alphabet of size ``k`` are indexed
lexicographically with the first symbol most significant, so index
``sum(s[i] * k**(n-1-i))``.  Every distribution over a sequence space is a
dense vector in that order.

Memoryless kernels are never stored as a dense ``W^n`` tensor.  Instead the
support of ``W^n`` (triples with positive kernel value) is built letter by
letter and cached per block length; all sums stream over that support.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Sequence

import numpy as np

from macid.errors import CapExceededError, DimensionError, UsageError, ValidationError

ROW_TOL = 1e-12
DEFAULT_MAX_STATES = 2**28


def max_states() -> int:
    """Enumeration cap on |X|^n |Y|^n |Z|^n (env ``MACID_MAX_STATES``)."""
    raw = os.environ.get("MACID_MAX_STATES")
    if raw is None:
        return DEFAULT_MAX_STATES
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"MACID_MAX_STATES must be an integer, got {raw!r}") from exc


def check_cap(nx: int, ny: int, nz: int, n: int) -> None:
    total = nx * ny * nz
    cap = max_states()
    if total > cap:
        raise CapExceededError(
            f"enumeration of |X|^n*|Y|^n*|Z|^n = {nx}*{ny}*{nz} = {total} states "
            f"at n={n} exceeds the cap {cap} (set MACID_MAX_STATES to raise it)"
        )


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValidationError(f"alphabet size must be >= 1, got {self.size}")

    def space_size(self, n: int) -> int:
        return self.size**n

    def index(self, seq: Sequence[int]) -> int:
        idx = 0
        for s in seq:
            if not 0 <= s < self.size:
                raise DimensionError(f"symbol {s} outside alphabet of size {self.size}")
            idx = idx * self.size + int(s)
        return idx

    def sequence(self, index: int, n: int) -> tuple[int, ...]:
        if not 0 <= index < self.size**n:
            raise DimensionError(f"index {index} outside sequence space of size {self.size**n}")
        out = []
        for _ in range(n):
            index, r = divmod(index, self.size)
            out.append(r)
        return tuple(reversed(out))

    def digits(self, n: int) -> np.ndarray:
        """All sequences as a ``(size**n, n)`` integer array, in index order."""
        idx = np.arange(self.size**n)
        powers = self.size ** np.arange(n - 1, -1, -1)
        return (idx[:, None] // powers[None, :]) % self.size


def _as_prob_vector(probs, expected_len: int, what: str) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64).reshape(-1)
    if arr.shape[0] != expected_len:
        raise DimensionError(f"{what}: expected {expected_len} entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError(f"{what}: entries must be finite and nonnegative")
    total = float(np.sum(arr))
    if abs(total - 1.0) > ROW_TOL:
        raise ValidationError(f"{what}: entries sum to {total!r}, not 1")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SequenceDistribution:
    """Exact law on the length-``n`` sequence space of one alphabet.

    ``letter`` is set when the law is an i.i.d. product of that per-letter
    distribution; it is informational and never used in place of ``probs``.
    """

    alphabet: Alphabet
    n: int
    probs: np.ndarray
    letter: np.ndarray | None = None

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValidationError(f"block length must be >= 1, got {self.n}")
        probs = _as_prob_vector(self.probs, self.alphabet.space_size(self.n), "SequenceDistribution")
        object.__setattr__(self, "probs", probs)
        if self.letter is not None:
            letter = _as_prob_vector(self.letter, self.alphabet.size, "per-letter distribution")
            object.__setattr__(self, "letter", letter)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def iid(cls, alphabet: Alphabet, letter, n: int) -> "SequenceDistribution":
        letter = np.asarray(letter, dtype=np.float64)
        probs = reduce(np.kron, [letter] * n, np.ones(1))
        return cls(alphabet, n, probs, letter=letter)

    @classmethod
    def uniform(cls, alphabet: Alphabet, n: int) -> "SequenceDistribution":
        return cls.iid(alphabet, np.full(alphabet.size, 1.0 / alphabet.size), n)

    @classmethod
    def point_mass(cls, alphabet: Alphabet, n: int, seq) -> "SequenceDistribution":
        index = seq if isinstance(seq, (int, np.integer)) else alphabet.index(seq)
        probs = np.zeros(alphabet.space_size(n))
        probs[int(index)] = 1.0
        return cls(alphabet, n, probs)

    def __eq__(self, other):
        if not isinstance(other, SequenceDistribution):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.n == other.n
            and np.array_equal(self.probs, other.probs)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class KernelSupport:
    """Triples with ``W^n(z|x,y) > 0`` as parallel index/value arrays."""

    nx: int
    ny: int
    nz: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return (self.x * self.ny + self.y) * self.nz + self.z

    def __len__(self):
        return self.w.shape[0]


@dataclass(frozen=True, eq=False)
class MacChannel:
    """Two-input, one-output channel kernel.

    ``kind == "memoryless"``: ``kernel`` has shape ``(|X|, |Y|, |Z|)`` and
    extends to every ``n`` by products.  ``kind == "explicit"``: ``kernel``
    has shape ``(|X|^n, |Y|^n, |Z|^n)`` and is valid only at ``n_explicit``.
    """

    in1: Alphabet
    in2: Alphabet
    out: Alphabet
    kind: str
    kernel: np.ndarray
    n_explicit: int | None = None
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=np.float64)
        if self.kind == "memoryless":
            shape = (self.in1.size, self.in2.size, self.out.size)
        elif self.kind == "explicit":
            if self.n_explicit is None or self.n_explicit < 1:
                raise ValidationError("explicit kernel requires a block length n >= 1")
            m = self.n_explicit
            shape = (self.in1.size**m, self.in2.size**m, self.out.size**m)
        else:
            raise ValidationError(f"unknown channel kind {self.kind!r}")
        if kernel.shape != shape:
            raise ValidationError(f"kernel shape {kernel.shape} does not match alphabets {shape}")
        if not np.all(np.isfinite(kernel)) or np.any(kernel < 0):
            raise ValidationError("kernel entries must be finite and nonnegative")
        sums = kernel.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_TOL)
        if bad.shape[0]:
            x, y = (int(v) for v in bad[0])
            raise ValidationError(f"kernel row (x={x}, y={y}) sums to {float(sums[x, y])!r}, not 1")
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)

    # -- constructors -------------------------------------------------------

    @classmethod
    def memoryless(cls, kernel, name: str = "custom") -> "MacChannel":
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 3:
            raise ValidationError(f"memoryless kernel must be 3-dimensional, got shape {kernel.shape}")
        a, b, c = kernel.shape
        return cls(Alphabet(a), Alphabet(b), Alphabet(c), "memoryless", kernel, name=name)

    @classmethod
    def explicit(cls, kernel, n: int, x_size: int, y_size: int, z_size: int, name: str = "custom"):
        return cls(Alphabet(x_size), Alphabet(y_size), Alphabet(z_size), "explicit", kernel, n, name=name)

    # -- evaluation ---------------------------------------------------------

    def check_n(self, n: int) -> None:
        if n < 1:
            raise DimensionError(f"block length must be >= 1, got {n}")
        if self.kind == "explicit" and n != self.n_explicit:
            raise DimensionError(f"explicit kernel is tabulated at n={self.n_explicit}, not n={n}")

    def sizes(self, n: int) -> tuple[int, int, int]:
        return self.in1.size**n, self.in2.size**n, self.out.size**n

    def support(self, n: int) -> KernelSupport:
        self.check_n(n)
        nx, ny, nz = self.sizes(n)
        check_cap(nx, ny, nz, n)
        key = ("support", n)
        if key in self._cache:
            return self._cache[key]
        if self.kind == "explicit":
            xi, yi, zi = np.nonzero(self.kernel)
            ks = KernelSupport(nx, ny, nz, xi, yi, zi, self.kernel[xi, yi, zi])
        else:
            lx, ly, lz = np.nonzero(self.kernel)
            lw = self.kernel[lx, ly, lz]
            x, y, z, w = lx, ly, lz, lw
            a, b, c = self.kernel.shape
            for _ in range(n - 1):
                x = (x[:, None] * a + lx[None, :]).reshape(-1)
                y = (y[:, None] * b + ly[None, :]).reshape(-1)
                z = (z[:, None] * c + lz[None, :]).reshape(-1)
                w = (w[:, None] * lw[None, :]).reshape(-1)
            order = np.argsort((x * ny + y) * nz + z, kind="stable")
            ks = KernelSupport(nx, ny, nz, x[order], y[order], z[order], w[order])
        for arr in (ks.x, ks.y, ks.z, ks.w):
            arr.setflags(write=False)
        self._cache[key] = ks
        return ks

    def kernel_n(self, n: int) -> np.ndarray:
        """Dense ``W^n`` tensor (materialized; use only at small sizes)."""
        if self.kind == "explicit":
            self.check_n(n)
            return self.kernel
        ks = self.support(n)
        dense = np.zeros((ks.nx, ks.ny, ks.nz))
        dense[ks.x, ks.y, ks.z] = ks.w
        return dense

    def prob(self, z_seq, x_seq, y_seq) -> float:
        """``W^n(z|x,y)`` for one triple of sequences, by per-letter product."""
        n = len(x_seq)
        if not len(y_seq) == len(z_seq) == n:
            raise DimensionError("sequences must share one block length")
        self.check_n(n)
        if self.kind == "explicit":
            return float(self.kernel[self.in1.index(x_seq), self.in2.index(y_seq), self.out.index(z_seq)])
        out = 1.0
        for a, b, c in zip(x_seq, y_seq, z_seq):
            out *= float(self.kernel[a, b, c])
        return out

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "x_size": self.in1.size,
            "y_size": self.in2.size,
            "z_size": self.out.size,
            "kind": self.kind,
            "kernel": self.kernel.tolist(),
        }
        if self.kind == "explicit":
            d["n"] = self.n_explicit
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, name: str = "custom") -> "MacChannel":
        if not isinstance(d, dict):
            raise ValidationError("channel JSON must be a JSON object")
        for key in ("x_size", "y_size", "z_size", "kind", "kernel"):
            if key not in d:
                raise ValidationError(f"channel JSON: missing field {key!r}")
        for key in ("x_size", "y_size", "z_size"):
            if not isinstance(d[key], int) or d[key] < 1:
                raise ValidationError(f"channel JSON: field {key!r} must be a positive integer")
        try:
            kernel = np.array(d["kernel"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"channel JSON: field 'kernel' is not a rectangular numeric array ({exc})")
        if d["kind"] == "memoryless":
            return cls(Alphabet(d["x_size"]), Alphabet(d["y_size"]), Alphabet(d["z_size"]),
                       "memoryless", kernel, name=name)
        if d["kind"] == "explicit":
            if not isinstance(d.get("n"), int):
                raise ValidationError("channel JSON: explicit kernel requires integer field 'n'")
            return cls(Alphabet(d["x_size"]), Alphabet(d["y_size"]), Alphabet(d["z_size"]),
                       "explicit", kernel, d["n"], name=name)
        raise ValidationError(f"channel JSON: field 'kind' must be 'memoryless' or 'explicit', got {d['kind']!r}")

    @classmethod
    def from_json(cls, text: str, name: str = "custom") -> "MacChannel":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"channel JSON: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
        return cls.from_dict(d, name=name)


def binary_adder() -> MacChannel:
    w = np.zeros((2, 2, 3))
    for x in range(2):
        for y in range(2):
            w[x, y, x + y] = 1.0
    return MacChannel.memoryless(w, name="binary-adder")


def binary_multiplier() -> MacChannel:
    w = np.zeros((2, 2, 2))
    for x in range(2):
        for y in range(2):
            w[x, y, x * y] = 1.0
    return MacChannel.memoryless(w, name="binary-multiplier")


def noisy_adder(p: float) -> MacChannel:
    """Adder whose output moves to one of the two other symbols w.p. ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"noisy-adder flip probability must lie in [0, 1], got {p}")
    w = np.full((2, 2, 3), p / 2.0)
    for x in range(2):
        for y in range(2):
            w[x, y, x + y] = 1.0 - p
    return MacChannel.memoryless(w, name=f"noisy-adder({p})")


def builtin_channel(name: str) -> MacChannel:
    if name == "binary-adder":
        return binary_adder()
    if name == "binary-multiplier":
        return binary_multiplier()
    m = re.fullmatch(r"noisy-adder\(([^)]*)\)", name)
    if m:
        try:
            p = float(m.group(1))
        except ValueError:
            raise UsageError(f"noisy-adder parameter must be a number, got {m.group(1)!r}")
        return noisy_adder(p)
    raise UsageError(f"unknown built-in channel {name!r}")


def load_channel(source: str) -> MacChannel:
    """A built-in name or a path to a channel JSON file."""
    if os.path.exists(source):
        with open(source) as fh:
            return MacChannel.from_json(fh.read(), name=os.path.basename(source))
    return builtin_channel(source)


@dataclass(frozen=True, eq=False)
class ResponseMeasure:
    """Nonnegative measure on ``Z^n``; total 1 for a full response."""

    alphabet: Alphabet
    n: int
    mass: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=np.float64).reshape(-1)
        if mass.shape[0] != self.alphabet.space_size(self.n):
            raise DimensionError(f"response has {mass.shape[0]} entries, expected {self.alphabet.space_size(self.n)}")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "total", float(np.sum(mass)))

    def measure_of(self, subset) -> float:
        """Mass of a subset of ``Z^n`` given as an index list or boolean mask."""
        subset = np.asarray(subset)
        if subset.dtype == bool:
            return float(np.sum(self.mass[subset]))
        return float(np.sum(self.mass[subset.astype(np.int64)]))


@dataclass(frozen=True, eq=False)
class TripleSet:
    """Subset of ``X^n x Y^n x Z^n`` stored as a flat bitmask in (x, y, z) order."""

    n: int
    shape: tuple[int, int, int]
    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if mask.shape[0] != int(np.prod(self.shape)):
            raise DimensionError(f"mask has {mask.shape[0]} entries, expected {int(np.prod(self.shape))}")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @classmethod
    def full(cls, n: int, shape) -> "TripleSet":
        return cls(n, shape, np.ones(int(np.prod(shape)), dtype=bool))

    @classmethod
    def empty(cls, n: int, shape) -> "TripleSet":
        return cls(n, shape, np.zeros(int(np.prod(shape)), dtype=bool))

    @classmethod
    def from_predicate(cls, n: int, shape, pred: Callable[[int, int, int], bool]) -> "TripleSet":
        nx, ny, nz = shape
        mask = np.fromiter(
            (bool(pred(x, y, z)) for x in range(nx) for y in range(ny) for z in range(nz)),
            dtype=bool,
            count=nx * ny * nz,
        )
        return cls(n, shape, mask)

    def complement(self) -> "TripleSet":
        return TripleSet(self.n, self.shape, ~self.mask)

    def contains(self, x: int, y: int, z: int) -> bool:
        _, ny, nz = self.shape
        return bool(self.mask[(x * ny + y) * nz + z])

    @property
    def cardinality(self) -> int:
        return int(np.count_nonzero(self.mask))


def _check_inputs(px: SequenceDistribution, py: SequenceDistribution, w: MacChannel, n: int) -> None:
    if px.alphabet != w.in1 or py.alphabet != w.in2:
        raise DimensionError(
            f"input alphabets ({px.alphabet.size}, {py.alphabet.size}) do not match channel "
            f"({w.in1.size}, {w.in2.size})"
        )
    if px.n != n or py.n != n:
        raise DimensionError(f"inputs have block lengths ({px.n}, {py.n}), expected {n}")
    w.check_n(n)


def _measure_on_support(ks: KernelSupport, weights: np.ndarray) -> np.ndarray:
    return np.bincount(ks.z, weights=weights, minlength=ks.nz)


def response(px: SequenceDistribution, py: SequenceDistribution, w: MacChannel, n: int) -> ResponseMeasure:
    """Output law ``Q(z) = sum_{x,y} px(x) py(y) W^n(z|x,y)``."""
    _check_inputs(px, py, w, n)
    ks = w.support(n)
    q = _measure_on_support(ks, px.probs[ks.x] * py.probs[ks.y] * ks.w)
    return ResponseMeasure(w.out, n, q)


def response_probs(px: np.ndarray, py: np.ndarray, ks: KernelSupport) -> np.ndarray:
    """Unchecked dense response for raw probability vectors."""
    return _measure_on_support(ks, px[ks.x] * py[ks.y] * ks.w)


def conditional_marginals(px: SequenceDistribution, py: SequenceDistribution, w: MacChannel, n: int):
    """Return ``(P_{Z|Y}, P_{Z|X}, P_Z)``.

    ``P_{Z|Y}`` has shape ``(|Y|^n, |Z|^n)`` with rows indexed by ``y``;
    ``P_{Z|X}`` has shape ``(|X|^n, |Z|^n)``.  Rows are defined for every
    conditioning sequence, including those of zero input probability.
    """
    _check_inputs(px, py, w, n)
    ks = w.support(n)
    zy = np.bincount(ks.y * ks.nz + ks.z, weights=px.probs[ks.x] * ks.w, minlength=ks.ny * ks.nz)
    zx = np.bincount(ks.x * ks.nz + ks.z, weights=py.probs[ks.y] * ks.w, minlength=ks.nx * ks.nz)
    pz = response(px, py, w, n)
    return zy.reshape(ks.ny, ks.nz), zx.reshape(ks.nx, ks.nz), pz


def partial_response(
    px: SequenceDistribution, py: SequenceDistribution, w: MacChannel, s: TripleSet, n: int
) -> ResponseMeasure:
    """``Q_S(z) = sum_{x,y} W^n(z|x,y) px(x) py(y) 1_S(x,y,z)`` (subnormalized)."""
    _check_inputs(px, py, w, n)
    ks = w.support(n)
    if s.n != n or s.shape != (ks.nx, ks.ny, ks.nz):
        raise DimensionError(f"triple set defined at n={s.n} with shape {s.shape}, expected n={n}")
    inside = s.mask[ks.flat]
    weights = px.probs[ks.x] * py.probs[ks.y] * ks.w * inside
    return ResponseMeasure(w.out, n, _measure_on_support(ks, weights))


def variational_distance(p: ResponseMeasure, q: ResponseMeasure) -> float:
    """Unnormalized L1 distance ``sum_z |p(z) - q(z)|`` (range [0, 2] on laws)."""
    if p.alphabet != q.alphabet or p.n != q.n:
        raise DimensionError("variational distance needs measures on the same space")
    return float(np.sum(np.abs(p.mass - q.mass)))


# -- random instances --------------------------------------------------------


def random_kernel(rng: np.random.Generator, x_size: int, y_size: int, z_size: int, zero_prob: float = 0.0):
    """Stochastic ``(X, Y, Z)`` array with Dirichlet rows, optionally sparsified."""
    w = rng.dirichlet(np.ones(z_size), size=(x_size, y_size))
    if zero_prob > 0:
        drop = rng.random(w.shape) < zero_prob
        keep = rng.integers(z_size, size=(x_size, y_size))
        drop[np.arange(x_size)[:, None], np.arange(y_size)[None, :], keep] = False
        w = np.where(drop, 0.0, w)
        w = w / w.sum(axis=2, keepdims=True)
    return w


def random_distribution(
    rng: np.random.Generator, alphabet: Alphabet, n: int, zero_prob: float = 0.0, iid: bool = False
) -> SequenceDistribution:
    if iid:
        letter = rng.dirichlet(np.ones(alphabet.size))
        return SequenceDistribution.iid(alphabet, letter, n)
    size = alphabet.space_size(n)
    p = rng.dirichlet(np.ones(size))
    if zero_prob > 0:
        drop = rng.random(size) < zero_prob
        drop[rng.integers(size)] = False
        p = np.where(drop, 0.0, p)
    p = p / p.sum()
    return SequenceDistribution(alphabet, n, p)

