# minkowski.py
# Minkowski kinematics, light-cone classes, boosts and symmetric tensors.
# Metric signature (+,-,-,-), natural units.

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from errors import ConfigError, DomainError, RankDeficiencyError

logger = logging.getLogger(__name__)

METRIC = np.diag([1.0, -1.0, -1.0, -1.0])
MAX_POLARIZATION_RANK = 6
UNIT_NORM_TOL = 1e-12


# ---------------------------------------------------------
# Four-vectors
# ---------------------------------------------------------

@dataclass(frozen=True)
class FourVector:
    t: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("t", "x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"FourVector component {name}={value} is not finite")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, values):
        arr = np.asarray(values, dtype=float).ravel()
        if arr.shape != (4,):
            raise DomainError(f"Expected 4 components, got {arr.size}")
        return cls(*arr.tolist())

    @classmethod
    def from_string(cls, text):
        """Parse 't,x,y,z' as used on the command line."""
        parts = [p.strip() for p in str(text).split(",")]
        if len(parts) != 4:
            raise ConfigError(f"Four-vector '{text}' must have 4 comma-separated components")
        try:
            return cls(*(float(p) for p in parts))
        except ValueError as exc:
            raise ConfigError(f"Four-vector '{text}' is not numeric") from exc

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, 0.0, 0.0)

    def as_array(self):
        return np.array([self.t, self.x, self.y, self.z])

    @property
    def spatial(self):
        return np.array([self.x, self.y, self.z])

    def __add__(self, other):
        return FourVector.from_array(self.as_array() + other.as_array())

    def __sub__(self, other):
        return FourVector.from_array(self.as_array() - other.as_array())

    def __neg__(self):
        return FourVector(-self.t, -self.x, -self.y, -self.z)

    def __mul__(self, scalar):
        return FourVector.from_array(float(scalar) * self.as_array())

    __rmul__ = __mul__

    def to_list(self):
        return [self.t, self.x, self.y, self.z]


def _components(v):
    if isinstance(v, FourVector):
        return v.as_array()
    return np.asarray(v)


def minkowski_product(u, v):
    """u0 v0 - u.v ; accepts FourVector or length-4 arrays (complex allowed)."""
    a, b = _components(u), _components(v)
    return a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]


# ---------------------------------------------------------
# Causal classification
# ---------------------------------------------------------

class CausalClass(str, Enum):
    TIMELIKE_FUTURE = "timelike-future"
    TIMELIKE_PAST = "timelike-past"
    SPACELIKE = "spacelike"
    NULL_FUTURE = "null-future"
    NULL_PAST = "null-past"
    ZERO = "zero"


def classify(v, rtol=1e-12):
    arr = _components(v).astype(float)
    scale = float(np.dot(arr, arr))
    if scale == 0.0:
        return CausalClass.ZERO

    square = float(minkowski_product(arr, arr))
    if abs(square) <= rtol * scale:
        if arr[0] == 0.0:
            return CausalClass.SPACELIKE
        return CausalClass.NULL_FUTURE if arr[0] > 0 else CausalClass.NULL_PAST
    if square < 0:
        return CausalClass.SPACELIKE
    return CausalClass.TIMELIKE_FUTURE if arr[0] > 0 else CausalClass.TIMELIKE_PAST


def in_forward_cone(v):
    return classify(v) is CausalClass.TIMELIKE_FUTURE


# ---------------------------------------------------------
# Time directions and inverse temperature vectors
# ---------------------------------------------------------

@dataclass(frozen=True)
class TimeDirection:
    """Unit future-directed timelike vector. Input is normalized on construction."""

    e: FourVector

    def __post_init__(self):
        vec = self.e if isinstance(self.e, FourVector) else FourVector.from_array(self.e)
        if not in_forward_cone(vec):
            raise DomainError(f"Time direction {vec.to_list()} is not future-directed timelike")
        norm = math.sqrt(minkowski_product(vec, vec))
        unit = FourVector.from_array(vec.as_array() / norm)
        if abs(minkowski_product(unit, unit) - 1.0) > UNIT_NORM_TOL:
            raise DomainError(f"Time direction {vec.to_list()} cannot be normalized")
        object.__setattr__(self, "e", unit)

    @classmethod
    def rest(cls):
        return cls(FourVector(1.0, 0.0, 0.0, 0.0))

    def as_array(self):
        return self.e.as_array()


@dataclass(frozen=True)
class InverseTemperatureVector:
    beta: float
    e: TimeDirection = field(default_factory=TimeDirection.rest)

    def __post_init__(self):
        beta = float(self.beta)
        if not math.isfinite(beta) or beta <= 0:
            raise DomainError(f"Inverse temperature must be positive, got {beta}")
        object.__setattr__(self, "beta", beta)
        if not isinstance(self.e, TimeDirection):
            object.__setattr__(self, "e", TimeDirection(self.e))

    @classmethod
    def from_vector(cls, vector):
        vec = vector if isinstance(vector, FourVector) else FourVector.from_array(vector)
        if not in_forward_cone(vec):
            raise DomainError(f"Inverse temperature vector {vec.to_list()} is not in the forward cone")
        beta = math.sqrt(minkowski_product(vec, vec))
        return cls(beta, TimeDirection(vec))

    @property
    def vector(self):
        return self.beta * self.e.e

    def as_array(self):
        return self.beta * self.e.as_array()

    def to_list(self):
        return self.as_array().tolist()


# ---------------------------------------------------------
# Lorentz boosts
# ---------------------------------------------------------

def boost_to_rest_frame(e):
    """Pure boost Lambda with Lambda e = (1,0,0,0)."""
    direction = e if isinstance(e, TimeDirection) else TimeDirection(e)
    e0 = direction.e.t
    u = direction.e.spatial

    transform = np.empty((4, 4))
    transform[0, 0] = e0
    transform[0, 1:] = -u
    transform[1:, 0] = -u
    transform[1:, 1:] = np.eye(3) + np.outer(u, u) / (1.0 + e0)
    return transform


def boosted_time_direction(rapidity, axis=1):
    if axis not in (1, 2, 3):
        raise DomainError(f"Boost axis must be 1, 2 or 3, got {axis}")
    components = np.zeros(4)
    components[0] = math.cosh(rapidity)
    components[axis] = math.sinh(rapidity)
    return TimeDirection(FourVector.from_array(components))


def relative_rapidity(e, f):
    """Rapidity of direction f seen from the rest frame of e."""
    gamma = float(minkowski_product(e.e, f.e))
    return math.acosh(max(gamma, 1.0))


# ---------------------------------------------------------
# Symmetric tensors
# ---------------------------------------------------------
# Coefficients are stored once per sorted multi-index (mu_1 <= ... <= mu_n).
# The full array repeats each stored value over all permutations of its index,
# i.e. multiplicity(index) = n! / prod(count_mu!) times.

def multi_indices(rank):
    return list(itertools.combinations_with_replacement(range(4), rank))


def multiplicity(index):
    counts = np.bincount(np.asarray(index, dtype=int), minlength=4)
    result = math.factorial(len(index))
    for c in counts:
        result //= math.factorial(int(c))
    return result


@dataclass(frozen=True)
class SymmetricTensor:
    rank: int
    coefficients: dict

    def __post_init__(self):
        if self.rank < 0:
            raise DomainError(f"Tensor rank must be non-negative, got {self.rank}")
        valid = multi_indices(self.rank)
        unknown = [key for key in self.coefficients if key not in valid]
        if unknown:
            raise DomainError(
                f"Coefficient keys must be sorted rank-{self.rank} multi-indices over 0..3, got {unknown}"
            )
        cleaned = {}
        for index in valid:
            cleaned[index] = float(self.coefficients.get(index, 0.0))
        object.__setattr__(self, "coefficients", cleaned)

    @classmethod
    def zeros(cls, rank):
        return cls(rank, {})

    @classmethod
    def scalar(cls, value):
        return cls(0, {(): float(value)})

    @classmethod
    def from_array(cls, array):
        arr = np.asarray(array, dtype=float)
        rank = arr.ndim
        if rank and arr.shape != (4,) * rank:
            raise DomainError(f"Tensor array must have shape (4,)*rank, got {arr.shape}")
        if rank > 1:
            perms = list(itertools.permutations(range(rank)))
            arr = sum(np.transpose(arr, p) for p in perms) / len(perms)
        if rank == 0:
            return cls.scalar(float(arr))
        return cls(rank, {index: arr[index] for index in multi_indices(rank)})

    def __getitem__(self, index):
        return self.coefficients[tuple(sorted(index))]

    @property
    def value(self):
        """Scalar value of a rank-0 tensor."""
        if self.rank != 0:
            raise DomainError("Only rank-0 tensors have a scalar value")
        return self.coefficients[()]

    def to_array(self):
        if self.rank == 0:
            return np.array(self.coefficients[()])
        arr = np.zeros((4,) * self.rank)
        for index, value in self.coefficients.items():
            for perm in set(itertools.permutations(index)):
                arr[perm] = value
        return arr

    def evaluate(self, *vectors):
        if len(vectors) != self.rank:
            raise DomainError(f"Rank-{self.rank} tensor needs {self.rank} arguments, got {len(vectors)}")
        result = self.to_array()
        for v in vectors:
            result = np.tensordot(_components(v), result, axes=([0], [0]))
        return float(result)

    def norm(self):
        return float(np.linalg.norm(self.to_array()))

    def pullback(self, transform):
        """T'(v1..vn) = T(L v1, .., L vn)."""
        arr = self.to_array()
        matrix = np.asarray(transform, dtype=float)
        for _ in range(self.rank):
            arr = np.tensordot(arr, matrix, axes=([0], [0]))
        return SymmetricTensor.from_array(arr)

    def scale(self, factor):
        return SymmetricTensor(self.rank, {k: factor * v for k, v in self.coefficients.items()})

    def _check_rank(self, other):
        if other.rank != self.rank:
            raise DomainError(f"Rank mismatch: {self.rank} vs {other.rank}")

    def __add__(self, other):
        self._check_rank(other)
        return SymmetricTensor(
            self.rank, {k: v + other.coefficients[k] for k, v in self.coefficients.items()}
        )

    def __sub__(self, other):
        self._check_rank(other)
        return SymmetricTensor(
            self.rank, {k: v - other.coefficients[k] for k, v in self.coefficients.items()}
        )

    def to_dict(self):
        return {
            "rank": self.rank,
            "coefficients": {"".join(map(str, k)) or "-": v for k, v in self.coefficients.items()},
        }


# ---------------------------------------------------------
# Polarization identity
# ---------------------------------------------------------

def polarization_reconstruct(diag, rank, basis=None):
    """
    Rebuild a symmetric tensor from its diagonal t(v) = T(v,..,v).

    Evaluates T(b_mu1,..,b_mun) = 1/n! sum_k (-1)^(n-k) sum_{|J|=k} t(sum_J b_i)
    for every sorted multi-index. Diagonal calls are cached by the count vector
    of the basis elements in J, so each distinct sum is evaluated once.
    """
    if rank > MAX_POLARIZATION_RANK:
        raise DomainError(f"Polarization limited to rank <= {MAX_POLARIZATION_RANK}, got {rank}")
    if rank < 0:
        raise DomainError(f"Tensor rank must be non-negative, got {rank}")

    if basis is None:
        matrix = np.eye(4)
    else:
        if len(basis) != 4:
            raise DomainError(f"Basis needs 4 vectors, got {len(basis)}")
        matrix = np.column_stack([_components(b) for b in basis]).astype(float)

    if rank == 0:
        return SymmetricTensor.scalar(diag(FourVector.zero()))

    cache = {}

    def diag_of_counts(counts):
        if counts not in cache:
            cache[counts] = float(diag(FourVector.from_array(matrix @ np.asarray(counts, dtype=float))))
        return cache[counts]

    coefficients = {}
    for index in multi_indices(rank):
        total = 0.0
        for k in range(1, rank + 1):
            sign = (-1) ** (rank - k)
            for subset in itertools.combinations(range(rank), k):
                counts = tuple(np.bincount([index[i] for i in subset], minlength=4).tolist())
                total += sign * diag_of_counts(counts)
        coefficients[index] = total / math.factorial(rank)

    logger.debug("Polarization rank %d used %d diagonal evaluations", rank, len(cache))
    tensor = SymmetricTensor(rank, coefficients)
    if basis is None:
        return tensor
    return tensor.pullback(np.linalg.inv(matrix))


@dataclass(frozen=True)
class DiagonalFit:
    tensor: SymmetricTensor
    residual: float
    rank: int


def tensor_from_timelike_diagonal(samples, rank):
    """Least-squares symmetric tensor from samples (e, T(e,..,e)) on unit timelike directions."""
    if rank < 0:
        raise DomainError(f"Tensor rank must be non-negative, got {rank}")
    if not samples:
        raise RankDeficiencyError(0, len(multi_indices(rank)))

    indices = multi_indices(rank)
    rows, values = [], []
    for direction, value in samples:
        e = direction.as_array() if isinstance(direction, TimeDirection) else TimeDirection(direction).as_array()
        rows.append([multiplicity(idx) * np.prod(e[list(idx)]) for idx in indices])
        values.append(float(value))

    design = np.asarray(rows, dtype=float)
    target = np.asarray(values)
    found = int(np.linalg.matrix_rank(design))
    if found < len(indices):
        raise RankDeficiencyError(found, len(indices))

    solution, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = float(np.linalg.norm(design @ solution - target))
    tensor = SymmetricTensor(rank, dict(zip(indices, solution.tolist())))
    return DiagonalFit(tensor=tensor, residual=residual, rank=found)
