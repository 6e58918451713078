"""Aggregation algorithms over ledger prefixes, and the data they exchange.

This module owns the update payload kinds (scalar, point set, labeled row
multiset, empty), the output kinds (scalar, center set, coefficient vector,
null), and the aggregations themselves: max, average, exact k-center, exact
k-median, and multiple linear regression via the normal equations.

Everything is exact rational arithmetic. The clustering solvers enumerate all
k-subsets of the input union, so instances are capped at a small size; that is
deliberate, since the attack constructions only ever need a handful of points.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Optional, Sequence, Union

from .numerics import RMatrix, RationalLike, rational, rational_sqrt

DEFAULT_MAX_UNION = 20
NORM_INF = "inf"
NormOrder = Union[int, str]  # 1, 2, or "inf"

Point = tuple[Fraction, ...]


class PayloadError(ValueError):
    """A payload is malformed or of the wrong kind for the algorithm."""


class ParamError(ValueError):
    """Algorithm or strategy parameters are out of their allowed range."""


class NoOutputError(Exception):
    """The ledger holds nothing the algorithm can aggregate yet."""


class NotEnoughPointsError(Exception):
    """Fewer distinct input points than requested centers."""


class InstanceTooLargeError(Exception):
    """The input union exceeds the exhaustive-enumeration cap."""


class UnsupportedNormError(Exception):
    """The requested norm needs an irrational distance value."""


# =============================================================================
# Update payloads
# =============================================================================


def as_point(values: Sequence[RationalLike]) -> Point:
    return tuple(rational(v) for v in values)


@dataclass(frozen=True)
class Scalar:
    """A single rational value (the max algorithm's update kind)."""

    value: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", rational(self.value))


@dataclass(frozen=True)
class PointSet:
    """A duplicate-free set of points in Q^d, held in sorted canonical order."""

    points: tuple[Point, ...]

    def __init__(self, points: Sequence[Sequence[RationalLike]]):
        normalized = sorted(as_point(p) for p in points)
        for a, b in zip(normalized, normalized[1:]):
            if a == b:
                raise PayloadError(f"duplicate point in set payload: {a}")
        if len({len(p) for p in normalized}) > 1:
            raise PayloadError("points of mixed dimension in one payload")
        object.__setattr__(self, "points", tuple(normalized))


@dataclass(frozen=True)
class Row:
    """One labeled observation: features (leading coordinate fixed at 1) and target."""

    features: Point
    target: Fraction

    def __init__(self, features: Sequence[RationalLike], target: RationalLike):
        feats = as_point(features)
        if not feats or feats[0] != 1:
            raise PayloadError(f"feature vector must lead with 1, got {feats}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", rational(target))

    def sort_key(self) -> tuple:
        return (self.features, self.target)

    @property
    def width(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class RowMultiset:
    """A multiset of labeled rows; duplicates are meaningful and kept."""

    rows: tuple[Row, ...]

    def __init__(self, rows: Sequence[Row]):
        ordered = tuple(sorted(rows, key=Row.sort_key))
        if len({r.width for r in ordered}) > 1:
            raise PayloadError("rows of mixed width in one payload")
        object.__setattr__(self, "rows", ordered)


@dataclass(frozen=True)
class Empty:
    """An update that contributes nothing (still occupies a ledger slot)."""


UpdatePayload = Union[Scalar, PointSet, RowMultiset, Empty]


def payload_union(a: UpdatePayload, b: UpdatePayload) -> UpdatePayload:
    """Combine two payloads the way the aggregations see them.

    Point sets take the set union, row multisets concatenate, Empty is the
    identity. Mixing kinds is a modelling error.
    """
    if isinstance(a, Empty):
        return b
    if isinstance(b, Empty):
        return a
    if isinstance(a, PointSet) and isinstance(b, PointSet):
        return PointSet(tuple(set(a.points) | set(b.points)))
    if isinstance(a, RowMultiset) and isinstance(b, RowMultiset):
        return RowMultiset(a.rows + b.rows)
    raise PayloadError(
        f"cannot union payloads of kinds {type(a).__name__}/{type(b).__name__}"
    )


def payload_difference(a: UpdatePayload, b: UpdatePayload) -> UpdatePayload:
    """Set difference for point sets (used by omission-style resync payloads)."""
    if isinstance(a, PointSet) and isinstance(b, PointSet):
        remaining = tuple(p for p in a.points if p not in set(b.points))
        return PointSet(remaining) if remaining else Empty()
    raise PayloadError("difference is only defined for point sets")


# ===== ledger extraction =====


def scalar_values(ledger: Sequence[UpdatePayload]) -> list[Fraction]:
    values = []
    for payload in ledger:
        if isinstance(payload, Scalar):
            values.append(payload.value)
        elif not isinstance(payload, Empty):
            raise PayloadError(f"expected scalar payloads, got {type(payload).__name__}")
    return values


def multiset_points(ledger: Sequence[UpdatePayload]) -> list[Point]:
    """All points of all set payloads, duplicates across updates preserved."""
    points = []
    for payload in ledger:
        if isinstance(payload, PointSet):
            points.extend(payload.points)
        elif not isinstance(payload, Empty):
            raise PayloadError(f"expected point-set payloads, got {type(payload).__name__}")
    return points


def union_points(ledger: Sequence[UpdatePayload]) -> tuple[Point, ...]:
    """The set union of all point-set payloads, in sorted order."""
    collected = multiset_points(ledger)
    if collected and len({len(p) for p in collected}) > 1:
        raise PayloadError("point payloads of mixed dimension on one ledger")
    return tuple(sorted(set(collected)))


def all_rows(ledger: Sequence[UpdatePayload]) -> tuple[Row, ...]:
    rows: list[Row] = []
    for payload in ledger:
        if isinstance(payload, RowMultiset):
            rows.extend(payload.rows)
        elif not isinstance(payload, Empty):
            raise PayloadError(f"expected row payloads, got {type(payload).__name__}")
    if rows and len({r.width for r in rows}) > 1:
        raise PayloadError("row payloads of mixed width on one ledger")
    return tuple(rows)


# =============================================================================
# Algorithm outputs
# =============================================================================


@dataclass(frozen=True)
class ScalarOutput:
    value: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", rational(self.value))


@dataclass(frozen=True)
class CentersOutput:
    """A chosen set of centers, canonicalized to sorted order."""

    centers: tuple[Point, ...]

    def __init__(self, centers: Sequence[Sequence[RationalLike]]):
        object.__setattr__(self, "centers", tuple(sorted(as_point(c) for c in centers)))


@dataclass(frozen=True)
class CoefficientsOutput:
    """Fitted regression coefficients (intercept first)."""

    coefficients: Point

    def __init__(self, coefficients: Sequence[RationalLike]):
        object.__setattr__(self, "coefficients", as_point(coefficients))


@dataclass(frozen=True)
class NullOutput:
    """The aggregation is not defined on the current ledger."""


AlgorithmOutput = Union[ScalarOutput, CentersOutput, CoefficientsOutput, NullOutput]


# =============================================================================
# Norms and distances
# =============================================================================


def check_norm_order(p: NormOrder) -> NormOrder:
    if p not in (1, 2, NORM_INF):
        raise ParamError(f"norm order must be 1, 2 or '{NORM_INF}', got {p!r}")
    return p


def norm_key(point: Point, p: NormOrder) -> Fraction:
    """A rational magnitude key, monotone in the L_p norm.

    For p=1 and p=inf this is the norm itself; for p=2 it is the squared
    norm, which orders identically and keeps every comparison inside Q.
    """
    if p == 1:
        return sum((abs(x) for x in point), Fraction(0))
    if p == 2:
        return sum((x * x for x in point), Fraction(0))
    if p == NORM_INF:
        return max((abs(x) for x in point), default=Fraction(0))
    raise ParamError(f"norm order must be 1, 2 or '{NORM_INF}', got {p!r}")


def dist_key(a: Point, b: Point, p: NormOrder) -> Fraction:
    if len(a) != len(b):
        raise PayloadError(f"points of different dimension: {a} vs {b}")
    return norm_key(tuple(x - y for x, y in zip(a, b)), p)


def true_distance(a: Point, b: Point, p: NormOrder) -> Fraction:
    """The actual L_p distance; raises when it would leave the rationals."""
    key = dist_key(a, b, p)
    if p != 2:
        return key
    root = rational_sqrt(key)
    if root is None:
        raise UnsupportedNormError(
            f"euclidean distance between {a} and {b} is irrational; "
            "use p=1 or p='inf', or 1-dimensional data"
        )
    return root


# =============================================================================
# Clustering: exact k-center and k-median
# =============================================================================


@dataclass(frozen=True)
class KCenterSolution:
    """Centers with the induced nearest-center partition and its cost.

    `cost` is expressed in the norm's comparison scale: the true distance
    value for p=1/p=inf and for the k-median objective, the squared distance
    for the k-center objective under p=2.
    """

    centers: tuple[Point, ...]
    assignment: tuple[tuple[Point, Point], ...]  # (input point, its center)
    cost: Fraction


def assign_to_centers(
    points: Sequence[Point], centers: Sequence[Point], p: NormOrder
) -> tuple[tuple[Point, Point], ...]:
    """Map each point to its nearest center; ties favor the smaller-norm center."""
    pairs = []
    for point in points:
        chosen = min(centers, key=lambda c: (dist_key(point, c, p), norm_key(c, p), c))
        pairs.append((point, chosen))
    return tuple(pairs)


def _candidate_cost(
    points: Sequence[Point], centers: Sequence[Point], p: NormOrder, median: bool
) -> Fraction:
    total = Fraction(0)
    worst = Fraction(0)
    for point in points:
        if median:
            nearest = min(true_distance(point, c, p) for c in centers)
            total += nearest
        else:
            nearest = min(dist_key(point, c, p) for c in centers)
            worst = max(worst, nearest)
    return total if median else worst


def _solve_clustering(
    points: Sequence[Point], k: int, p: NormOrder, median: bool, max_union: int
) -> KCenterSolution:
    check_norm_order(p)
    if k < 1:
        raise ParamError(f"k must be positive, got {k}")
    universe = tuple(sorted(set(points)))
    if not universe:
        raise NoOutputError("no points on the ledger")
    if len(universe) < k:
        raise NotEnoughPointsError(f"{len(universe)} distinct points, need {k}")
    if len(universe) > max_union:
        raise InstanceTooLargeError(
            f"{len(universe)} points exceed the exhaustive-search cap {max_union}"
        )
    best_key: Optional[tuple] = None
    best: Optional[tuple[Point, ...]] = None
    best_cost = Fraction(0)
    for candidate in combinations(universe, k):
        cost = _candidate_cost(universe, candidate, p, median)
        # Tie-break: total center magnitude, then lexicographic coordinates.
        key = (cost, sum(norm_key(c, p) for c in candidate), candidate)
        if best_key is None or key < best_key:
            best_key, best, best_cost = key, candidate, cost
    assert best is not None
    return KCenterSolution(best, assign_to_centers(universe, best, p), best_cost)


def kcenter_solution(
    points: Sequence[Point], k: int, p: NormOrder = 2, max_union: int = DEFAULT_MAX_UNION
) -> KCenterSolution:
    return _solve_clustering(points, k, p, median=False, max_union=max_union)


def kmedian_solution(
    points: Sequence[Point], k: int, p: NormOrder = 2, max_union: int = DEFAULT_MAX_UNION
) -> KCenterSolution:
    return _solve_clustering(points, k, p, median=True, max_union=max_union)


def alg_kcenter(
    ledger: Sequence[UpdatePayload], k: int, p: NormOrder = 2,
    max_union: int = DEFAULT_MAX_UNION,
) -> CentersOutput:
    return CentersOutput(kcenter_solution(union_points(ledger), k, p, max_union).centers)


def alg_kmedian(
    ledger: Sequence[UpdatePayload], k: int, p: NormOrder = 2,
    max_union: int = DEFAULT_MAX_UNION,
) -> CentersOutput:
    return CentersOutput(kmedian_solution(union_points(ledger), k, p, max_union).centers)


# =============================================================================
# Max and average
# =============================================================================


def alg_max(ledger: Sequence[UpdatePayload]) -> ScalarOutput:
    values = scalar_values(ledger)
    if not values:
        raise NoOutputError("no scalar values on the ledger")
    return ScalarOutput(max(values))


def alg_average(ledger: Sequence[UpdatePayload]) -> ScalarOutput:
    """The mean over all points of all updates; the count stays hidden."""
    points = multiset_points(ledger)
    if not points:
        raise NoOutputError("no points on the ledger")
    if any(len(p) != 1 for p in points):
        raise PayloadError("the average aggregation expects 1-dimensional points")
    total = sum((p[0] for p in points), Fraction(0))
    return ScalarOutput(total / len(points))


# =============================================================================
# Multiple linear regression
# =============================================================================


@dataclass(frozen=True)
class MomentPair:
    """Gram matrix X^T X and cross-moment vector X^T y of a row multiset."""

    gram: RMatrix
    cross: RMatrix

    def __add__(self, other: "MomentPair") -> "MomentPair":
        return MomentPair(self.gram + other.gram, self.cross + other.cross)

    def __sub__(self, other: "MomentPair") -> "MomentPair":
        return MomentPair(self.gram - other.gram, self.cross - other.cross)


def zero_moments(width: int) -> MomentPair:
    return MomentPair(RMatrix.zeros(width, width), RMatrix.zeros(width, 1))


def moments(rows: Union[RowMultiset, Sequence[Row]], width: Optional[int] = None) -> MomentPair:
    """Exact moments of a row multiset; additive under concatenation."""
    seq = rows.rows if isinstance(rows, RowMultiset) else tuple(rows)
    if width is None:
        if not seq:
            raise PayloadError("cannot infer moment width from an empty multiset")
        width = seq[0].width
    gram = RMatrix.zeros(width, width)
    cross = RMatrix.zeros(width, 1)
    for row in seq:
        if row.width != width:
            raise PayloadError(f"row width {row.width} does not match {width}")
        x = RMatrix([row.features])
        gram = gram + (x.transpose() @ x)
        cross = cross + x.transpose().scale(row.target)
    return MomentPair(gram, cross)


def fit_from_moments(m: MomentPair) -> Union[CoefficientsOutput, NullOutput]:
    solution = m.gram.solve(m.cross)
    if solution is None:
        return NullOutput()
    return CoefficientsOutput(solution.column_values())


def alg_dlr(ledger: Sequence[UpdatePayload]) -> Union[CoefficientsOutput, NullOutput]:
    """Least-squares fit of all rows, or Null when the Gram matrix is singular."""
    rows = all_rows(ledger)
    if not rows:
        return NullOutput()
    return fit_from_moments(moments(rows))


def predict(coefficients: Point, features: Point) -> Fraction:
    if len(coefficients) != len(features):
        raise PayloadError("coefficient/feature length mismatch")
    return sum((c * x for c, x in zip(coefficients, features)), Fraction(0))


def lr_cost(rows: Union[RowMultiset, Sequence[Row]], coefficients: Point) -> Fraction:
    """Sum of squared residuals; additive over multiset union, linear in copies."""
    seq = rows.rows if isinstance(rows, RowMultiset) else tuple(rows)
    total = Fraction(0)
    for row in seq:
        residual = row.target - predict(coefficients, row.features)
        total += residual * residual
    return total


# =============================================================================
# Engine-facing algorithm objects
# =============================================================================


class Algorithm:
    """An aggregation over the full ordered sequence of ledger payloads."""

    name: str = "abstract"

    def compute(self, ledger: Sequence[UpdatePayload]) -> AlgorithmOutput:
        raise NotImplementedError


class MaxAlgorithm(Algorithm):
    name = "max"

    def compute(self, ledger: Sequence[UpdatePayload]) -> AlgorithmOutput:
        return alg_max(ledger)


class AverageAlgorithm(Algorithm):
    name = "average"

    def compute(self, ledger: Sequence[UpdatePayload]) -> AlgorithmOutput:
        return alg_average(ledger)


class KCenterAlgorithm(Algorithm):
    name = "kcenter"

    def __init__(self, k: int, p: NormOrder = 2, max_union: int = DEFAULT_MAX_UNION):
        if k < 1:
            raise ParamError(f"k must be positive, got {k}")
        self.k = k
        self.p = check_norm_order(p)
        self.max_union = max_union

    def compute(self, ledger: Sequence[UpdatePayload]) -> AlgorithmOutput:
        return alg_kcenter(ledger, self.k, self.p, self.max_union)

    def solve_detailed(self, ledger: Sequence[UpdatePayload]) -> KCenterSolution:
        return kcenter_solution(union_points(ledger), self.k, self.p, self.max_union)


class KMedianAlgorithm(Algorithm):
    name = "kmedian"

    def __init__(self, k: int, p: NormOrder = 2, max_union: int = DEFAULT_MAX_UNION):
        if k < 1:
            raise ParamError(f"k must be positive, got {k}")
        self.k = k
        self.p = check_norm_order(p)
        self.max_union = max_union

    def compute(self, ledger: Sequence[UpdatePayload]) -> AlgorithmOutput:
        return alg_kmedian(ledger, self.k, self.p, self.max_union)

    def solve_detailed(self, ledger: Sequence[UpdatePayload]) -> KCenterSolution:
        return kmedian_solution(union_points(ledger), self.k, self.p, self.max_union)


class DlrAlgorithm(Algorithm):
    name = "dlr"

    def __init__(self, d: int):
        if d < 1:
            raise ParamError(f"regression dimension must be positive, got {d}")
        self.d = d

    def compute(self, ledger: Sequence[UpdatePayload]) -> AlgorithmOutput:
        rows = all_rows(ledger)
        if rows and rows[0].width != self.d + 1:
            raise PayloadError(
                f"rows of width {rows[0].width} on a {self.d}-dimensional regression ledger"
            )
        if not rows:
            return NullOutput()
        return fit_from_moments(moments(rows))

    def cost(self, rows: Union[RowMultiset, Sequence[Row]], coefficients: Point) -> Fraction:
        return lr_cost(rows, coefficients)


def make_algorithm(name: str, params: Optional[dict] = None) -> Algorithm:
    """Build an algorithm from its scenario-file name and parameter object."""
    params = dict(params or {})
    if name == "max":
        return MaxAlgorithm()
    if name == "average":
        return AverageAlgorithm()
    if name in ("kcenter", "kmedian"):
        if "k" not in params:
            raise ParamError(f"{name} needs parameter k")
        k = int(params.pop("k"))
        p = params.pop("p", 2)
        if isinstance(p, str) and p != NORM_INF:
            p = int(p)
        max_union = int(params.pop("max_union", DEFAULT_MAX_UNION))
        if params:
            raise ParamError(f"unknown {name} parameters: {sorted(params)}")
        cls = KCenterAlgorithm if name == "kcenter" else KMedianAlgorithm
        return cls(k, p, max_union)
    if name == "dlr":
        if "d" not in params:
            raise ParamError("dlr needs parameter d")
        d = int(params.pop("d"))
        if params:
            raise ParamError(f"unknown dlr parameters: {sorted(params)}")
        return DlrAlgorithm(d)
    raise ParamError(f"unknown algorithm {name!r}")
