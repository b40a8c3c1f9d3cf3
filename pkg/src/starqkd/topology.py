"""Wavelength planning for a star network built around a passive WDM router.

Every node owns one router port, and each unordered node pair is given its
own wavelength channel. Channels sharing a node must differ, so a plan is a
proper edge coloring of the complete graph K_n. The circle method yields a
1-factorization with n - 1 colors for even n; odd n borrows a phantom node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    InsufficientChannelsError,
    InvalidArgumentError,
    InvalidNetworkError,
    RoutingError,
)

Pair = tuple[int, int]


def pair_key(a: int, b: int) -> Pair:
    """Canonical (low, high) key for the unordered pair {a, b}."""
    if a == b:
        raise RoutingError(f"node {a} cannot be paired with itself")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class NodeId:
    index: int
    label: str

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True, order=True)
class ChannelIndex:
    color: int
    wavelength_nm: float


@dataclass(frozen=True)
class WavelengthPlan:
    """Color assigned to each unordered node pair.

    Colors are small integers; binding them to physical wavelengths happens
    when a router is built on a grid.
    """

    n_users: int
    assignment: Mapping[Pair, int] = field(hash=False)

    @property
    def colors(self) -> list[int]:
        return sorted(set(self.assignment.values()))

    @property
    def n_colors(self) -> int:
        return len(set(self.assignment.values()))

    def color(self, a: int, b: int) -> int:
        try:
            return self.assignment[pair_key(a, b)]
        except KeyError:
            raise RoutingError(f"pair ({a}, {b}) has no channel in this plan") from None

    def port_colors(self, node: int) -> frozenset[int]:
        return frozenset(c for (a, b), c in self.assignment.items() if node in (a, b))

    def pairs(self) -> list[Pair]:
        return sorted(self.assignment)


def expected_color_count(n_users: int) -> int:
    """Chromatic index of K_n: n - 1 for even n, n for odd n."""
    return n_users - 1 if n_users % 2 == 0 else n_users


def color_complete_graph(n_users: int) -> WavelengthPlan:
    """Round-robin 1-factorization of K_n.

    Node ``m - 1`` (with m the even order) stays fixed while the rest rotate;
    round r pairs it with r and pairs (r + k, r - k) mod (m - 1) for
    k = 1 .. m/2 - 1. For odd n the fixed node is a phantom whose edges are
    dropped, leaving one idle node per round.

    Colors are then renumbered in order of first appearance over the
    lexicographically sorted pairs, so node 0 talks to node k on color k - 1.
    """
    if not isinstance(n_users, (int, np.integer)) or isinstance(n_users, bool):
        raise InvalidNetworkError(f"n_users must be an integer, got {n_users!r}")
    if n_users < 2:
        raise InvalidNetworkError(f"a network needs at least 2 users, got {n_users}")
    n = int(n_users)
    m = n if n % 2 == 0 else n + 1
    rotating = m - 1
    raw: dict[Pair, int] = {}
    for r in range(rotating):
        if m - 1 < n:
            raw[pair_key(r, m - 1)] = r
        for k in range(1, m // 2):
            a = (r + k) % rotating
            b = (r - k) % rotating
            raw[pair_key(a, b)] = r

    relabel: dict[int, int] = {}
    assignment: dict[Pair, int] = {}
    for p in sorted(raw):
        c = raw[p]
        if c not in relabel:
            relabel[c] = len(relabel)
        assignment[p] = relabel[c]
    return WavelengthPlan(n_users=n, assignment=assignment)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_plan(plan: WavelengthPlan) -> ValidationReport:
    """Collect every defect of a plan instead of stopping at the first."""
    problems: list[str] = []
    n = plan.n_users
    for p in plan.assignment:
        a, b = p
        if not (0 <= a < n and 0 <= b < n) or a >= b:
            problems.append(f"pair {p} is not a valid (low, high) pair of nodes in 0..{n - 1}")
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in plan.assignment:
                problems.append(f"pair ({a}, {b}) has no channel")

    for v in range(n):
        seen: dict[int, Pair] = {}
        for p in sorted(plan.assignment):
            if v not in p:
                continue
            c = plan.assignment[p]
            if c in seen:
                problems.append(
                    f"vertex {v}: pairs {seen[c]} and {p} share color {c}"
                )
            else:
                seen[c] = p

    want = expected_color_count(n) if n >= 2 else 0
    if plan.n_colors != want:
        problems.append(f"uses {plan.n_colors} colors, edge-coloring theorem requires {want}")
    return ValidationReport(tuple(problems))


@dataclass(frozen=True)
class RouterSpec:
    """Passive quantum router: one WDM per port plus its optical matrices.

    ``isolation_db[i][j]`` is the suppression (positive dB) seen by light
    launched on grid channel ``i`` when it emerges on the output that carries
    channel ``j``; the diagonal holds the through insertion loss.

    ``isolation_scope`` says what the off-diagonal entries describe:
    ``"wdm"`` means a single multiplexer, so a stray photon crossing the
    router meets it twice; ``"router"`` means a measured end-to-end matrix.
    """

    plan: WavelengthPlan
    grid_nm: tuple[float, ...]
    insertion_loss_db: tuple[float, ...]
    isolation_db: tuple[tuple[float, ...], ...]
    isolation_scope: str = "wdm"

    @property
    def n_users(self) -> int:
        return self.plan.n_users

    def channel(self, color: int) -> ChannelIndex:
        return ChannelIndex(color, self.grid_nm[color])

    def channel_between(self, a: int, b: int) -> ChannelIndex:
        return self.channel(self.plan.color(a, b))

    def port(self, node: int) -> frozenset[ChannelIndex]:
        return frozenset(self.channel(c) for c in self.plan.port_colors(node))

    @property
    def ports(self) -> tuple[frozenset[ChannelIndex], ...]:
        return tuple(self.port(v) for v in range(self.n_users))

    def isolation_array(self) -> np.ndarray:
        return np.asarray(self.isolation_db, dtype=float)

    def leak_suppression_db(self, src: int, color: int, dst: int) -> float:
        """Loss from port ``src`` on channel ``color`` out through port ``dst``.

        Light entering at ``src`` is steered by that port's WDM onto the link
        towards ``dst`` only if it sits on channel color(src, dst); anything
        else leaks through the off-diagonal isolation of both WDMs.
        """
        out = self.plan.color(src, dst)
        if color == out:
            return self.insertion_loss_db[color]
        try:
            entry = self.isolation_db[color][out]
        except IndexError:
            raise ConfigurationError(
                f"isolation matrix has no entry for channel {color} -> {out}"
            ) from None
        return 2.0 * entry if self.isolation_scope == "wdm" else entry


def _check_grid(grid: Sequence[float]) -> tuple[float, ...]:
    g = tuple(float(x) for x in grid)
    if any(x <= 0 for x in g):
        raise InvalidArgumentError(f"wavelengths must be positive, got {g}")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise InvalidArgumentError(f"grid wavelengths must be strictly increasing, got {g}")
    return g


def default_isolation_matrix(
    n_channels: int, adjacent_db: float, nonadjacent_db: float, insertion_loss_db: Sequence[float]
) -> list[list[float]]:
    """Adjacency-by-grid-position isolation with insertion loss on the diagonal."""
    rows = []
    for i in range(n_channels):
        row = []
        for j in range(n_channels):
            if i == j:
                row.append(float(insertion_loss_db[i]))
            elif abs(i - j) == 1:
                row.append(float(adjacent_db))
            else:
                row.append(float(nonadjacent_db))
        rows.append(row)
    return rows


def build_router_spec(
    plan: WavelengthPlan,
    grid: Sequence[float],
    adjacent_isolation_db: float = 30.0,
    nonadjacent_isolation_db: float = 45.0,
    insertion_loss_db: Sequence[float] | float = 2.0,
    isolation_matrix_db: Sequence[Sequence[float]] | None = None,
) -> RouterSpec:
    """Bind a plan to a wavelength grid and fill in the router matrices.

    A supplied ``isolation_matrix_db`` (square, grid order, positive dB) is
    taken as a measured end-to-end matrix and overrides the defaults; its
    diagonal then replaces ``insertion_loss_db``.
    """
    g = _check_grid(grid)
    if len(g) < plan.n_colors or len(g) <= max(plan.assignment.values(), default=-1):
        raise InsufficientChannelsError(
            f"plan needs {plan.n_colors} channels but the grid has {len(g)}"
        )
    if adjacent_isolation_db <= 0 or nonadjacent_isolation_db <= 0:
        raise InvalidArgumentError("isolation values must be positive dB")

    k = len(g)
    if isinstance(insertion_loss_db, (int, float)):
        il = [float(insertion_loss_db)] * k
    else:
        il = [float(x) for x in insertion_loss_db]

    if isolation_matrix_db is not None:
        mat = [[float(x) for x in row] for row in isolation_matrix_db]
        if len(mat) != k or any(len(row) != k for row in mat):
            raise ConfigurationError(f"isolation matrix must be {k}x{k} to match the grid")
        il = [mat[i][i] for i in range(k)]
        scope = "router"
    else:
        if len(il) != k:
            raise ConfigurationError(f"need {k} insertion losses, got {len(il)}")
        mat = default_isolation_matrix(k, adjacent_isolation_db, nonadjacent_isolation_db, il)
        scope = "wdm"

    for i, x in enumerate(il):
        if not 0 < x < 5:
            raise ConfigurationError(
                f"insertion loss of channel {i} must lie in (0, 5) dB, got {x}"
            )
    for i in range(k):
        for j in range(k):
            if i != j and mat[i][j] <= mat[i][i]:
                raise ConfigurationError(
                    f"isolation {i}->{j} ({mat[i][j]} dB) does not exceed the through loss"
                )

    return RouterSpec(
        plan=plan,
        grid_nm=g,
        insertion_loss_db=tuple(il),
        isolation_db=tuple(tuple(row) for row in mat),
        isolation_scope=scope,
    )


@dataclass(frozen=True)
class Hop:
    kind: str  # "fiber" or "wdm"
    node: int


@dataclass(frozen=True)
class RoutePath:
    src: int
    dst: int
    channel: ChannelIndex
    hops: tuple[Hop, ...]

    @property
    def wdm_hops(self) -> int:
        return sum(1 for h in self.hops if h.kind == "wdm")


def route(spec: RouterSpec, src: int | NodeId, dst: int | NodeId) -> RoutePath:
    """Path of a photon from ``src`` to ``dst``: access fiber, two WDMs, access fiber."""
    s = src.index if isinstance(src, NodeId) else int(src)
    d = dst.index if isinstance(dst, NodeId) else int(dst)
    if s == d:
        raise RoutingError(f"cannot route node {s} to itself")
    for v in (s, d):
        if not 0 <= v < spec.n_users:
            raise RoutingError(f"node {v} is not a router port")
    ch = spec.channel_between(s, d)
    if ch not in spec.port(s) or ch not in spec.port(d):
        raise RoutingError(f"channel {ch} missing from a port on the {s}->{d} path")
    hops = (Hop("fiber", s), Hop("wdm", s), Hop("wdm", d), Hop("fiber", d))
    return RoutePath(s, d, ch, hops)


def plan_from_wavelengths(
    n_users: int, grid: Sequence[float], pairs: Mapping[Pair, float]
) -> WavelengthPlan:
    """Plan from an explicit pair -> wavelength table (used by scenario files)."""
    g = _check_grid(grid)
    index = {w: i for i, w in enumerate(g)}
    assignment = {}
    for (a, b), w in pairs.items():
        if float(w) not in index:
            raise ConfigurationError(f"pair ({a}, {b}) uses {w} nm, which is not on the grid")
        assignment[pair_key(a, b)] = index[float(w)]
    return WavelengthPlan(n_users=n_users, assignment=assignment)


def describe_plan(plan: WavelengthPlan, labels: Iterable[str] | None = None,
                  grid: Sequence[float] | None = None) -> list[str]:
    names = list(labels) if labels is not None else [str(i) for i in range(plan.n_users)]
    out = []
    for a, b in plan.pairs():
        c = plan.assignment[(a, b)]
        wl = f"{grid[c]:g} nm" if grid is not None else f"color {c}"
        out.append(f"{names[a]}-{names[b]}: {wl}")
    return out
