"""
Labelled graphs for generalised convolutions and their power counting.

A DiagramGraph encodes a kernel built from singular kernels: every edge
(e₋ → e₊) carries a kernel K_e(z_{e₊} - z_{e₋}) with labels (a_e, r_e), the
distinguished vertex ★ is tied to v★↑ by the test-function edge, and the
variable vertices 𝕍_var are integrated against the martingale measures.
Contracting the variables along a set partition γ gives a multigraph
(Ṽ, Ẽ) and its collapsed simple graph (V̂, Ê), on which the exponent ν_γ and
the contraction assumption are evaluated.

Key Design Principles:
1. Reports, not exceptions: assumption checks return item-by-item verdicts
   naming the offending edge, vertex or subset.
2. Exhaustive subsets: every vertex subset is checked; graphs in scope are
   small and a guard rejects large ones.
3. Fixtures as text: diagrams live in a line-oriented format that the
   parser reads with line-numbered errors.

Fixture format, one directive per line (``#`` starts a comment)::

    vertex <name> star|up|var|internal
    edge <from> <to> a=<real> r=<int>
    contract <v1> <v2> ...        one line per non-trivial component
    label <component> nil|down|diamond
    expect pass|fail              expected contraction-assumption verdict

Components are numbered from 1 in the order of their earliest-declared
variable vertex.
"""

import itertools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

from ..utils.errors import ContractError, GraphParseError, GuardError, HypothesisError
from ..utils.logging import get_logger
from .chaos import (DIAMOND, DOWN, LABELS, NIL, Contraction, Labeling, PFunction,
                    exponent_alpha, exponent_beta)

logger = get_logger(__name__)

STAR = 'star'
UP = 'up'
VAR = 'var'
INTERNAL = 'internal'
VERTEX_KINDS = (STAR, UP, VAR, INTERNAL)

MAX_SUBSET_VERTICES = 12
MAX_P_COMPONENTS = 8
P_VALUES = (1, 2, math.inf)


@dataclass(frozen=True)
class Edge:
    tail: str
    head: str
    a: float
    r: int = 0

    def __str__(self) -> str:
        return f"{self.tail}->{self.head} ({self.a:g},{self.r})"


@dataclass(frozen=True)
class DiagramGraph:
    """A labelled directed graph with ★, v★↑ and variable vertices, plus fixture metadata."""

    vertices: Tuple[Tuple[str, str], ...]
    edges: Tuple[Edge, ...]
    components: Tuple[Tuple[str, ...], ...] = ()
    labels: Tuple[Tuple[int, str], ...] = ()
    expect: Optional[bool] = None
    name: str = 'graph'

    def kind(self, vertex: str) -> str:
        for name, kind in self.vertices:
            if name == vertex:
                return kind
        raise ContractError(f"unknown vertex {vertex!r}")

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.vertices)

    def of_kind(self, kind: str) -> Tuple[str, ...]:
        return tuple(name for name, k in self.vertices if k == kind)

    @property
    def star(self) -> Optional[str]:
        stars = self.of_kind(STAR)
        return stars[0] if len(stars) == 1 else None

    @property
    def up(self) -> Optional[str]:
        ups = self.of_kind(UP)
        return ups[0] if len(ups) == 1 else None

    @property
    def var_vertices(self) -> Tuple[str, ...]:
        return self.of_kind(VAR)

    def contraction(self) -> Contraction:
        """γ over the variable vertices (numbered from 1 in declaration order)."""
        index = {name: i + 1 for i, name in enumerate(self.var_vertices)}
        n = len(index)
        if n == 0:
            return Contraction(0, ())
        listed = [tuple(index[v] for v in component) for component in self.components]
        covered = {i for component in listed for i in component}
        singletons = [(i,) for i in range(1, n + 1) if i not in covered]
        return Contraction.of(listed + singletons)

    def labeling(self, gamma: Optional[Contraction] = None) -> Labeling:
        gamma = gamma or self.contraction()
        labels = [NIL] * gamma.m
        for component, label in self.labels:
            if not 1 <= component <= gamma.m:
                raise ContractError(
                    f"label for component {component}, but the contraction has {gamma.m}"
                )
            labels[component - 1] = label
        return Labeling(tuple(labels))


def parse_graph(text: str, source: str = '<string>') -> DiagramGraph:
    """
    Parse the line-oriented fixture format.

    Args:
        text: Fixture contents
        source: Name used in error messages and as the graph name

    Returns:
        The parsed DiagramGraph (not yet validated)
    """
    vertices: List[Tuple[str, str]] = []
    edges: List[Edge] = []
    components: List[Tuple[str, ...]] = []
    labels: Dict[int, str] = {}
    expect: Optional[bool] = None
    seen = set()

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        words = line.split()
        directive, args = words[0], words[1:]

        if directive == 'vertex':
            if len(args) != 2 or args[1] not in VERTEX_KINDS:
                raise GraphParseError(
                    f"expected 'vertex <name> {'|'.join(VERTEX_KINDS)}'", number, source)
            if args[0] in seen:
                raise GraphParseError(f"duplicate vertex {args[0]!r}", number, source)
            seen.add(args[0])
            vertices.append((args[0], args[1]))
        elif directive == 'edge':
            if len(args) != 4:
                raise GraphParseError("expected 'edge <from> <to> a=<real> r=<int>'", number, source)
            values = {}
            for item in args[2:]:
                key, _, value = item.partition('=')
                if key not in ('a', 'r') or not value:
                    raise GraphParseError(f"bad edge label {item!r}", number, source)
                values[key] = value
            if set(values) != {'a', 'r'}:
                raise GraphParseError("edge needs both a=<real> and r=<int>", number, source)
            try:
                a, r = float(values['a']), int(values['r'])
            except ValueError as e:
                raise GraphParseError(f"bad edge label: {e}", number, source) from e
            if a < 0:
                raise GraphParseError(f"edge label a must be non-negative, got {a}", number, source)
            for end in args[:2]:
                if end not in seen:
                    raise GraphParseError(f"edge uses undeclared vertex {end!r}", number, source)
            edges.append(Edge(args[0], args[1], a, r))
        elif directive == 'contract':
            if len(args) < 2:
                raise GraphParseError("a contracted component needs two or more vertices",
                                      number, source)
            for v in args:
                if v not in seen:
                    raise GraphParseError(f"contract uses undeclared vertex {v!r}", number, source)
            components.append(tuple(args))
        elif directive == 'label':
            if len(args) != 2 or args[1] not in LABELS:
                raise GraphParseError(f"expected 'label <component> {'|'.join(LABELS)}'",
                                      number, source)
            try:
                labels[int(args[0])] = args[1]
            except ValueError as e:
                raise GraphParseError(f"bad component index {args[0]!r}", number, source) from e
        elif directive == 'expect':
            if len(args) != 1 or args[0] not in ('pass', 'fail'):
                raise GraphParseError("expected 'expect pass|fail'", number, source)
            expect = args[0] == 'pass'
        else:
            raise GraphParseError(f"unknown directive {directive!r}", number, source)

    kinds = dict(vertices)
    members = [v for component in components for v in component]
    for v in members:
        if kinds[v] != VAR:
            raise GraphParseError(f"only var vertices can be contracted, got {v!r}", None, source)
    if len(members) != len(set(members)):
        raise GraphParseError("a vertex appears in two contracted components", None, source)

    # Order components by their earliest-declared member.
    order = {name: i for i, (name, _) in enumerate(vertices)}
    components.sort(key=lambda c: min(order[v] for v in c))
    return DiagramGraph(tuple(vertices), tuple(edges), tuple(components),
                        tuple(sorted(labels.items())), expect, Path(source).stem)


def load_graph(path: str) -> DiagramGraph:
    """Read and parse a fixture file."""
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise GraphParseError(f"cannot read graph fixture: {e}", None, str(path)) from e
    return parse_graph(text, str(path))


def packaged_fixtures() -> List[str]:
    """Paths of the fixtures shipped with the package, sorted by name."""
    root = resources.files('lattice_chaos') / 'fixtures'
    return sorted(str(p) for p in root.iterdir() if str(p).endswith('.graph'))


@dataclass(frozen=True)
class ItemResult:
    item: str
    passed: bool
    detail: str = ''


@dataclass(frozen=True)
class AssumptionReport:
    """Item-by-item verdicts of a graph or contraction assumption."""

    items: Tuple[ItemResult, ...]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def failures(self) -> Tuple[ItemResult, ...]:
        return tuple(item for item in self.items if not item.passed)

    def verdict(self, item: str) -> bool:
        for result in self.items:
            if result.item == item:
                return result.passed
        raise KeyError(item)

    def __iter__(self) -> Iterator[ItemResult]:
        return iter(self.items)


def _incident(edges: Sequence[Edge], vertex: str) -> List[Edge]:
    return [e for e in edges if vertex in (e.tail, e.head)]


def validate_graph(G: DiagramGraph) -> AssumptionReport:
    """
    Check the structural requirements and the four labelling rules on 𝔾.

    Items: connected, loopless, single star edge, only outgoing edges, then
    item 1 (edges at ★ have r = 0), item 2 (★ → v★↑ labelled (0,0)),
    item 3 (one r > 0 edge per vertex) and item 4 (an r < 0 edge has no
    neighbouring edges).
    """
    results: List[ItemResult] = []
    star, up = G.star, G.up

    adjacency: Dict[str, set] = {name: set() for name in G.names}
    for e in G.edges:
        adjacency[e.tail].add(e.head)
        adjacency[e.head].add(e.tail)
    reached = set()
    if G.names:
        stack = [G.names[0]]
        while stack:
            v = stack.pop()
            if v in reached:
                continue
            reached.add(v)
            stack.extend(adjacency[v] - reached)
    missing = [v for v in G.names if v not in reached]
    results.append(ItemResult('connected', not missing,
                              f"unreachable vertices: {', '.join(missing)}" if missing else ''))

    loops = [str(e) for e in G.edges if e.tail == e.head]
    results.append(ItemResult('loopless', not loops, f"self-loops: {', '.join(loops)}" if loops else ''))

    if star is None or up is None:
        results.append(ItemResult('single star edge', False,
                                  "need exactly one star and exactly one up vertex"))
    else:
        out_of_star = [e for e in G.edges if e.tail == star]
        ok = len(out_of_star) == 1 and out_of_star[0].head == up
        detail = '' if ok else f"star must have one outgoing edge to {up}, has " \
            f"{', '.join(str(e) for e in out_of_star) or 'none'}"
        results.append(ItemResult('single star edge', ok, detail))

    into_var = [str(e) for e in G.edges if G.kind(e.head) == VAR]
    results.append(ItemResult('only outgoing edges', not into_var,
                              f"edges into variables: {', '.join(into_var)}" if into_var else ''))

    bad = [str(e) for e in G.edges if star in (e.tail, e.head) and e.r != 0]
    results.append(ItemResult('item 1', not bad, f"star edges with r != 0: {', '.join(bad)}"
                              if bad else ''))

    test_edges = [e for e in G.edges if e.tail == star and e.head == up]
    ok = len(test_edges) == 1 and test_edges[0].a == 0 and test_edges[0].r == 0
    results.append(ItemResult('item 2', ok, '' if ok else "the star -> up edge must carry (0,0)"))

    crowded = [v for v in G.names if sum(1 for e in _incident(G.edges, v) if e.r > 0) > 1]
    results.append(ItemResult('item 3', not crowded,
                              f"several r > 0 edges at: {', '.join(crowded)}" if crowded else ''))

    offending = []
    for e in G.edges:
        if e.r < 0:
            others = [o for o in _incident(G.edges, e.tail) + _incident(G.edges, e.head) if o != e]
            if others:
                offending.append(f"{e} shares endpoints with {', '.join(sorted({str(o) for o in others}))}")
    results.append(ItemResult('item 4', not offending, '; '.join(offending)))
    return AssumptionReport(tuple(results))


@dataclass(frozen=True)
class ContractedGraph:
    """
    The contracted multigraph (Ṽ, Ẽ) and the collapsed simple graph (V̂, Ê).

    ``identification`` is the map 𝔦_γ from original to contracted vertices;
    ``var_vertices`` lists contracted variable vertices in component order.
    """

    graph: DiagramGraph
    gamma: Contraction
    labels: Labeling
    vertices: Tuple[str, ...]
    var_vertices: Tuple[str, ...]
    identification: Tuple[Tuple[str, str], ...]
    multi_edges: Tuple[Edge, ...]
    edges: Tuple[Edge, ...]
    gamma_set: FrozenSet[str] = field(default_factory=frozenset)

    @property
    def star(self) -> str:
        return self.graph.star or ''

    @property
    def up(self) -> str:
        return self.graph.up or ''

    @property
    def m(self) -> int:
        return len(self.var_vertices)

    def gamma_indices(self) -> FrozenSet[int]:
        """Γ as 0-based component indices."""
        return frozenset(i for i, v in enumerate(self.var_vertices) if v in self.gamma_set)

    def down_indices(self) -> FrozenSet[int]:
        return frozenset(i for i, label in enumerate(self.labels.labels) if label == DOWN)


def contract_graph(G: DiagramGraph, gamma: Optional[Contraction] = None,
                   labels: Optional[Labeling] = None) -> ContractedGraph:
    """
    Identify the variable vertices of each component of γ and collapse parallel edges.

    Args:
        G: Diagram graph
        gamma: Contraction of the variables (default: the fixture's contract lines)
        labels: Labeling of the components (default: the fixture's label lines)

    Returns:
        ContractedGraph with Γ = singleton components ∪ diamond components
    """
    var = G.var_vertices
    gamma = gamma if gamma is not None else G.contraction()
    if gamma.n != len(var):
        raise ContractError(
            f"contraction covers {gamma.n} variables, the graph has {len(var)} var vertices"
        )
    labels = labels if labels is not None else G.labeling(gamma)
    labels.check(gamma)

    mapping = {name: name for name in G.names}
    merged = []
    for component in gamma.components:
        members = [var[i - 1] for i in component]
        target = '+'.join(members)
        merged.append(target)
        for v in members:
            mapping[v] = target

    vertices = []
    for name in G.names:
        if mapping[name] not in vertices:
            vertices.append(mapping[name])
    multi = tuple(Edge(mapping[e.tail], mapping[e.head], e.a, e.r) for e in G.edges)

    grouped: Dict[Tuple[str, str], List[Edge]] = {}
    for e in multi:
        grouped.setdefault((e.tail, e.head), []).append(e)
    collapsed = []
    for (tail, head), parallel in grouped.items():
        positive = [e.r for e in parallel if e.r > 0]
        negative = [e.r for e in parallel if e.r < 0]
        if len(positive) > 1:
            raise ContractError(f"parallel edges {tail}->{head} carry several r > 0")
        if negative and len(parallel) > 1:
            raise ContractError(f"an r < 0 edge {tail}->{head} has parallel edges")
        r = positive[0] if positive else (negative[0] if negative else 0)
        collapsed.append(Edge(tail, head, sum(e.a for e in parallel), r))

    gamma_set = frozenset(
        merged[c] for c, size in enumerate(gamma.sizes)
        if size == 1 or labels.labels[c] == DIAMOND
    )
    return ContractedGraph(G, gamma, labels, tuple(vertices), tuple(merged),
                           tuple(sorted(mapping.items())), multi, tuple(collapsed), gamma_set)


def _internal(edges: Sequence[Edge], subset: FrozenSet[str]) -> List[Edge]:
    return [e for e in edges if e.tail in subset and e.head in subset]


def _leaving(edges: Sequence[Edge], subset: FrozenSet[str]) -> List[Edge]:
    return [e for e in edges if e.tail in subset and e.head not in subset]


def _entering(edges: Sequence[Edge], subset: FrozenSet[str]) -> List[Edge]:
    return [e for e in edges if e.head in subset and e.tail not in subset]


def _subsets(vertices: Sequence[str], minimum: int) -> Iterator[FrozenSet[str]]:
    for size in range(minimum, len(vertices) + 1):
        for combo in itertools.combinations(vertices, size):
            yield frozenset(combo)


def _describe(subset: FrozenSet[str], order: Sequence[str]) -> str:
    return '{' + ', '.join(v for v in order if v in subset) + '}'


def check_contraction_assumption(cg: ContractedGraph, d: int = 3) -> AssumptionReport:
    """
    Check the four power-counting conditions on (V̂, Ê), with |𝔰| = d + 2.

    Edges leaving a subset have their tail inside and head outside; edges
    entering it the reverse. The first violating edge or subset of every
    item is reported.
    """
    vertices = cg.vertices
    if len(vertices) > MAX_SUBSET_VERTICES:
        raise GuardError(
            f"subset enumeration over {len(vertices)} vertices exceeds the guard of "
            f"{MAX_SUBSET_VERTICES}"
        )
    s = d + 2
    edges = cg.edges
    gamma = cg.gamma_set
    star, up = cg.star, cg.up
    results = []

    failing = [e for e in edges if e.a + min(e.r, 0) >= s]
    results.append(ItemResult(
        'item 1', not failing,
        '' if not failing else f"â + (r ∧ 0) >= {s} on {failing[0]}"))

    detail = ''
    for subset in _subsets([v for v in vertices if v != star], 3):
        hits = len(subset & gamma)
        lhs = sum(e.a for e in _internal(edges, subset))
        rhs = (2 * len(subset) - hits - 1 - (1 if hits == 0 else 0)) * s / 2.0
        if not lhs < rhs:
            detail = f"{_describe(subset, vertices)}: {lhs:g} >= {rhs:g}"
            break
    results.append(ItemResult('item 2', not detail, detail))

    detail = ''
    for subset in _subsets([v for v in vertices if v != star], 1):
        with_star = subset | {star}
        lhs = sum(e.a for e in _internal(edges, with_star))
        lhs += sum(e.a + e.r - 1 for e in _leaving(edges, with_star) if e.r > 0)
        lhs -= sum(e.r for e in _entering(edges, with_star) if e.r > 0)
        rhs = (2 * len(with_star) - len(with_star & gamma)) * s / 2.0
        if not lhs < rhs:
            detail = f"{_describe(with_star, vertices)}: {lhs:g} >= {rhs:g}"
            break
    results.append(ItemResult('item 3', not detail, detail))

    detail = ''
    for subset in _subsets([v for v in vertices if v not in (star, up)], 1):
        incident = [e for e in edges if e.tail in subset or e.head in subset]
        entering_positive = [e for e in _entering(edges, subset) if e.r > 0]
        lhs = sum(e.a for e in incident if e not in entering_positive)
        lhs += sum(e.r for e in _leaving(edges, subset) if e.r > 0)
        lhs -= sum(e.r - 1 for e in entering_positive)
        rhs = (2 * len(subset) - len(subset & gamma)) * s / 2.0
        if not lhs > rhs:
            detail = f"{_describe(subset, vertices)}: {lhs:g} <= {rhs:g}"
            break
    results.append(ItemResult('item 4', not detail, detail))
    return AssumptionReport(tuple(results))


def nu_gamma(cg: ContractedGraph, d: int = 3) -> float:
    """ν_γ = |𝔰|·|V̂ ∖ {★, v★↑}| - (|𝔰|/2)·|Γ| - Σ â_e."""
    s = d + 2
    inner = [v for v in cg.vertices if v not in (cg.star, cg.up)]
    return s * len(inner) - s / 2.0 * len(cg.gamma_set) - sum(e.a for e in cg.edges)


def delta_gamma(cg: ContractedGraph, p: PFunction, d: int = 3) -> float:
    """δ_γ(𝐩) = (|𝔰|/2)(2|𝐩⁻¹(∞)∖Γ| + |𝐩⁻¹(∞)∩Γ| + |𝐩⁻¹(2)∖Γ|)."""
    if p.m != cg.m:
        raise ContractError(f"p has {p.m} values for {cg.m} components")
    gamma = cg.gamma_indices()
    infinite = set(p.preimage(math.inf))
    two = set(p.preimage(2))
    return (d + 2) / 2.0 * (2 * len(infinite - gamma) + len(infinite & gamma) + len(two - gamma))


@dataclass(frozen=True)
class AdmissibleFunctions:
    """Admissible 𝐩, split by whether 𝐩⁻¹(∞) is empty."""

    without_infinity: Tuple[PFunction, ...]
    with_infinity: Tuple[PFunction, ...]

    def __iter__(self) -> Iterator[PFunction]:
        return iter(self.without_infinity + self.with_infinity)

    def __len__(self) -> int:
        return len(self.without_infinity) + len(self.with_infinity)


def enumerate_admissible(m: int, gamma: FrozenSet[int], down: FrozenSet[int]) -> AdmissibleFunctions:
    """All 𝐩 ∈ {1, 2, ∞}^m with 𝐩⁻¹(1) ∩ Γ = ∅ and 𝙻⁻¹(▽) ⊂ 𝐩⁻¹(1) (0-based indices)."""
    if m > MAX_P_COMPONENTS:
        raise GuardError(f"p-function enumeration needs m <= {MAX_P_COMPONENTS}, got {m}")
    finite, infinite = [], []
    for values in itertools.product(P_VALUES, repeat=m):
        ones = {i for i, v in enumerate(values) if v == 1}
        if ones & gamma or not down <= ones:
            continue
        p = PFunction(tuple(values))
        (infinite if math.inf in values else finite).append(p)
    return AdmissibleFunctions(tuple(finite), tuple(infinite))


def admissible_p_functions(cg: ContractedGraph,
                           labels: Optional[Labeling] = None) -> AdmissibleFunctions:
    """Admissible 𝐩 for the contracted graph (labels default to the graph's labelling)."""
    if labels is None:
        down = cg.down_indices()
    else:
        down = frozenset(i for i, label in enumerate(labels.labels) if label == DOWN)
    return enumerate_admissible(cg.m, cg.gamma_indices(), down)


def predicted_bound(cg: ContractedGraph, lam: float, eps: float, scale: float,
                    moment: float = 2.0, kappa: float = 0.01, d: int = 3, k: float = -0.5,
                    prefactor_exponent: float = 0.0, labels: Optional[Labeling] = None) -> float:
    """
    Right-hand side of the generalised-convolution moment bound with C = 1.

    ε^{prefactor}·(λ ∨ 𝔢)^{ν_γ}·Σ_𝐩 ε^{α_γ(𝐩) - κ·[𝐩⁻¹(∞) ≠ ∅]}·𝔢^{-δ_γ(𝐩)}

    Args:
        cg: Contracted graph
        lam: Test-function scale λ
        eps: Lattice mesh ε
        scale: Smoothing scale 𝔢
        moment: p ≥ 2 (enters only the unknown constant)
        kappa: Loss κ > 0 on terms with 𝐩⁻¹(∞) ≠ ∅
        d, k: Dimension and jump exponent in α
        prefactor_exponent: Extra power of ε, e.g. 2(a - 3) for a softened cherry

    Returns:
        The predicted bound
    """
    nu = nu_gamma(cg, d)
    if nu >= 0:
        raise HypothesisError(f"the bound needs ν_γ < 0, got ν_γ = {nu:g}")
    if moment < 2:
        raise HypothesisError(f"the bound holds for moments p >= 2, got {moment}")
    admissible = admissible_p_functions(cg, labels)
    total = 0.0
    for p in admissible.without_infinity:
        total += eps ** exponent_alpha(cg.gamma, p, d, k) * scale ** (-delta_gamma(cg, p, d))
    for p in admissible.with_infinity:
        total += eps ** (exponent_alpha(cg.gamma, p, d, k) - kappa) * \
            scale ** (-delta_gamma(cg, p, d))
    return eps ** prefactor_exponent * max(lam, scale) ** nu * total


@dataclass(frozen=True)
class ExponentRecord:
    p: PFunction
    alpha: float
    beta: float
    delta: float
    admissible: bool


@dataclass(frozen=True)
class ExponentReport:
    nu_gamma: float
    records: Tuple[ExponentRecord, ...]

    def admissible(self) -> Tuple[ExponentRecord, ...]:
        return tuple(r for r in self.records if r.admissible)


def exponent_report(cg: ContractedGraph, moment: float = 2.0, d: int = 3,
                    k: float = -0.5) -> ExponentReport:
    """α, β and δ for every 𝐩 ∈ {1, 2, ∞}^m, flagged by admissibility."""
    if cg.m > MAX_P_COMPONENTS:
        raise GuardError(f"p-function enumeration needs m <= {MAX_P_COMPONENTS}, got {cg.m}")
    allowed = set(tuple(p.values) for p in admissible_p_functions(cg))
    records = []
    for values in itertools.product(P_VALUES, repeat=cg.m):
        p = PFunction(tuple(values))
        records.append(ExponentRecord(
            p=p,
            alpha=exponent_alpha(cg.gamma, p, d, k) if cg.m else 0.0,
            beta=exponent_beta(cg.gamma, p, moment) if cg.m else 1.0,
            delta=delta_gamma(cg, p, d),
            admissible=tuple(values) in allowed,
        ))
    return ExponentReport(nu_gamma(cg, d), tuple(records))


@dataclass(frozen=True)
class GraphCheck:
    """Outcome of checking one fixture."""

    graph: DiagramGraph
    validation: AssumptionReport
    contracted: ContractedGraph
    assumption: AssumptionReport
    nu: float

    @property
    def matches_expectation(self) -> bool:
        if self.graph.expect is None:
            return self.validation.passed and self.assumption.passed
        return self.assumption.passed == self.graph.expect


def check_graph(G: DiagramGraph, d: int = 3) -> GraphCheck:
    """Validate, contract with the fixture's γ and labels, and check the contraction assumption."""
    validation = validate_graph(G)
    cg = contract_graph(G)
    assumption = check_contraction_assumption(cg, d)
    nu = nu_gamma(cg, d)
    logger.debug(f"{G.name}: nu={nu:g}, assumption {'PASS' if assumption.passed else 'FAIL'}")
    return GraphCheck(G, validation, cg, assumption, nu)


def format_check(check: GraphCheck) -> str:
    """Human-readable block for graphs.txt: ν_γ, the verdict and failing items."""
    nu = f"{check.nu:g}".replace('-', '−')
    verdict = 'PASS' if check.assumption.passed else 'FAIL'
    lines = [f"[{check.graph.name}]", f"ν_γ = {nu}, Assumption: {verdict}"]
    if check.graph.expect is not None:
        expected = 'PASS' if check.graph.expect else 'FAIL'
        status = 'matches' if check.matches_expectation else 'DOES NOT match'
        lines.append(f"expected {expected}: {status}")
    for item in check.assumption.failures():
        lines.append(f"  contraction {item.item}: {item.detail}")
    for item in check.validation.failures():
        lines.append(f"  graph {item.item}: {item.detail}")
    return '\n'.join(lines)
