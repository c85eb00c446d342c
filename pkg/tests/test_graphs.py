"""Tests for the diagram graph format, the contraction assumption and the exponents."""

import math
from pathlib import Path

import pytest

from lattice_chaos.core.chaos import DOWN, NIL, Contraction, Labeling, PFunction
from lattice_chaos.core.graphs import (
    MAX_P_COMPONENTS,
    admissible_p_functions,
    check_contraction_assumption,
    check_graph,
    contract_graph,
    delta_gamma,
    enumerate_admissible,
    exponent_report,
    format_check,
    load_graph,
    nu_gamma,
    packaged_fixtures,
    parse_graph,
    predicted_bound,
    validate_graph,
)
from lattice_chaos.utils.errors import (
    ConfigurationError,
    ContractError,
    GraphParseError,
    GuardError,
    HypothesisError,
)

PSI = """
vertex s star
vertex u up
vertex w var
edge s u a=0 r=0
edge w u a=3 r=0
expect pass
"""


def fixture(name):
    for path in packaged_fixtures():
        if Path(path).stem == name:
            return load_graph(path)
    raise AssertionError(f"fixture {name} is not packaged")


class TestParsing:
    def test_parse_psi(self):
        graph = parse_graph(PSI, 'psi.graph')
        assert graph.name == 'psi'
        assert graph.star == 's' and graph.up == 'u'
        assert graph.var_vertices == ('w',)
        assert len(graph.edges) == 2
        assert graph.edges[1].a == 3.0 and graph.edges[1].r == 0
        assert graph.expect is True

    def test_comments_and_blank_lines(self):
        text = "# header\n\n" + PSI.replace("a=3 r=0", "a=3 r=0  # the kernel")
        graph = parse_graph(text)
        assert len(graph.edges) == 2
        assert graph.edges[1].a == 3.0

    @pytest.mark.parametrize("text,line", [
        ("vertex s bogus", 1),
        ("vertex s star\nvertex s up", 2),
        ("vertex s star\nedge s x a=1 r=0", 2),
        ("vertex s star\nvertex u up\nedge s u a=1", 3),
        ("vertex s star\nvertex u up\nedge s u a=-1 r=0", 3),
        ("vertex s star\nvertex u up\nedge s u a=1 r=half", 3),
        ("vertex s star\nlabel 1 sideways", 2),
        ("vertex s star\nexpect maybe", 2),
        ("vertex s star\n\nfrobnicate s", 3),
    ])
    def test_errors_carry_line_numbers(self, text, line):
        with pytest.raises(GraphParseError) as excinfo:
            parse_graph(text)
        assert excinfo.value.line_number == line
        assert f"<string>:{line}:" in str(excinfo.value)

    def test_only_var_vertices_contract(self):
        text = "vertex s star\nvertex u up\nvertex w var\ncontract u w"
        with pytest.raises(GraphParseError):
            parse_graph(text)

    def test_vertex_in_two_components(self):
        text = ("vertex a var\nvertex b var\nvertex c var\n"
                "contract a b\ncontract b c")
        with pytest.raises(GraphParseError):
            parse_graph(text)

    def test_parse_errors_are_configuration_errors(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_graph(str(tmp_path / "missing.graph"))

    def test_contraction_and_labels(self):
        graph = fixture('cherry')
        gamma = graph.contraction()
        assert gamma.components == ((1, 2),)
        assert graph.labeling(gamma).labels == ('diamond',)

    def test_packaged_fixtures(self):
        names = sorted(Path(p).stem for p in packaged_fixtures())
        assert names == ['chain', 'chain_renorm', 'cherry', 'cherry_soft', 'psi', 'psi2']


class TestValidation:
    def test_psi_is_well_formed(self):
        report = validate_graph(parse_graph(PSI))
        assert report.passed
        assert report.failures() == ()

    def test_edge_into_variable(self):
        graph = parse_graph(PSI + "edge u w a=1 r=0\n")
        report = validate_graph(graph)
        assert not report.verdict('only outgoing edges')

    def test_disconnected_graph(self):
        graph = parse_graph(PSI + "vertex lonely var\n")
        report = validate_graph(graph)
        assert not report.verdict('connected')
        assert 'lonely' in report.failures()[0].detail

    def test_star_edge_must_be_plain(self):
        graph = parse_graph(PSI.replace("edge s u a=0 r=0", "edge s u a=1 r=1"))
        report = validate_graph(graph)
        assert not report.verdict('item 1')
        assert not report.verdict('item 2')

    def test_negative_renormalisation_needs_isolated_edge(self):
        report = validate_graph(fixture('chain_renorm'))
        assert not report.verdict('item 4')
        assert report.verdict('item 1')


class TestContraction:
    def test_cherry_collapses_parallel_edges(self):
        cg = contract_graph(fixture('cherry'))
        assert cg.vertices == ('s', 'u', 'w1+w2')
        assert cg.m == 1
        collapsed = [e for e in cg.edges if e.tail == 'w1+w2']
        assert len(collapsed) == 1 and collapsed[0].a == 6.0
        assert cg.gamma_indices() == frozenset({0})

    def test_nil_pair_is_outside_gamma(self):
        graph = fixture('cherry')
        cg = contract_graph(graph, Contraction.of([(1, 2)]), Labeling(('nil',)))
        assert cg.gamma_set == frozenset()

    def test_contraction_must_cover_variables(self):
        with pytest.raises(ContractError):
            contract_graph(fixture('psi2'), Contraction.of([(1,)]))

    def test_subset_guard(self):
        lines = ["vertex s star", "vertex u up", "edge s u a=0 r=0"]
        for i in range(11):
            lines += [f"vertex w{i} var", f"edge w{i} u a=1 r=0"]
        cg = contract_graph(parse_graph("\n".join(lines)))
        with pytest.raises(GuardError):
            check_contraction_assumption(cg)


class TestFixtureVerdicts:
    @pytest.mark.parametrize("name,nu,passed", [
        ('psi', -0.5, True),
        ('psi2', -1.0, True),
        ('cherry', -3.5, False),
        ('cherry_soft', -2.3, True),
        ('chain', -0.5, False),
        ('chain_renorm', -0.5, True),
    ])
    def test_verdicts(self, name, nu, passed):
        check = check_graph(fixture(name))
        assert check.nu == pytest.approx(nu)
        assert check.assumption.passed is passed
        assert check.matches_expectation

    def test_cherry_fails_integrability(self):
        report = check_graph(fixture('cherry')).assumption
        assert [item.item for item in report.failures()] == ['item 1']
        assert '6' in report.failures()[0].detail

    def test_chain_fails_integrability(self):
        report = check_graph(fixture('chain')).assumption
        assert not report.verdict('item 1')

    def test_format_check(self):
        block = format_check(check_graph(fixture('psi')))
        assert block.splitlines() == ['[psi]', 'ν_γ = −0.5, Assumption: PASS',
                                      'expected PASS: matches']

    def test_format_lists_failures(self):
        block = format_check(check_graph(fixture('cherry')))
        assert 'ν_γ = −3.5, Assumption: FAIL' in block
        assert 'contraction item 1' in block

    def test_unexpected_verdict_is_flagged(self):
        graph = parse_graph(PSI.replace("expect pass", "expect fail"), 'psi.graph')
        check = check_graph(graph)
        assert not check.matches_expectation
        assert 'DOES NOT match' in format_check(check)


class TestExponents:
    def test_nu_gamma(self):
        assert nu_gamma(contract_graph(fixture('psi2'))) == pytest.approx(-1.0)
        assert nu_gamma(contract_graph(fixture('psi')), d=1) == pytest.approx(3.0 - 1.5 - 3.0)

    def test_admissible_functions(self):
        admissible = enumerate_admissible(1, frozenset({0}), frozenset())
        assert [p.values for p in admissible.without_infinity] == [(2,)]
        assert [p.values for p in admissible.with_infinity] == [(math.inf,)]
        assert len(admissible) == 2

    def test_down_components_need_one(self):
        admissible = enumerate_admissible(2, frozenset({1}), frozenset({0}))
        assert all(p.values[0] == 1 for p in admissible)
        assert all(p.values[1] != 1 for p in admissible)
        assert len(admissible) == 2

    def test_admissible_for_contracted_graph(self):
        cg = contract_graph(fixture('psi2'))
        admissible = admissible_p_functions(cg)
        assert [p.values for p in admissible.without_infinity] == [(2, 2)]
        assert len(admissible.with_infinity) == 3
        down = Labeling((DOWN, NIL))
        assert len(admissible_p_functions(cg, down)) == 0

    def test_p_guard(self):
        with pytest.raises(GuardError):
            enumerate_admissible(MAX_P_COMPONENTS + 1, frozenset(), frozenset())

    def test_delta_gamma(self):
        cg = contract_graph(fixture('psi'))
        assert delta_gamma(cg, PFunction((2,))) == 0.0
        assert delta_gamma(cg, PFunction((math.inf,))) == pytest.approx(2.5)
        with pytest.raises(ContractError):
            delta_gamma(cg, PFunction((2, 2)))

    def test_exponent_report(self):
        report = exponent_report(contract_graph(fixture('psi')), k=-0.5)
        assert report.nu_gamma == pytest.approx(-0.5)
        assert len(report.records) == 3
        admissible = {r.p.values: r for r in report.admissible()}
        assert set(admissible) == {(2,), (math.inf,)}
        assert admissible[(2,)].alpha == pytest.approx(0.0)
        assert admissible[(math.inf,)].alpha == pytest.approx(2.5)
        assert admissible[(math.inf,)].beta == 1.0

    def test_predicted_bound(self):
        cg = contract_graph(fixture('psi'))
        lam, eps, scale, kappa = 0.5, 0.25, 0.1, 0.01
        expected = lam ** -0.5 * (1.0 + eps ** (2.5 - kappa) * scale ** -2.5)
        assert predicted_bound(cg, lam, eps, scale, kappa=kappa) == pytest.approx(expected)

    def test_bound_needs_negative_nu(self):
        cg = contract_graph(parse_graph(PSI.replace("a=3", "a=1")))
        with pytest.raises(HypothesisError):
            predicted_bound(cg, 0.5, 0.25, 0.1)

    def test_bound_needs_second_moment(self):
        with pytest.raises(HypothesisError):
            predicted_bound(contract_graph(fixture('psi')), 0.5, 0.25, 0.1, moment=1.5)
