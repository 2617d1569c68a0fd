import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proposal_programs import fixtures, linreg
from proposal_programs.core import ChoiceMap, restrict, select
from proposal_programs.dist import bernoulli
from proposal_programs.errors import BranchLimit, DegenerateCells, EmptySupport, NonEnumerable
from proposal_programs.oracle import (
    chi2_sf,
    chi_square_gof,
    enumerate_program,
    exact_grad_JK,
    exact_J_and_JK,
    exact_marginal,
    exact_target_distribution,
    extended_mh_discrepancies,
    extended_weight_discrepancies,
    finite_difference_grad_JK,
    positivity_holds,
    regularized_gamma_q,
    split_check,
    tv_distance,
)
from proposal_programs.runtime import ProposalProgram
from proposal_programs.samplers import UnnormalizedTarget

# closed-form two-coin bounds with z uniform on {0, 1}
TWO_COIN_J = math.log(0.5)
TWO_COIN_JK = {
    1: 0.5 * math.log(0.9) + 0.5 * math.log(0.1),
    2: 0.25 * math.log(0.9) + 0.5 * math.log(0.5) + 0.25 * math.log(0.1),
    3: 0.125 * math.log(0.9)
    + 0.375 * math.log((0.9 + 0.9 + 0.1) / 3)
    + 0.375 * math.log((0.9 + 0.1 + 0.1) / 3)
    + 0.125 * math.log(0.1),
}


def prog(body, *outs):
    return ProposalProgram(body, outputs=select(*outs))


class TestEnumerate:
    def test_single_bernoulli(self):
        e = enumerate_program(prog(lambda c, x, p: c.choice(bernoulli(0.3), "a"), "a"), None, None)
        assert sorted(t.prob for t in e) == pytest.approx([0.3, 0.7])

    def test_two_independent(self):
        def body(c, x, p):
            c.choice(bernoulli(0.5), "a")
            c.choice(bernoulli(0.5), "b")

        e = enumerate_program(prog(body, "a", "b"), None, None)
        assert len(e) == 4 and all(t.prob == 0.25 for t in e)

    def test_two_coin(self):
        e = enumerate_program(fixtures.get("two-coin").program, None, None)
        assert sorted(t.prob for t in e) == pytest.approx([0.05, 0.05, 0.45, 0.45])

    def test_unannotated_randomness_not_enumerable(self):
        def body(c, x, p):
            c.rng.random()
            c.choice(bernoulli(0.5), "a")

        with pytest.raises(NonEnumerable):
            enumerate_program(prog(body, "a"), None, None)

    def test_cap(self):
        def body(c, x, p):
            for i in range(12):
                c.choice(bernoulli(0.5), f"b{i}")

        with pytest.raises(BranchLimit):
            enumerate_program(prog(body, "b0"), None, None, cap=1000)

    @pytest.mark.parametrize("name", list(fixtures.FIXTURES))
    def test_totals_and_distinct_traces(self, name):
        f = fixtures.get(name)
        xs = f.states if name == "four-state" else [f.x]
        for x in xs:
            e = enumerate_program(f.program, x, f.params)
            assert e.total_prob() == pytest.approx(1.0, abs=1e-9)
            keys = [t.trace.choices() for t in e]
            assert len(set(keys)) == len(keys)
            outs = f.program.resolve_outputs(None)
            assert sum(exact_marginal(e, z) for z in e.output_traces(outs)) == pytest.approx(1.0, abs=1e-9)


class TestExactMarginal:
    def test_two_coin(self):
        e = enumerate_program(fixtures.get("two-coin").program, None, None)
        assert exact_marginal(e, ChoiceMap(z=True)) == pytest.approx(0.5, abs=1e-15)

    def test_empty_map(self):
        e = enumerate_program(fixtures.get("dice-mixture").program, None, None)
        assert exact_marginal(e, ChoiceMap()) == pytest.approx(1.0, abs=1e-12)

    def test_unrealizable(self):
        e = enumerate_program(fixtures.get("output-only").program, None, None)
        assert exact_marginal(e, ChoiceMap(a=False, b=7)) == 0.0

    def test_coin_pair_by_hand(self):
        # u ~ bern(.4); z1 ~ bern(u ? .8 : .3); z2 ~ bern(z1 == u ? .75 : .2)
        e = enumerate_program(fixtures.get("coin-pair").program, None, None)
        for z1, z2 in itertools.product((False, True), repeat=2):
            total = 0.0
            for u, pu in ((True, 0.4), (False, 0.6)):
                p1 = 0.8 if u else 0.3
                p2 = 0.75 if z1 == u else 0.2
                total += pu * (p1 if z1 else 1 - p1) * (p2 if z2 else 1 - p2)
            assert exact_marginal(e, ChoiceMap(z1=z1, z2=z2)) == pytest.approx(total, abs=1e-15)

    @pytest.mark.parametrize("name", fixtures.MARGINAL_FIXTURES)
    def test_positivity(self, name):
        f = fixtures.get(name)
        assert all(positivity_holds(f.program, f.x, f.params, z) for z in f.zs)


class TestJensen:
    def test_two_coin_closed_form(self):
        f = fixtures.get("two-coin")
        pairs = [(None, z, 0.5) for z in f.zs]
        for K in (1, 2, 3):
            J, JK = exact_J_and_JK(f.program, None, pairs, K)
            assert J == pytest.approx(TWO_COIN_J, abs=1e-14)
            assert JK == pytest.approx(TWO_COIN_JK[K], abs=1e-14)
            assert JK < J

    def test_no_internal_choices_tight(self):
        f = fixtures.get("output-only")
        pairs = [(None, z, 1 / 3) for z in f.zs]
        for K in (1, 2, 3):
            J, JK = exact_J_and_JK(f.program, None, pairs, K)
            assert JK == pytest.approx(J, abs=1e-12)


def closed_form_JK2(theta_u, theta0, theta1, mp):
    """Two-coin J^2 with sigmoid parameters and z ~ bernoulli(0.7), in mpmath."""
    sig = lambda t: 1 / (1 + mp.exp(-t))
    pu, p0, p1 = sig(theta_u), sig(theta0), sig(theta1)
    total = 0
    for z, rz in ((True, mp.mpf("0.7")), (False, mp.mpf("0.3"))):
        out = {True: p1 if z else 1 - p1, False: p0 if z else 1 - p0}
        for u1, u2 in itertools.product((True, False), repeat=2):
            w = (pu if u1 else 1 - pu) * (pu if u2 else 1 - pu)
            total += rz * w * mp.log((out[u1] + out[u2]) / 2)
    return total


class TestGradient:
    def test_exact_gradient_vs_closed_form(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40
        f = fixtures.get("param-two-coin")
        g = exact_grad_JK(f.program, f.params, fixtures.TWO_COIN_TRAINING_PAIRS, 2)
        th = [mp.mpf(float(f.params[n])) for n in ("u_logit", "z_logit_0", "z_logit_1")]
        for i, name in enumerate(("u_logit", "z_logit_0", "z_logit_1")):
            def fi(t, i=i):
                args = list(th)
                args[i] = t
                return closed_form_JK2(*args, mp)

            assert float(g[name]) == pytest.approx(float(mp.diff(fi, th[i])), abs=1e-12)

    def test_exact_gradient_vs_finite_differences(self):
        f = fixtures.get("param-two-coin")
        g = exact_grad_JK(f.program, f.params, fixtures.TWO_COIN_TRAINING_PAIRS, 2)
        fd = finite_difference_grad_JK(f.program, f.params, fixtures.TWO_COIN_TRAINING_PAIRS, 2, h=1e-6)
        for name in g:
            assert float(g[name]) == pytest.approx(float(fd[name]), abs=1e-8)


class TestExtendedSpace:
    def test_importance_weight_identity(self):
        f = fixtures.get("two-coin")
        rows = list(extended_weight_discrepancies(f.program, None, None, f.target, K=2))
        assert len(rows) == 8
        for _, _, w, r in rows:
            assert w == pytest.approx(r, rel=1e-12)

    @pytest.mark.parametrize("name", ["two-coin", "four-state"])
    def test_mh_ratio_identity(self, name):
        f = fixtures.get(name)
        rows = list(extended_mh_discrepancies(f.program, None, f.target, f.states, K=2))
        assert rows
        for _, _, s, e in rows:
            assert s == pytest.approx(e, rel=1e-12)


class TestTargets:
    def test_constant(self):
        pts = [ChoiceMap(a=i) for i in range(4)]
        assert np.allclose(exact_target_distribution(UnnormalizedTarget(lambda z: 0.0), pts), 0.25)

    def test_two_to_one(self):
        pts = [ChoiceMap(a=0), ChoiceMap(a=1)]
        t = UnnormalizedTarget(lambda z: math.log(2.0) if z["a"] == 0 else 0.0)
        assert np.allclose(exact_target_distribution(t, pts), [2 / 3, 1 / 3])

    def test_empty(self):
        with pytest.raises(EmptySupport):
            exact_target_distribution(UnnormalizedTarget(lambda z: 0.0), [])

    def test_linreg_outlier_flags(self):
        data = linreg.Dataset([-1.0, 0.5, 2.0], [0.3, 4.0, 1.1])
        slope, intercept = 0.4, 0.2
        support = [linreg.latent_assignment(slope, intercept, flags) for flags in itertools.product((False, True), repeat=3)]
        got = exact_target_distribution(linreg.posterior_target(data), support)

        def dens(y, mu, sd):
            return math.exp(-0.5 * ((y - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))

        direct = []
        for flags in itertools.product((False, True), repeat=3):
            p = 1.0
            for x, y, o in zip(data.xs, data.ys, flags):
                mu = slope * x + intercept
                p *= 0.1 * dens(y, mu, 5.8) if o else 0.9 * dens(y, mu, 1.0)
            direct.append(p)
        direct = np.array(direct) / sum(direct)
        assert np.allclose(got, direct, rtol=1e-12, atol=0)


class TestStatistics:
    def test_proportional_counts(self):
        r = chi_square_gof([25, 50, 25], [0.25, 0.5, 0.25])
        assert r.statistic == 0.0 and r.p_value == pytest.approx(1.0)
        assert tv_distance([0.25, 0.5, 0.25], [0.25, 0.5, 0.25]) == 0.0

    def test_tv_uniform_vs_point_mass(self):
        assert tv_distance([0.5, 0.5], [1.0, 0.0]) == 0.5

    def test_critical_value(self):
        assert abs(chi2_sf(3.84, 1) - 0.050) <= 0.001

    def test_degenerate_cells(self):
        with pytest.raises(DegenerateCells):
            chi_square_gof([1, 2], [1.0, 0.0])
        with pytest.raises(DegenerateCells):
            chi_square_gof([0, 0], [0.5, 0.5])

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.05, 60), st.integers(1, 30))
    def test_against_scipy(self, stat, df):
        stats = pytest.importorskip("scipy.stats")
        assert chi2_sf(stat, df) == pytest.approx(stats.chi2.sf(stat, df), rel=1e-9, abs=1e-14)

    def test_q_boundaries(self):
        assert regularized_gamma_q(2.0, 0.0) == 1.0
        assert regularized_gamma_q(1.0, 3.0) == pytest.approx(math.exp(-3.0), rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["coin-pair", "dice-mixture", "late-internal"]), st.integers(0, 10**6))
def test_split_factorization_on_fixture_traces(name, seed):
    from proposal_programs.runtime import run_forward

    f = fixtures.get(name)
    t = run_forward(f.program, None, None, seed)
    outs = f.program.resolve_outputs(None)
    assert split_check(t, outs) <= 1e-8
    assert restrict(t, outs) in enumerate_program(f.program, None, None).output_traces(outs)
