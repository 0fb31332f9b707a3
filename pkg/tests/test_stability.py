import cmath
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpstab.model import ScaledParams
from tpstab.stability import (BranchCutWarning, CharEvalError, CharParams, Classification, FORMS,
                              SeedOrigin, char_fn, char_fn_unscaled, classify_spectrum,
                              essential_max_re, find_roots, heuristic_unstable,
                              limit_perfect_reflectivity, limit_zero_polarization_decay,
                              limit_zero_population_decay, seed_iterative, spectrum,
                              stability_map, zero_population_decay_quadratic,
                              zero_population_decay_re)
from tpstab.steadystate import select_branch, threshold_gain

finite = dict(allow_nan=False, allow_infinity=False)
alphas = st.floats(-60.0, 60.0, **finite)
ratios = st.floats(0.0, 2.0, **finite)
ks = st.floats(0.01, 10.0, **finite)
reflect = st.floats(0.1, 0.99, **finite)
intensities = st.floats(0.0, 30.0, **finite)
forms = st.sampled_from(FORMS)
lams = st.complex_numbers(max_magnitude=50.0, allow_nan=False, allow_infinity=False).filter(
    lambda z: abs(z + 1) > 1e-3)

FIG2 = ScaledParams(0.1, 3.55, 0.8, 1.0)


def upper(s):
    return select_branch(s, "Upper").exit_intensity


def test_unit_reflectivity_reduces_to_running_wave():
    for form in FORMS:
        cp = CharParams(22.3, 0.1, 3.55, 1.0, 7.0, form=form)
        lam = 0.3 - 2.0j
        assert char_fn(lam, cp) == pytest.approx(lam + 22.3j, abs=1e-14)


def test_log_term_vanishes_off_state():
    cp = CharParams(5.0, 0.1, 3.55, 0.8, 0.0)
    lam = 0.2 + 0.1j
    K = cp.K
    assert char_fn(lam, cp) == pytest.approx(lam + 5j + 0.5 * K * (lam + 3) / (lam + 1), abs=1e-14)


@given(alphas, ks, reflect, intensities, lams, forms)
def test_gamma_zero_is_quadratic_over_pole(a, k, R, I, lam, form):
    if form == "rederived" and I == 0:
        I = 1.0  # the rederived off state is handled separately
    cp = CharParams(a, 0.0, k, R, I, form=form)
    q = np.polyval(zero_population_decay_quadratic(cp), lam)
    assert char_fn(lam, cp) * (lam + 1) == pytest.approx(q, rel=1e-9, abs=1e-9)


def test_poles_are_errors():
    cp = CharParams(0.0, 0.1, 3.55, 0.8, 5.0)
    with pytest.raises(CharEvalError):
        char_fn(-1.0, cp)
    with pytest.raises(CharEvalError):
        char_fn(-0.1, cp)


def test_vanishing_log_argument_is_an_error():
    cp = CharParams(0.0, 0.5, 1.0, 0.8, 1.0)
    # (lam+1)(lam+0.5) + 0.5 = 0
    lam = complex(np.roots([1.0, 1.5, 1.0])[0])
    with pytest.raises(CharEvalError, match="logarithm"):
        char_fn(lam, cp)


def test_branch_cut_warns():
    # (lam+1)(lam+0.1) = -0.2025 lies between -s and -s*R**2 for s = 0.3
    cp = CharParams(0.0, 0.1, 3.55, 0.8, math.sqrt(3.0))
    with pytest.warns(BranchCutWarning):
        char_fn(-0.55 + 1e-9j, cp)


def test_array_evaluation_marks_bad_points():
    cp = CharParams(0.0, 0.1, 3.55, 0.8, 5.0)
    out = char_fn(np.array([-1.0 + 0j, 0.5 + 0j]), cp)
    assert np.isnan(out[0]) and out[1] == pytest.approx(char_fn(0.5, cp))


@given(alphas, ratios, ks, reflect, intensities, lams, forms, st.sampled_from([2, 4]))
def test_conjugate_symmetry(a, g, k, R, I, lam, form, p):
    cp = CharParams(a, g, k, R, I, boundary_exponent=p, form=form)
    assume_away = abs(lam + g) < 1e-3
    if assume_away:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BranchCutWarning)
        try:
            v = char_fn(lam, cp)
        except CharEvalError:
            return
        w = char_fn(lam.conjugate(), cp.mirrored())
    assert w == pytest.approx(v.conjugate(), rel=1e-13, abs=1e-13)


def test_scaled_matches_unscaled():
    g1 = 1e5
    cp = CharParams(3.0, 0.1, 3.55, 0.8, 5.0)
    for form in FORMS:
        cp = CharParams(3.0, 0.1, 3.55, 0.8, 5.0, form=form)
        lam = 0.2 - 1.5j
        G = char_fn(lam, cp)
        U = char_fn_unscaled(lam * g1, 3.0 * g1, g1, 0.1 * g1, 3.55 * g1, 0.8, 5.0, form=form)
        assert U / g1 == pytest.approx(G, rel=1e-12)


def test_perfect_reflectivity_limit():
    assert limit_perfect_reflectivity(CharParams(0.0, 0.1, 3.55, 1.0, 3.0)) == 0
    cp = CharParams(22.3, 0.1, 3.55, 1.0, 3.0)
    lam = limit_perfect_reflectivity(cp)
    assert lam == -22.3j
    assert abs(char_fn(lam, cp)) == 0
    assert limit_perfect_reflectivity(cp.mirrored()) == lam.conjugate()
    with pytest.raises(ValueError):
        limit_perfect_reflectivity(CharParams(0.0, 0.1, 3.55, 0.9, 3.0))


def test_zero_polarization_decay_limit():
    assert limit_zero_polarization_decay(4.0, 1.0, 1.0) == -4j
    assert limit_zero_polarization_decay(0.0, 1.0, math.exp(-1)).real == pytest.approx(-0.5)


@given(st.floats(-1e6, 1e6, **finite), st.floats(1e-3, 1e9, **finite), reflect,
       st.floats(0.0, 1e6, **finite), st.floats(0.0, 1e3, **finite))
def test_zero_polarization_decay_is_root(a, c_L, R, g2, I):
    lam = limit_zero_polarization_decay(a, c_L, R)
    assert lam.real < 0
    G = char_fn_unscaled(lam, a, 0.0, g2, c_L, R, I, form="standard")
    assert abs(G) <= 1e-12 * max(1.0, abs(a), c_L)


@given(st.floats(0.0, 50.0, **finite), reflect, ks, forms)
def test_closed_form_real_part_matches_quadratic(a, R, k, form):
    cp = CharParams(a, 0.0, k, R, 3.0, form=form)
    roots, re = limit_zero_population_decay(cp)
    assert re == pytest.approx(max(roots.real), abs=1e-10)


def test_zero_population_decay_trivial_example():
    roots, re = limit_zero_population_decay(CharParams(0.0, 0.0, 3.55, 1.0, 0.0))
    assert sorted(roots.real) == pytest.approx([-1.0, 0.0], abs=1e-15)
    assert re == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        limit_zero_population_decay(CharParams(0.0, 0.1, 3.55, 1.0, 0.0))


def test_closed_form_vectorized():
    a = np.linspace(0, 30, 7)
    vec = zero_population_decay_re(a, 3.55, 0.8)
    assert vec.shape == a.shape
    assert vec[3] == pytest.approx(float(zero_population_decay_re(a[3], 3.55, 0.8)))


def test_seed_iterative_examples():
    cp = CharParams(22.3, 0.1, 3.55, 1.0, 3.0)
    assert seed_iterative(cp, 1).value == pytest.approx(-22.3j)
    cp = CharParams(4.0, 0.1, 3.55, 0.8, 0.0)
    z = -4j
    expected = z - 0.5 * cp.K * (z + 3) / (z + 1)
    assert seed_iterative(cp, 1).value == pytest.approx(expected, rel=1e-14)
    cp = CharParams(2 * math.pi * 3.55 * 20, 0.1, 3.55, 0.8, upper(FIG2))
    assert seed_iterative(cp, 3).value.real < 0
    with pytest.raises(ValueError):
        seed_iterative(cp, 0)


def test_seed_iterative_pole_is_flagged():
    # from lam = 0 the first iterate is -1.5*K, which is the pole for K = 2/3
    cp = CharParams(0.0, 0.1, (2 / 3) / abs(math.log(0.8)), 0.8, 0.0)
    seed = seed_iterative(cp, 2)
    assert seed.hit_pole and seed.value == pytest.approx(-1.0)


def test_heuristic():
    assert not heuristic_unstable(CharParams(0.0, 0.1, 3.55, 0.8, 0.0))
    assert not heuristic_unstable(CharParams(0.0, 0.1, 3.55, 0.8, 1.0))
    assert heuristic_unstable(CharParams(0.0, 0.1, 3.55, 0.8, 1.01))


def test_find_roots_unit_reflectivity():
    cp = CharParams(22.3, 0.1, 3.55, 1.0, 5.0)
    es = find_roots(cp)
    assert len(es.roots) == 1
    assert es.roots[0].value == pytest.approx(-22.3j, abs=1e-12)
    assert es.max_re == pytest.approx(0.0, abs=1e-12)
    assert es.classification is Classification.STABLE


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 30.0, **finite), reflect, ks, forms)
def test_find_roots_gamma_zero_recovers_both(a, R, k, form):
    cp = CharParams(a, 0.0, k, R, 3.0, form=form)
    es = find_roots(cp, grid=(40, 40))
    exact, _ = limit_zero_population_decay(cp)
    for q in exact:
        if abs(q + 1) < 1e-6:
            continue
        assert min(abs(r.value - q) for r in es.roots) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 30.0, **finite), st.floats(0.01, 1.0, **finite), reflect,
       st.floats(1.01, 6.0, **finite), forms)
def test_every_root_has_small_residual(a, g, R, factor, form):
    s = ScaledParams(g, 3.55, R, factor * threshold_gain(ScaledParams(g, 3.55, R, 1.0)))
    cp = CharParams.from_scaled(s, upper(s), alpha_n=a, form=form)
    es = find_roots(cp, grid=(40, 40))
    for r in es.roots:
        assert r.residual < 1e-12
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BranchCutWarning)
            assert abs(char_fn(r.value, cp)) < 1e-12
    assert es.max_re == max(r.value.real for r in es.roots)


def test_find_roots_reports_empty_set():
    cp = CharParams(0.0, 0.1, 3.55, 0.8, 5.0)
    es = find_roots(cp, region=(50.0, 51.0, 50.0, 51.0), grid=(4, 4), max_grid_seeds=0,
                    max_iter=0)
    assert es.roots == [] and es.flag == "no_roots"
    assert math.isnan(es.max_re) and es.classification is None
    assert es.grid_min is not None


def test_seed_origins_recorded():
    es = find_roots(CharParams(0.0, 0.1, 3.55, 0.8, upper(FIG2)))
    assert {r.seed_origin for r in es.roots} <= set(SeedOrigin)
    assert len(es.roots) >= 2


def test_off_state_matches_gamma_zero_in_standard_form():
    a, k, R = 7.0, 3.55, 0.8
    off = find_roots(CharParams(a, 0.1, k, R, 0.0))
    flat = find_roots(CharParams(a, 0.0, k, R, 9.0))
    for r in off.roots:
        assert min(abs(r.value - q.value) for q in flat.roots) < 1e-10


def test_rederived_off_state_decays_at_cavity_rate():
    cp = CharParams(5.0, 0.1, 3.55, 0.8, 0.0, form="rederived")
    es = find_roots(cp)
    assert len(es.roots) == 1
    assert es.roots[0].value == pytest.approx(complex(-cp.K, -5.0), abs=1e-12)


def test_rederived_marginal_at_threshold():
    s = ScaledParams(0.1, 3.55, 0.5, 1.0)
    s = s.replace(gain=threshold_gain(s))
    cp = CharParams.from_scaled(s, upper(s), form="rederived")
    assert abs(char_fn(0.0, cp)) < 1e-7


def test_essential_spectrum():
    assert essential_max_re(CharParams(0.0, 0.1, 3.55, 0.8, 0.0)) == pytest.approx(-0.1)
    assert essential_max_re(CharParams(0.0, 0.1, 3.55, 0.8, 50.0)) == pytest.approx(-0.55)
    assert essential_max_re(CharParams(0.0, 0.0, 3.55, 0.8, 5.0)) == pytest.approx(0.0)


def test_spectrum_mirror_and_symmetry():
    I = upper(FIG2)
    sets = spectrum(FIG2, I, (-3, 3))
    assert [e.n for e in sets] == list(range(-3, 4))
    direct = spectrum(FIG2, I, (-3, -1), mirror=False)
    for e, d in zip(sets[:3], direct):
        assert e.max_re == pytest.approx(d.max_re, abs=1e-10)
        for r in e.roots:
            assert min(abs(r.value - q.value) for q in d.roots) < 1e-10


def test_spectrum_stable_classification():
    s = ScaledParams(0.1, 3.55, 0.8, 1.0)
    sets = spectrum(s, 0.0, (-20, 20))
    assert all(e.max_re < 0 for e in sets)
    assert classify_spectrum(sets) == "Stable"


def test_spectrum_rejects_detuning():
    with pytest.raises(ValueError):
        spectrum(FIG2.replace(delta_ac_bar=1.0), 1.0, (0, 1))


def test_classify_spectrum():
    from tpstab.stability import EigenvalueSet, Root
    def es(n, re):
        return EigenvalueSet(n, 0.0, [Root(complex(re, 0), 0.0, SeedOrigin.GRID_MIN)])
    assert classify_spectrum([es(0, 0.1), es(1, -0.1)]) == "SingleModeUnstable"
    assert classify_spectrum([es(0, -0.1), es(1, 0.1)]) == "MultimodeUnstable"
    assert classify_spectrum([es(0, 0.1), es(1, 0.1)]) == "SingleAndMultimodeUnstable"
    assert es(3, 0.2).classification is Classification.MULTIMODE_UNSTABLE


def test_map_single_point_is_find_roots():
    samples = stability_map(FIG2, [("alpha_n", [4.0])])
    es = find_roots(CharParams.from_scaled(FIG2, upper(FIG2), alpha_n=4.0))
    assert len(samples) == 1
    assert samples[0].max_re == pytest.approx(es.max_re, abs=1e-12)
    assert samples[0].n_roots == len(es.roots)


def test_map_gamma_zero_equals_closed_form():
    s = ScaledParams(0.0, 3.55, 0.8, 1.0)
    a = np.linspace(0, 30, 31)
    R = [0.2, 0.5, 0.8, 0.95]
    samples = stability_map(s, [("alpha_n", a), ("R", R)])
    for smp in samples:
        assert smp.max_re == pytest.approx(float(zero_population_decay_re(smp.axis1, 3.55, smp.axis2)),
                                           abs=1e-10)
        assert smp.max_re < 0


def test_map_once_stable_stays_stable():
    a = np.linspace(0, 30, 121)
    samples = stability_map(FIG2, [("alpha_n", a), ("gain", [1.0, 3.0, 5.0])])
    for G in (1.0, 3.0, 5.0):
        re = np.array([x.max_re for x in samples if x.axis2 == G])
        crossed = np.flatnonzero((re[:-1] > 0) & (re[1:] <= 0))
        for i in crossed:
            assert np.all(re[i + 1:] <= 0)


def test_map_flags_missing_branch():
    samples = stability_map(ScaledParams(0.1, 3.55, 0.5, 1.0), [("alpha_n", [0.0])])
    assert samples[0].flag == "below_threshold" and samples[0].I_L == 0.0
    samples = stability_map(ScaledParams(0.1, 3.55, 1.0, 1.0), [("alpha_n", [0.0])])
    assert samples[0].flag == "no_threshold"


def test_map_axis_validation():
    with pytest.raises(ValueError):
        stability_map(FIG2, [("k", [1.0])])
    with pytest.raises(ValueError):
        stability_map(FIG2, [("alpha_n", [math.nan])])
    with pytest.raises(ValueError):
        stability_map(FIG2, [("alpha_n", [1.0]), ("alpha_n", [2.0])])


def test_map_parallel_matches_serial():
    axes = [("alpha_n", np.linspace(0, 10, 5)), ("gain", [1.0, 5.0])]
    a = stability_map(FIG2, axes)
    b = stability_map(FIG2, axes, jobs=2)
    assert [x.max_re for x in a] == [x.max_re for x in b]


def test_boundary_exponent_only_touches_log_term():
    lam = 0.3 - 0.7j
    p2 = CharParams(1.0, 0.1, 3.55, 0.8, 5.0, boundary_exponent=2)
    p4 = CharParams(1.0, 0.1, 3.55, 0.8, 5.0, boundary_exponent=4)
    diff = char_fn(lam, p4) - char_fn(lam, p2)
    a = (lam + 1) * (lam + 0.1)
    s = 0.1 * 25.0
    expected = 0.25 * 3.55 * (lam + 2) / (lam + 1) * (cmath.log(a + s * 0.8**2) - cmath.log(a + s * 0.8**4))
    assert diff == pytest.approx(expected, rel=1e-12)
