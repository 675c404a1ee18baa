import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from rankselect import linalg
from rankselect.criterion import (
    CriterionInputs,
    closed_form_count,
    criterion_trace,
    diagnostics,
    grs,
    k_cap,
    max_admissible_rank,
    oracle_bounds,
    rho_bound,
    select_rank,
    sigma_r_hat_sq,
)
from rankselect.errors import DegenerateTie, RankOutOfRange, ShapeError


def brute_trace(Y, P, lam):
    """sigma_k^2 built from explicit rank-k reconstructions of PY."""
    n, m = Y.shape
    PY = linalg.project(P, Y)
    F = linalg.svd(PY)
    K = k_cap(n, m, min(P.rank_q, m), lam)
    return np.array([linalg.fro_sq(Y - linalg.truncate(F, k)) / (n * m - lam * k) for k in range(K + 1)])


def draw_small(seed):
    g = np.random.default_rng(seed)
    n, m = int(g.integers(2, 13)), int(g.integers(1, 13))
    p = int(g.integers(1, 13))
    q = min(p, n)
    r = int(g.integers(0, min(q, m) + 1))
    X = g.standard_normal((n, p))
    A = g.standard_normal((p, r)) @ g.standard_normal((r, m)) * g.uniform(0, 3)
    Y = X @ A + g.standard_normal((n, m))
    lam = math.exp(g.uniform(0, math.log(n * m)))
    return Y, linalg.projection(X), lam


# --- K cap -----------------------------------------------------------------


@pytest.mark.parametrize(
    "n,m,q,lam,expected",
    [
        (50, 50, 30, 2 * (math.sqrt(50) + math.sqrt(30)) ** 2, 7),
        (50, 50, 30, 314.9, 7),
        (150, 30, 20, 198.0, 20),
        (10, 10, 10, 100.0, 0),  # lam = nm leaves only k = 0
        (10, 10, 10, 1.0, 10),
        (4, 3, 2, 5.0, 2),
    ],
)
def test_k_cap_examples(n, m, q, lam, expected):
    assert k_cap(n, m, q, lam) == expected


def test_k_cap_rejects_nonpositive_lambda():
    with pytest.raises(ValueError):
        k_cap(5, 5, 5, 0.0)


# --- trace -----------------------------------------------------------------


def test_trace_matches_explicit_reconstruction(gen):
    X, A, E, Y, P = random_instance(gen, 30, 8, 6, 3)
    lam = 20.0
    inp = CriterionInputs.from_data(Y, P, lam)
    assert np.allclose(criterion_trace(inp), brute_trace(Y, P, lam), rtol=1e-12)


def test_trace_first_entry_is_mean_square():
    Y = np.arange(12.0).reshape(4, 3)
    inp = CriterionInputs.from_data(Y, linalg.ProjectionOp.identity(4), 2.0)
    assert criterion_trace(inp)[0] == pytest.approx(np.sum(Y**2) / 12)


def test_trace_upto_beyond_N_raises(gen):
    inp = CriterionInputs.from_data(gen.standard_normal((5, 3)), None, 1.0)
    with pytest.raises(RankOutOfRange):
        criterion_trace(inp, upto=4)


def test_inputs_validation():
    with pytest.raises(ValueError):
        CriterionInputs(np.array([1.0, 2.0]), 0.0, 3, 2, 1.0)  # increasing
    with pytest.raises(ValueError):
        CriterionInputs(np.array([1.0]), -1.0, 3, 2, 1.0)
    with pytest.raises(ShapeError):
        CriterionInputs(np.ones((2, 2)), 0.0, 3, 2, 1.0)


def test_noiseless_rank_r_returns_r(gen):
    X, A, _, _, P = random_instance(gen, 40, 10, 8, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateTie)  # zero tail of d_k ties with lam * 0
        sel = grs(X @ A, P, 2.0)
    assert sel.k_hat == 4
    assert sel.sigma_sq_trace[4] <= 1e-12 * sel.sigma_sq_trace[0]


def test_zero_response_selects_zero():
    with pytest.warns(DegenerateTie):
        sel = grs(np.zeros((6, 4)), linalg.ProjectionOp.identity(6), 2.0)
    assert sel.k_hat == 0


# --- closed form and shape of the trace -------------------------------------


def test_closed_form_equals_brute_force_argmin():
    for seed in range(1000):
        Y, P, lam = draw_small(seed)
        with warnings.catch_warnings():
            warnings.simplefilter("error", DegenerateTie)
            sel = grs(Y, P, lam)
        t = brute_trace(Y, P, lam)
        assert sel.k_closed_form == int(np.argmin(t)) == sel.k_hat, seed


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trace_is_unimodal(seed):
    Y, P, lam = draw_small(seed)
    sel = grs(Y, P, lam)
    t, k = sel.sigma_sq_trace, sel.k_hat
    slack = 1e-12 * t[0]
    assert np.all(np.diff(t[: k + 1]) <= slack)
    assert np.all(np.diff(t[k:]) >= -slack)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pairwise_comparison_identity(seed):
    """sigma_j <= sigma_i  iff  mean of d_{i+1..j}^2 >= lam sigma_j, for i < j."""
    Y, P, lam = draw_small(seed)
    inp = CriterionInputs.from_data(Y, P, lam)
    t = criterion_trace(inp)
    K = len(t) - 1
    for i in range(K):
        for j in range(i + 1, K + 1):
            lhs = t[j] - t[i]
            rhs = lam * t[j] - np.mean(inp.d_sq[i:j])
            if abs(lhs) > 1e-9 * t[0] and abs(rhs) > 1e-9 * t[0]:
                assert (lhs <= 0) == (rhs <= 0)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_local_descent_implies_global(seed):
    """A one-step decrease at k beats every earlier index; a one-step increase is never undone."""
    Y, P, lam = draw_small(seed)
    t = criterion_trace(CriterionInputs.from_data(Y, P, lam))
    tol = 1e-12 * t[0]
    for k in range(1, len(t)):
        if t[k] <= t[k - 1]:
            assert np.all(t[k] <= t[:k] + tol)
        else:
            assert np.all(t[k - 1 :] >= t[k - 1] - tol)


def test_closed_form_ties_emit_warning():
    # d_1^2 = lam * sigma_1^2 exactly, so sigma_0 = sigma_1 = 1
    inp = CriterionInputs(np.array([1.0]), 1.0, 2, 1, 1.0)  # sigma_0 = 1, sigma_1 = 1
    with pytest.warns(DegenerateTie):
        sel = select_rank(inp)
    assert sel.k_hat == 0 and sel.k_closed_form == 1


# --- invariances -------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-3, 1.0, 1e3]))
def test_scale_invariance(seed, c):
    Y, P, lam = draw_small(seed)
    assert grs(c * Y, P, lam).k_hat == grs(Y, P, lam).k_hat


def test_rank_nonincreasing_in_lambda(gen):
    X, A, E, Y, P = random_instance(gen, 60, 12, 10, 5, b=0.3)
    ks = [grs(Y, P, lam).k_hat for lam in np.geomspace(1, 700, 40)]
    assert all(b <= a for a, b in zip(ks, ks[1:]))


# --- noise-only and sandwich properties --------------------------------------


def test_null_case_selects_zero_mostly():
    g = np.random.default_rng(7)
    n, m, q = 150, 30, 20
    P = linalg.projection(g.standard_normal((n, q)))
    lam = 2 * (math.sqrt(m) + math.sqrt(q)) ** 2
    ks = [grs(g.standard_normal((n, m)), P, lam).k_hat for _ in range(100)]
    assert np.mean(np.array(ks) == 0) >= 0.98


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pure_noise_trace_chain(seed):
    """With Y = E and lam * ||E||^2/nm >= d_1^2 + d_2^2 of PE, the even-step
    sequence ||E - (PE)_{2k}||^2 / (nm - lam k) is nondecreasing."""
    g = np.random.default_rng(seed)
    n, m, q = int(g.integers(10, 40)), int(g.integers(4, 16)), int(g.integers(4, 12))
    q = min(q, n)
    P = linalg.projection(g.standard_normal((n, q)))
    E = g.standard_normal((n, m))
    inp = CriterionInputs.from_data(E, P, 1.0)
    d = inp.d_sq
    if len(d) < 2:
        return
    sig = linalg.fro_sq(E) / (n * m)
    lam = (d[0] + d[1]) / sig * g.uniform(1.0, 2.0)
    num = inp.numerators()
    ks = [k for k in range(0, len(d) // 2 + 1) if n * m - lam * k > 0]
    e = [num[2 * k] / (n * m - lam * k) for k in ks]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(e, e[1:]))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sigma_r_sandwich(seed):
    g = np.random.default_rng(seed)
    n, m, q = int(g.integers(30, 80)), int(g.integers(5, 15)), int(g.integers(3, 10))
    r = int(g.integers(0, min(q, m) + 1))
    X, A, E, Y, P = random_instance(g, n, m, q, r, b=float(g.uniform(0, 2)))
    d1_sq = linalg.singular_values(P.coords(E))[0] ** 2
    sig = linalg.fro_sq(E) / (n * m)
    lam = 2 * d1_sq / sig * g.uniform(1.0, 1.5)
    inp = CriterionInputs.from_data(Y, P, lam)
    if r > inp.K:
        return
    s_r = sigma_r_hat_sq(inp, r)
    assert sig * (1 - 1e-10) <= s_r <= rho_bound(n, m, lam, r) * sig * (1 + 1e-10)


# --- diagnostics and oracle bounds -------------------------------------------


def test_max_admissible_rank_respects_rho():
    n, m, q = 50, 50, 30
    for lam in (50.0, 120.0, 314.9):
        for delta in (0.1, 0.5, 1.0, 3.0):
            r = max_admissible_rank(n, m, q, lam, delta)
            assert 0 <= r <= min(m, q)
            assert rho_bound(n, m, lam, r) <= 1 + delta + 1e-12
            if r < min(m, q, k_cap(n, m, q, lam)):
                assert rho_bound(n, m, lam, r + 1) > 1 + delta - 1e-12


def test_diagnostics_report(gen):
    X, A, E, Y, P = random_instance(gen, 50, 50, 30, 3)
    rep = diagnostics(CriterionInputs.from_data(Y, P, 314.9), delta=0.5, r=3)
    assert rep.K_lambda == 7
    assert rep.rho == pytest.approx(2500 / (2500 - 7 * 314.9))
    assert rep.max_admissible_rank <= 7
    assert rep.sigma_r_hat_sq > 0


def test_oracle_bound_rank_known(gen):
    for _ in range(30):
        X, A, E, Y, P = random_instance(gen, 80, 12, 10, 3, b=1.0)
        lam = 2.1 * (math.sqrt(12) + math.sqrt(10)) ** 2
        sel = grs(Y, P, lam)
        rep = oracle_bounds(Y, P, X @ A, E, sel.k_hat, 3, lam)
        if rep.rank_known_applies:
            assert rep.rank_known_holds
        if rep.general_event:
            assert rep.general_holds


def test_oracle_noiseless_fit_is_exact(gen):
    X, A, _, _, P = random_instance(gen, 30, 6, 5, 2)
    rep = oracle_bounds(X @ A, P, X @ A, np.zeros((30, 6)), 2, 2, 5.0)
    assert rep.lhs == pytest.approx(0.0, abs=1e-18 + 1e-20 * linalg.fro_sq(X @ A))
    assert rep.rank_known_holds
