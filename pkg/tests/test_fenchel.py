import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from simlearn import fenchel as F
from simlearn.errors import (
    BoundaryError,
    InvalidInputError,
    RangeError,
)

SIG = F.pair_from_tag("sigmoid")
IDE = F.pair_from_tag("identity")
RAMP = F.pair_from_tag("identity_clamped")
RELU = F.pair_from_tag("relu")
LEAKY = F.pair_from_tag("leaky_relu(0.1)")
ALL_BUILTINS = [IDE, RAMP, RELU, LEAKY, SIG]


# ---------------------------------------------------------------------------
# matching loss
# ---------------------------------------------------------------------------


def test_matching_loss_zero_score_is_zero():
    assert F.matching_loss_pointwise(0.7, 0.0, SIG) == 0.0


def test_matching_loss_identity_closed_form():
    # integral of tau from 0 to 2
    assert F.matching_loss_pointwise(0.0, 2.0, IDE) == pytest.approx(2.0)


def test_matching_loss_sigmoid_matches_shifted_crossentropy():
    # at t = link(0.5) = 0 and y = 1 the loss is CE(1, 0.5) - log 2 = 0
    assert F.matching_loss_pointwise(1.0, 0.0, SIG) == pytest.approx(0.0)
    # general y, t: loss = CE(y, sigmoid(t)) - log 2
    for y in (0.0, 0.25, 1.0):
        for t in (-3.0, 0.7, 2.5):
            p = 1.0 / (1.0 + math.exp(-t))
            ce = -(y * math.log(p) + (1 - y) * math.log(1 - p))
            got = F.matching_loss_pointwise(y, t, SIG)
            assert got == pytest.approx(ce - math.log(2.0), abs=1e-12)


def test_matching_loss_subgradient_is_residual():
    h = 1e-6
    for pair in (SIG, IDE, LEAKY):
        for y, t in [(0.3, 0.9), (0.8, -1.2)]:
            num = (pair.matching_loss(y, t + h) - pair.matching_loss(y, t - h)) / (2 * h)
            assert num == pytest.approx(pair.g_prime(t) - y, abs=1e-5)


def test_matching_loss_input_validation():
    with pytest.raises(InvalidInputError):
        F.matching_loss_pointwise(1.5, 0.0, SIG)
    with pytest.raises(InvalidInputError):
        F.matching_loss_pointwise(0.5, math.inf, SIG)
    with pytest.raises(InvalidInputError):
        F.matching_loss_pointwise(math.nan, 0.0, SIG)


@settings(max_examples=100, deadline=None)
@given(y=st.floats(0.0, 1.0),
       t1=st.floats(-20.0, 20.0), t2=st.floats(-20.0, 20.0))
def test_matching_loss_midpoint_convex(y, t1, t2):
    for pair in ALL_BUILTINS:
        mid = pair.matching_loss(y, 0.5 * (t1 + t2))
        avg = 0.5 * (pair.matching_loss(y, t1) + pair.matching_loss(y, t2))
        assert mid <= avg + 1e-9


# ---------------------------------------------------------------------------
# Bregman divergence
# ---------------------------------------------------------------------------


def test_bregman_zero_on_diagonal():
    assert F.bregman_divergence(0.3, 0.3, SIG) == pytest.approx(0.0, abs=1e-12)


def test_bregman_identity_is_half_squared():
    assert F.bregman_divergence(1.0, 0.0, IDE) == pytest.approx(0.5)


def test_bregman_sigmoid_is_kl():
    expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
    assert F.bregman_divergence(0.5, 0.25, SIG) == pytest.approx(expected,
                                                                 abs=1e-12)
    assert expected == pytest.approx(0.14384103622589042)


def test_bregman_boundary_needs_clamp():
    with pytest.raises(BoundaryError):
        F.bregman_divergence(0.5, 0.0, SIG)
    val = F.bregman_divergence(0.5, 0.0, SIG, clamp=1e-12)
    assert np.isfinite(val) and val > 0


def test_bregman_nonnegative_grid():
    ys = F.interior_grid(25)
    for pair in ALL_BUILTINS:
        Y, P = np.meshgrid(ys, ys, indexing="ij")
        B = pair.bregman(Y, P, clamp=1e-12)
        assert np.all(B >= -1e-12)
        # zero iff equal (diagonal)
        assert np.all(np.abs(np.diagonal(B)) <= 1e-12)


def test_bregman_equals_excess_matching_loss():
    ys = F.interior_grid(40)
    for pair in (IDE, LEAKY):
        Y, P = np.meshgrid(ys, ys, indexing="ij")
        excess = pair.matching_loss(Y, pair.f_prime(P)) \
            - pair.matching_loss(Y, pair.f_prime(Y))
        assert np.max(np.abs(excess - pair.bregman(Y, P))) <= 10 * pair.inversion_tolerance


def test_bregman_excess_identity_for_numeric_pair():
    # bisection-based link: same identity within the tolerance amplified by
    # the inverse slope of the perturbed sigmoid
    pair = F.FenchelPair(F.perturb_bilipschitz(F.sigmoid(), 0.05))
    ys = F.interior_grid(15)
    Y, P = np.meshgrid(ys, ys, indexing="ij")
    excess = pair.matching_loss(Y, pair.f_prime(P)) \
        - pair.matching_loss(Y, pair.f_prime(Y))
    gap = np.max(np.abs(excess - pair.bregman(Y, P)))
    assert gap <= 1e-6


# ---------------------------------------------------------------------------
# link inversion
# ---------------------------------------------------------------------------


def test_invert_link_logit_closed_forms():
    assert F.invert_link(0.5, SIG) == pytest.approx(0.0, abs=1e-12)
    assert F.invert_link(0.75, SIG) == pytest.approx(math.log(3.0), rel=1e-12)


def test_invert_link_leaky_closed_vs_bisection():
    # shifted two-slope activation: value 0.2 sits on the 0.1-slope branch
    t = F.invert_link(0.2, LEAKY)
    assert t == pytest.approx((0.2 - 0.5) / 0.1, abs=1e-9)
    numeric = F.invert_by_bisection(LEAKY.activation, 0.2,
                                    LEAKY.inversion_tolerance, LEAKY.beta)
    assert abs(LEAKY.g_prime(numeric) - 0.2) <= LEAKY.inversion_tolerance


def test_invert_link_range_errors():
    with pytest.raises(RangeError):
        F.invert_link(1.5, SIG)
    with pytest.raises(RangeError):
        F.invert_link(-0.2, RAMP)


def test_invert_link_flat_segments_take_minimal_preimage():
    # relu is flat at 0 for t < 0: the inverse at 0 is the right edge
    assert F.invert_link(0.0, RELU) == pytest.approx(0.0, abs=1e-9)
    assert F.invert_link(0.0, RAMP) == pytest.approx(0.0, abs=1e-9)
    # interior flat: staircase with a genuinely flat middle segment
    stair = F.FenchelPair(F.PiecewiseLinearActivation(
        [0.0, 1.0, 2.0, 3.0], [0.0, 0.4, 0.4, 1.0], 0.0, 0.0))
    assert stair.f_prime(0.4) == pytest.approx(1.0, abs=1e-9)


def test_duality_grids_all_builtins():
    r = F.interior_grid(500)
    for pair in ALL_BUILTINS:
        t = pair.f_prime(r)
        assert np.max(np.abs(pair.g_prime(t) - r)) <= 1e-8
    # alpha > 0 pairs also invert the other way
    for pair in (IDE, LEAKY):
        t = np.linspace(-3, 3, 101)
        assert np.max(np.abs(pair.f_prime(pair.g_prime(t)) - t)) \
            <= pair.inversion_tolerance / pair.alpha + 1e-9


# ---------------------------------------------------------------------------
# perturbation
# ---------------------------------------------------------------------------


def test_perturb_relu_gives_two_slopes():
    pert = F.perturb_bilipschitz(F.relu(), 0.1)
    ts = np.linspace(-4.0, 4.0, 401)
    quo = np.diff(pert(ts)) / np.diff(ts)
    assert quo.min() == pytest.approx(0.1, abs=1e-9)
    assert quo.max() == pytest.approx(1.1, abs=1e-9)
    assert pert.derived_from[1] == 0.1


def test_perturb_identity_scales():
    pert = F.perturb_bilipschitz(F.identity(), 0.25)
    ts = np.linspace(-2, 2, 9)
    assert np.allclose(pert(ts), 1.25 * ts)


def test_perturb_sigmoid_bilipschitz_on_grid():
    pert = F.perturb_bilipschitz(F.sigmoid(), 0.01)
    ts = np.linspace(-30.0, 30.0, 2001)
    quo = np.diff(pert(ts)) / np.diff(ts)
    assert np.all(quo >= 0.01 - 1e-9)
    assert np.all(quo <= 0.26 + 1e-9)
    assert pert.lipschitz_lower == pytest.approx(0.01)
    assert pert.lipschitz_upper == pytest.approx(0.26)


def test_perturb_validation():
    with pytest.raises(InvalidInputError):
        F.perturb_bilipschitz(F.relu(), 0.0)


@settings(max_examples=50, deadline=None)
@given(slope=st.floats(1e-3, 0.5),
       t1=st.floats(-10, 10), t2=st.floats(-10, 10))
def test_perturbed_increments_within_band(slope, t1, t2):
    if abs(t2 - t1) < 1e-9:
        return
    base = F.identity_clamped()
    pert = F.perturb_bilipschitz(base, slope)
    quo = (pert(t2) - pert(t1)) / (t2 - t1)
    assert slope - 1e-9 <= quo <= 1.0 + slope + 1e-9


# ---------------------------------------------------------------------------
# integrals and conjugates for custom activations
# ---------------------------------------------------------------------------


def test_custom_activation_quadrature_matches_scipy():
    act = F.FunctionActivation(lambda t: 0.5 + np.arctan(t) / np.pi,
                               1.0 / np.pi, 0.0, 0.0, 1.0)
    pair = F.FenchelPair(act)
    for t in (-2.0, 0.7, 3.5):
        ref = quad(lambda u: 0.5 + np.arctan(u) / np.pi, 0, t)[0]
        assert pair.g(t) == pytest.approx(ref, abs=1e-8)


def test_conjugate_identity_on_builtin_pairs():
    # f(r) = r f'(r) - g(f'(r)) everywhere the link is finite
    r = F.interior_grid(50)
    for pair in ALL_BUILTINS:
        t = pair.f_prime(r)
        assert np.max(np.abs(pair.f(r) - (r * t - pair.g(t)))) <= 1e-8


def test_sigmoid_conjugate_boundary_limits():
    assert SIG.f(0.0) == pytest.approx(math.log(2.0))
    assert SIG.f(1.0) == pytest.approx(math.log(2.0))


# ---------------------------------------------------------------------------
# boundedness certificates
# ---------------------------------------------------------------------------


def test_bounded_link_identity_endpoint_witnesses():
    cert = F.check_bounded_link(IDE, 1.0, 0.0, [0.1, 0.01, 0.5])
    assert cert.ok
    for w in cert.witnesses:
        assert (w.r0, w.r1) == (0.0, 1.0)
        assert w.head <= 1.0
        assert max(w.tail_lo, w.tail_hi) <= w.epsilon


def test_bounded_link_sigmoid_certificate():
    cert = F.check_bounded_link(SIG, 4.0, 0.5, [0.1, 0.01])
    assert cert.ok
    for w in cert.witnesses:
        assert w.head <= 4.0 * (1.0 / w.epsilon) ** 0.5
        assert max(w.tail_lo, w.tail_hi) <= w.epsilon
        assert 0.0 < w.r0 < w.r1 < 1.0


def test_bounded_link_rejects_fast_blowup():
    act = F.FunctionActivation(lambda t: 0.5 + np.arctan(t) / np.pi,
                               1.0 / np.pi, 0.0, 0.0, 1.0)
    res = F.check_bounded_link(F.FenchelPair(act), 1.0, 0.0, [0.01])
    assert not res.ok
    assert res.violated in ("head", "upper_tail", "lower_tail")


def test_bounded_link_probe_validation():
    with pytest.raises(InvalidInputError):
        F.check_bounded_link(IDE, 1.0, 0.0, [0.0])


def test_registration_gate_defaults():
    for pair in F.default_registered_pairs():
        assert F.registration_gate(pair).ok


# ---------------------------------------------------------------------------
# sandwich suites
# ---------------------------------------------------------------------------


def test_bilipschitz_sandwich_closed_form_pairs():
    for pair in (IDE, LEAKY):
        rep = F.bilipschitz_sandwich_report(pair, grid_n=100)
        assert rep["lower_slack"] >= -1e-9
        assert rep["upper_slack"] >= -1e-9
        assert rep["identity_gap"] <= 1e-9


def test_bilipschitz_sandwich_requires_alpha():
    with pytest.raises(InvalidInputError):
        F.bilipschitz_sandwich_report(RELU)


def test_kl_and_crossentropy_sandwiches():
    kl = F.kl_sandwich_report(grid_n=100)
    assert kl["lower_slack"] >= -1e-9
    assert kl["upper_slack"] >= -1e-9
    ce = F.crossentropy_absolute_report(grid_n=100)
    assert ce["lower_slack"] >= -1e-9
    assert ce["upper_slack"] >= -1e-9


def test_understated_beta_breaks_sandwich():
    # claim the identity activation is 0.5-Lipschitz: the lower bound of the
    # sandwich doubles and must now fail
    fake = F.PiecewiseLinearActivation([0.0], [0.0], 1.0, 1.0, kind="identity")
    fake.lipschitz_upper = 0.5
    rep = F.bilipschitz_sandwich_report(F.FenchelPair(fake), grid_n=20)
    assert rep["lower_slack"] < -1e-9


# ---------------------------------------------------------------------------
# activation tags
# ---------------------------------------------------------------------------


def test_tag_round_trips():
    for tag in ("identity", "identity_clamped", "relu", "sigmoid",
                "leaky_relu(0.1,0.5)", "perturbed(identity_clamped,0.05)",
                "perturbed(relu,0.05)"):
        act = F.activation_from_tag(tag)
        again = F.activation_from_tag(act.tag)
        ts = np.linspace(-3, 3, 50)
        assert np.allclose(act(ts), again(ts))


def test_unknown_tag_raises():
    with pytest.raises(InvalidInputError, match="swish"):
        F.activation_from_tag("swish")
    with pytest.raises(InvalidInputError):
        F.activation_from_tag("leaky_relu(0.1")


def test_monotone_and_lipschitz_metadata_on_grid():
    ts = np.linspace(-8.0, 8.0, 801)
    for pair in ALL_BUILTINS:
        vals = pair.g_prime(ts)
        diffs = np.diff(vals)
        assert np.all(diffs >= -1e-12)
        quo = diffs / np.diff(ts)
        assert np.all(quo <= pair.beta + 1e-9)
        if pair.alpha > 0:
            assert np.all(quo >= pair.alpha - 1e-9)
