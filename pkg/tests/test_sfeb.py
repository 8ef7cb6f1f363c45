import numpy as np
import pytest

from sinet.csc import CscProblem, ista_solve
from sinet.sfeb import (
    SfebParams,
    ThresholdSchedule,
    sfeb_backward,
    sfeb_forward,
    sigmoid,
    softplus,
    theta_at,
)
from sinet.tensor_ops import KernelBank, conv2d_same, dot, transpose_bank
from sinet.verify import tied_block_for_problem


def make_params(rng, k=3, ks=3, iterations=2, tied=False, in_channels=1):
    def bank(out_ch, in_ch):
        return KernelBank(rng.standard_normal((out_ch, in_ch, ks, ks)) * 0.3)

    stored = 1 if tied else iterations
    return SfebParams(
        w_in=[] if tied else [bank(k, in_channels) for _ in range(stored)],
        w_u=[bank(k, in_channels) for _ in range(stored)],
        w_d=[bank(in_channels, k) for _ in range(stored)],
        schedule=ThresholdSchedule(w_raw=0.3, b_theta=-1.0),
        iterations=iterations,
        tied=tied,
    )


# ---------------------------------------------------------------------------
# threshold schedule
# ---------------------------------------------------------------------------


def test_theta_pinned_values():
    # k = 0 kills the slope term regardless of w_raw
    for w_raw in (-3.0, 0.0, 2.5):
        sched = ThresholdSchedule(w_raw=w_raw, b_theta=0.0)
        assert theta_at(sched, 0) == pytest.approx(np.log(2.0), rel=1e-12)
    # w_raw = 0 gives slope -ln 2; theta(2) = softplus(-2 ln 2) = ln(1.25)
    sched = ThresholdSchedule(w_raw=0.0, b_theta=0.0)
    assert sched.slope == pytest.approx(-np.log(2.0), rel=1e-12)
    assert theta_at(sched, 2) == pytest.approx(0.22314355131, rel=1e-9)
    assert theta_at(sched, 1) < theta_at(sched, 0)


def test_theta_strictly_positive_and_decreasing_1000_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        sched = ThresholdSchedule(
            w_raw=float(rng.uniform(-6, 6)), b_theta=float(rng.uniform(-6, 6))
        )
        thetas = [theta_at(sched, k) for k in range(17)]
        assert all(t > 0 for t in thetas)
        assert all(a > b for a, b in zip(thetas, thetas[1:]))


def test_theta_negative_iteration_rejected():
    with pytest.raises(ValueError):
        theta_at(ThresholdSchedule(0.0, 0.0), -1)


def test_softplus_sigmoid_stability():
    assert softplus(-800.0) == 0.0
    assert softplus(800.0) == 800.0
    assert sigmoid(-800.0) == 0.0
    assert sigmoid(800.0) == 1.0
    assert sigmoid(0.0) == 0.5


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def test_zero_input_zero_code():
    rng = np.random.default_rng(1)
    params = make_params(rng, iterations=3)
    code, trace = sfeb_forward(params, np.zeros((8, 8, 1)))
    np.testing.assert_array_equal(code, np.zeros((8, 8, 3)))
    for z in trace:
        np.testing.assert_array_equal(z, np.zeros((8, 8, 3)))


def test_single_iteration_reduction():
    from sinet.csc import soft_threshold

    rng = np.random.default_rng(2)
    params = make_params(rng, iterations=1)
    channel = rng.standard_normal((6, 7, 1))
    code, trace = sfeb_forward(params, channel)
    expected = soft_threshold(
        conv2d_same(channel, params.w_in[0]), theta_at(params.schedule, 0)
    )
    np.testing.assert_array_equal(code, expected)
    assert len(trace) == 1


def test_tied_mode_ista_equivalence_10_dictionaries():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        dictionary = KernelBank(rng.standard_normal((1, 2, 3, 3)))
        observation = rng.standard_normal((6, 6, 1))
        problem = CscProblem(
            observation=observation,
            dictionary=dictionary,
            lam=0.1,
            step_size=0.05,
            iterations=4,
        )
        _, ista_trace = ista_solve(problem, record_trace=True)
        params, thetas = tied_block_for_problem(problem)
        _, block_trace = sfeb_forward(params, observation, theta_override=thetas)
        assert len(block_trace) == len(ista_trace) == 4
        for za, zb in zip(ista_trace, block_trace):
            worst = max(worst, float(np.max(np.abs(za - zb))))
    assert worst <= 1e-10


def test_tied_mode_w_in_aliases_w_u():
    rng = np.random.default_rng(4)
    params = make_params(rng, tied=True, iterations=3)
    assert params.w_in_at(0) is params.w_u[0]
    assert params.w_in_at(2) is params.w_u[0]
    assert params.w_u_at(2) is params.w_u[0]
    assert params.w_d_at(1) is params.w_d[0]


def test_sparsity_never_decreases_with_intercept():
    rng = np.random.default_rng(5)
    base = make_params(rng, iterations=2)
    channel = rng.standard_normal((10, 10, 1))
    intercepts = np.linspace(-2.0, 4.0, 10)
    zero_counts = []
    for b in intercepts:
        params = SfebParams(
            w_in=base.w_in,
            w_u=base.w_u,
            w_d=base.w_d,
            schedule=ThresholdSchedule(w_raw=base.schedule.w_raw, b_theta=float(b)),
            iterations=base.iterations,
            tied=False,
        )
        code, _ = sfeb_forward(params, channel)
        zero_counts.append(int((code == 0).sum()))
    assert all(a <= b for a, b in zip(zero_counts, zero_counts[1:]))


def test_forward_channel_shape_mismatch():
    rng = np.random.default_rng(6)
    params = make_params(rng)
    with pytest.raises(ValueError):
        sfeb_forward(params, np.zeros((5, 5, 2)))


def test_trace_optional():
    rng = np.random.default_rng(7)
    params = make_params(rng)
    code, trace = sfeb_forward(params, rng.standard_normal((5, 5, 1)), collect_trace=False)
    assert trace is None
    assert code.shape == (5, 5, 3)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def test_backward_zero_upstream():
    rng = np.random.default_rng(8)
    params = make_params(rng)
    channel = rng.standard_normal((6, 6, 1))
    _, trace = sfeb_forward(params, channel)
    grads, input_grad = sfeb_backward(params, channel, np.zeros((6, 6, 3)), trace)
    np.testing.assert_array_equal(input_grad, np.zeros((6, 6, 1)))
    for k in range(2):
        np.testing.assert_array_equal(grads.w_in[k].weights, 0.0)
        np.testing.assert_array_equal(grads.w_u[k].weights, 0.0)
        np.testing.assert_array_equal(grads.w_d[k].weights, 0.0)
    assert grads.schedule.w_raw == 0.0
    assert grads.schedule.b_theta == 0.0


def test_backward_dead_zone_all_grads_zero():
    rng = np.random.default_rng(9)
    params = make_params(rng)
    # huge intercept puts every pre-activation inside the dead zone
    params = SfebParams(
        w_in=params.w_in,
        w_u=params.w_u,
        w_d=params.w_d,
        schedule=ThresholdSchedule(w_raw=0.0, b_theta=50.0),
        iterations=params.iterations,
        tied=False,
    )
    channel = rng.standard_normal((6, 6, 1))
    code, trace = sfeb_forward(params, channel)
    np.testing.assert_array_equal(code, 0.0)
    grads, input_grad = sfeb_backward(
        params, channel, rng.standard_normal((6, 6, 3)), trace
    )
    np.testing.assert_array_equal(input_grad, 0.0)
    for k in range(2):
        np.testing.assert_array_equal(grads.w_in[k].weights, 0.0)
    assert grads.schedule.b_theta == 0.0


def _fd_check_sfeb(params, channel, target, h=1e-5):
    """Max relative error of analytic grads of dot(code, target) vs central
    differences, checked on a sample of scalar parameters plus the input."""
    code, trace = sfeb_forward(params, channel)
    grads, input_grad = sfeb_backward(params, channel, target, trace)

    def loss_for(p, ch):
        c, _ = sfeb_forward(p, ch, collect_trace=False)
        return dot(c, target)

    def clone(thetas=None, banks=None):
        banks = banks or {}
        return SfebParams(
            w_in=banks.get("w_in", params.w_in),
            w_u=banks.get("w_u", params.w_u),
            w_d=banks.get("w_d", params.w_d),
            schedule=thetas or params.schedule,
            iterations=params.iterations,
            tied=params.tied,
        )

    worst = 0.0
    rng = np.random.default_rng(0)

    def rel(analytic, fd):
        return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-3)

    # bank weights
    for family in ("w_in", "w_u", "w_d"):
        bank_list = getattr(params, family)
        grad_list = getattr(grads, family)
        for k, bank in enumerate(bank_list):
            flat_indices = rng.choice(bank.weights.size, size=4, replace=False)
            for fi in flat_indices:
                idx = np.unravel_index(fi, bank.weights.shape)
                wp = [
                    KernelBank(b.weights.copy()) for b in bank_list
                ]
                wm = [
                    KernelBank(b.weights.copy()) for b in bank_list
                ]
                wp[k].weights[idx] += h
                wm[k].weights[idx] -= h
                lp = loss_for(clone(banks={family: wp}), channel)
                lm = loss_for(clone(banks={family: wm}), channel)
                fd = (lp - lm) / (2 * h)
                worst = max(worst, rel(grad_list[k].weights[idx], fd))

    # schedule scalars
    for attr, g in (("w_raw", grads.schedule.w_raw), ("b_theta", grads.schedule.b_theta)):
        sp = ThresholdSchedule(params.schedule.w_raw, params.schedule.b_theta)
        sm = ThresholdSchedule(params.schedule.w_raw, params.schedule.b_theta)
        setattr(sp, attr, getattr(sp, attr) + h)
        setattr(sm, attr, getattr(sm, attr) - h)
        fd = (loss_for(clone(thetas=sp), channel) - loss_for(clone(thetas=sm), channel)) / (
            2 * h
        )
        worst = max(worst, rel(g, fd))

    # input channel
    for fi in rng.choice(channel.size, size=5, replace=False):
        idx = np.unravel_index(fi, channel.shape)
        cp = channel.copy()
        cm = channel.copy()
        cp[idx] += h
        cm[idx] -= h
        fd = (loss_for(params, cp) - loss_for(params, cm)) / (2 * h)
        worst = max(worst, rel(input_grad[idx], fd))
    return worst


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(10)
    params = make_params(rng, k=3, ks=3, iterations=2)
    channel = rng.standard_normal((10, 10, 1))
    target = rng.standard_normal((10, 10, 3))
    assert _fd_check_sfeb(params, channel, target) < 1e-4


def test_backward_matches_finite_differences_tied():
    rng = np.random.default_rng(11)
    params = make_params(rng, k=2, ks=3, iterations=3, tied=True)
    channel = rng.standard_normal((8, 8, 1))
    target = rng.standard_normal((8, 8, 2))
    assert _fd_check_sfeb(params, channel, target) < 1e-4


def test_backward_trace_mismatch():
    rng = np.random.default_rng(12)
    params = make_params(rng)
    channel = rng.standard_normal((6, 6, 1))
    _, trace = sfeb_forward(params, channel)
    with pytest.raises(ValueError):
        sfeb_backward(params, channel, np.zeros((6, 6, 3)), trace[:1])
    with pytest.raises(ValueError):
        sfeb_backward(params, channel, np.zeros((6, 6, 3)), None)


# ---------------------------------------------------------------------------
# params validation
# ---------------------------------------------------------------------------


def test_params_validation():
    rng = np.random.default_rng(13)
    good = make_params(rng)
    with pytest.raises(ValueError):
        SfebParams(
            w_in=good.w_in,
            w_u=good.w_u,
            w_d=good.w_d,
            schedule=good.schedule,
            iterations=0,
            tied=False,
        )
    with pytest.raises(ValueError):
        # biased bank rejected
        biased = KernelBank(rng.standard_normal((3, 1, 3, 3)), bias=np.zeros(3))
        SfebParams(
            w_in=[biased, good.w_in[1]],
            w_u=good.w_u,
            w_d=good.w_d,
            schedule=good.schedule,
            iterations=2,
            tied=False,
        )
    with pytest.raises(ValueError):
        # kernel size mismatch across banks
        odd = KernelBank(rng.standard_normal((3, 1, 5, 5)))
        SfebParams(
            w_in=[odd, good.w_in[1]],
            w_u=good.w_u,
            w_d=good.w_d,
            schedule=good.schedule,
            iterations=2,
            tied=False,
        )
