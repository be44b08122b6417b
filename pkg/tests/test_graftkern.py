import numpy as np
import pytest

from hsb import graftkern as gk
from oracles import oracle_graft_forward


def test_schedule_stage_sizes_1536():
    sched = gk.pyramid_schedule(1536, 1536)
    assert sched.branch_inputs == [(384, 384), (768, 768), (1536, 1536)]
    assert sched.stages[(1, 1)] == (96, 96)
    assert sched.stages[(2, 2)] == (96, 96)
    assert sched.stages[(3, 4)] == (48, 48)
    for i in (1, 2, 3):
        for j in (1, 2, 3, 4):
            expect = 1536 // 2 ** (4 - i + j)
            assert sched.stages[(i, j)] == (expect, expect)


@pytest.mark.parametrize("size", [1024, 1536])
def test_schedule_pairs_have_equal_sizes(size):
    sched = gk.pyramid_schedule(size, size)
    assert len(sched.graft_pairs) == 6
    for a, b in sched.graft_pairs:
        assert b == (a[0] + 1, a[1] + 1)
        assert sched.stages[a] == sched.stages[b]


def test_schedule_rejects_bad_sizes():
    with pytest.raises(ValueError):
        gk.pyramid_schedule(1000, 1024)


def test_window_partition_roundtrip():
    rng = np.random.default_rng(0)
    fmap = rng.random((5, 8, 12))
    windows = gk.window_partition(fmap, 4)
    assert windows.shape == (6, 16, 5)
    assert np.array_equal(gk.window_merge(windows, 8, 12), fmap)
    # row-major layout: first window is the top-left block
    assert np.array_equal(windows[0], fmap[:, :4, :4].reshape(5, 16).T)


def test_window_partition_rejects_non_divisible():
    with pytest.raises(ValueError):
        gk.window_partition(np.zeros((1, 9, 8)), 4)


def test_forward_invariants():
    inst = gk.make_test_instance()
    trace = gk.graft_forward(inst.f_r1, inst.f_r2, inst.f_s, inst.params,
                             inst.window_size)
    gk.check_invariants(trace)
    stack = trace.cam_stack
    assert stack.windows.shape == (2, 16, 16)
    assert stack.grid == (1, 2)


def test_forward_matches_straight_line_oracle():
    inst = gk.make_test_instance()
    trace = gk.graft_forward(inst.f_r1, inst.f_r2, inst.f_s, inst.params,
                             inst.window_size)
    ref = oracle_graft_forward(inst)
    c = trace._cache
    y = c["q"] @ c["k"].transpose(0, 2, 1)
    y_final = c["sm"] * c["y_re"]
    z = y_final @ c["v"]
    assert np.allclose(y, ref["y"], atol=1e-12, rtol=0)
    assert np.allclose(trace.cam, ref["cam"], atol=1e-12, rtol=0)
    assert np.allclose(y_final, ref["y_final"], atol=1e-12, rtol=0)
    assert np.allclose(z, ref["z"], atol=1e-12, rtol=0)
    assert np.allclose(trace.output, ref["output"], atol=1e-12, rtol=0)


def test_alpha_zero_equals_no_reweighting():
    inst = gk.make_test_instance(alpha=0.0)
    trace = gk.graft_forward(inst.f_r1, inst.f_r2, inst.f_s, inst.params,
                             inst.window_size)
    c = trace._cache
    # with a unit re-weighting matrix the attention is the plain softmax
    z_plain = c["sm"] @ c["v"]
    hwin = c["fr_win"] + z_plain
    out = gk.window_merge(hwin + (hwin @ inst.params.w_out
                                  + inst.params.b_out), *trace.map_size)
    assert np.array_equal(trace.output, out)


def test_alpha_validation():
    with pytest.raises(ValueError):
        gk.make_test_instance(alpha=1.5)


def test_zeroed_attention_collapses_to_compressed_input():
    inst = gk.make_test_instance()
    p = inst.params
    for name in ("w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_out", "b_out"):
        getattr(p, name)[...] = 0.0
    trace = gk.graft_forward(inst.f_r1, inst.f_r2, inst.f_s, p,
                             inst.window_size)
    fr1, _ = gk._compressor_fwd(inst.f_r1, p.comp_r1, True)
    fr2, _ = gk._compressor_fwd(inst.f_r2, p.comp_r2, True)
    assert np.array_equal(trace.output, fr1 + fr2)


def test_mismatched_inputs_rejected():
    inst = gk.make_test_instance()
    with pytest.raises(ValueError):
        gk.graft_forward(inst.f_r1, inst.f_r2, inst.f_s[:, :, :4],
                         inst.params, inst.window_size)
    with pytest.raises(ValueError):
        gk.graft_forward(inst.f_r1, None, inst.f_s, inst.params,
                         inst.window_size)


@pytest.mark.parametrize("step", [1e-3, 1e-4])
def test_gradients_match_finite_differences(step):
    report = gk.finite_diff_check(gk.make_test_instance(), step=step)
    assert report.passed, (report.max_rel_error, report.worst_leaf)


def test_gradients_eval_mode():
    inst = gk.make_test_instance(training=False)
    report = gk.finite_diff_check(inst, step=1e-3)
    assert report.passed, (report.max_rel_error, report.worst_leaf)


@pytest.mark.parametrize("alpha,seed,step", [
    (0.0, 14, 1e-3), (0.0, 14, 1e-4),
    (1.0, 51, 1e-3), (1.0, 51, 1e-4),
    (3.0, 26, 1e-4),
])
def test_gradients_other_alphas(alpha, seed, step):
    inst = gk.make_test_instance(alpha=alpha, seed=seed)
    report = gk.finite_diff_check(inst, step=step)
    assert report.passed, (report.max_rel_error, report.worst_leaf)


def test_gradients_single_coarse_input():
    inst = gk.make_test_instance(with_r2=False, seed=13)
    report = gk.finite_diff_check(inst, step=1e-3)
    assert report.passed, (report.max_rel_error, report.worst_leaf)
    grads = gk.graft_backward(
        gk.graft_forward(inst.f_r1, None, inst.f_s, inst.params,
                         inst.window_size),
        inst.grad_output, inst.grad_cam)
    assert grads["f_r2"] is None


def test_param_leaf_keys_cover_gradients():
    inst = gk.make_test_instance()
    trace = gk.graft_forward(inst.f_r1, inst.f_r2, inst.f_s, inst.params,
                             inst.window_size)
    grads = gk.graft_backward(trace, inst.grad_output, inst.grad_cam)
    for name, arr in gk.param_leaves(inst.params):
        assert grads[name].shape == arr.shape, name
    assert "cam_bn.gamma" in grads
    # running statistics are buffers, never parameters
    assert not any("running" in name for name, _ in
                   gk.param_leaves(inst.params))
