import numpy as np
import pytest

from gdsr.feature_bank import (
    FilterBank,
    FilterPair,
    ReconstructionHead,
    apply_head,
    channel_solve,
    default_bank,
    extract,
    fit_head,
    fit_lambda,
    gaussian_stencil,
    load_params,
    log_stencil,
    save_params,
)
from gdsr.guidance import EdgeWeightConfig, edge_weight
from gdsr.image_core import elementwise_combine
from gdsr.spectral import FIVE_POINT, build_rhs, derived_symbol, laplacian_apply, solve_screened

from oracles import brute_correlate_reflect
from scenes import make_scene


IDENTITY = np.array([[1.0]])


def identity_bank():
    return FilterBank((FilterPair(IDENTITY, IDENTITY, shared=True),), name="id1")


def test_pair_and_bank_validation():
    with pytest.raises(ValueError, match="identical"):
        FilterPair(IDENTITY, np.array([[0.5]]), shared=True)
    with pytest.raises(ValueError, match="odd"):
        FilterPair(np.ones((2, 2)) / 4, np.ones((2, 2)) / 4, shared=False)
    with pytest.raises(ValueError, match="at least one"):
        FilterBank(())


def test_default_bank_structure():
    bank = default_bank()
    assert len(bank) == 8
    assert bank.name == "default8"
    assert sum(p.shared for p in bank.pairs) == 4
    for p in bank.pairs:
        for st in (p.depth_filter, p.guide_filter):
            total = st.sum()
            # smoothing stencils sum to 1, derivative stencils to 0
            assert abs(total - 1.0) < 1e-12 or abs(total) < 1e-12


def test_stencil_builders():
    g = gaussian_stencil(1.0, 5)
    assert g.shape == (5, 5) and abs(g.sum() - 1.0) < 1e-15
    assert g[2, 2] == g.max()
    lg = log_stencil(1.0, 7)
    assert abs(lg.sum()) < 1e-15


def test_extract_shared_sides_agree():
    rng = np.random.default_rng(60)
    img = rng.random((12, 10))
    shared_only = FilterBank(
        tuple(p for p in default_bank().pairs if p.shared), name="shared")
    assert np.array_equal(extract(img, shared_only, "depth"),
                          extract(img, shared_only, "guide"))


def test_extract_identity_and_oracle():
    rng = np.random.default_rng(61)
    img = rng.random((9, 11))
    bank = default_bank()
    feats = extract(img, bank, "depth")
    assert feats.shape == (8, 9, 11)
    assert np.array_equal(feats[0], img)  # identity pair
    want = brute_correlate_reflect(img, gaussian_stencil(1.0, 5))
    assert np.abs(feats[1] - want).max() < 1e-12
    with pytest.raises(ValueError, match="side"):
        extract(img, bank, "rgb")


def test_semi_coupled_consistency_probe():
    rng = np.random.default_rng(62)
    probe = rng.random((16, 16))
    bank = default_bank()
    depth_side = extract(probe, bank, "depth")
    guide_side = extract(probe, bank, "guide")
    for c, pair in enumerate(bank.pairs):
        if pair.shared:
            assert np.array_equal(depth_side[c], guide_side[c])
        else:
            assert not np.allclose(depth_side[c], guide_side[c])


def test_gaussian_pair_preserves_constants():
    feats = extract(np.full((8, 8), 0.3), default_bank(), "depth")
    assert np.abs(feats[1] - 0.3).max() < 1e-12   # gaussian
    assert np.abs(feats[3]).max() < 1e-12         # laplacian annihilates constants


def test_channel_solve_degenerate_cases():
    rng = np.random.default_rng(63)
    C, M, N = 3, 10, 8
    phi_l = rng.random((C, M, N))
    phi_r = rng.random((C, M, N))
    w = rng.random((C, M, N))
    sym = derived_symbol(FIVE_POINT, M, N)
    out = channel_solve(phi_l, phi_r, w, np.zeros(C), sym)
    assert np.array_equal(out, phi_l)
    lams = np.array([0.5, 1.0, 2.0])
    out = channel_solve(phi_l, phi_r, np.zeros_like(w), lams, sym)
    for c in range(C):
        assert np.array_equal(out[c], solve_screened(phi_l[c], lams[c], sym))
    with pytest.raises(ValueError, match="mismatch"):
        channel_solve(phi_l, phi_r[:2], w, lams, sym)
    with pytest.raises(ValueError, match="channel weights"):
        channel_solve(phi_l, phi_r, w, np.ones(2), sym)


def test_single_channel_reduction_is_bitwise():
    rng = np.random.default_rng(64)
    M, N = 14, 12
    depth_up = rng.random((M, N))
    guide = rng.random((M, N))
    lam = 1.7
    cfg = EdgeWeightConfig("hard", 0.8)
    sym = derived_symbol(FIVE_POINT, M, N)

    # image-domain path
    wmask = edge_weight(guide, cfg)
    target = elementwise_combine(laplacian_apply(guide), wmask, "mul")
    h_image = solve_screened(build_rhs(depth_up, target, lam), lam, sym)

    # C=1 feature path with identity filters and passthrough head
    bank = identity_bank()
    phi_l = extract(depth_up, bank, "depth")
    phi_r = extract(guide, bank, "guide")
    w = edge_weight(phi_r[0], cfg)[None]
    phi_h = channel_solve(phi_l, phi_r, w, np.array([lam]), sym)
    h_feature = apply_head(phi_h, ReconstructionHead(np.array([1.0]), 0.0))
    assert np.abs(h_feature - h_image).max() < 1e-12


def test_apply_head_contracts():
    rng = np.random.default_rng(65)
    feats = rng.random((4, 6, 5))
    head = ReconstructionHead(np.array([1.0, 0.0, 0.0, 0.0]), 0.0)
    assert np.array_equal(apply_head(feats, head), feats[0])
    head_b = ReconstructionHead(np.zeros(4), 2.5)
    assert np.array_equal(apply_head(feats, head_b), np.full((6, 5), 2.5))
    # scalar-loop reference
    w = rng.standard_normal(4)
    head_r = ReconstructionHead(w, -0.3)
    got = apply_head(feats, head_r)
    want = np.zeros((6, 5))
    for c in range(4):
        want += w[c] * feats[c]
    want -= 0.3
    assert np.abs(got - want).max() < 1e-12
    with pytest.raises(ValueError, match="channels"):
        apply_head(feats[:2], head)


def test_fit_head_recovers_exact_channel():
    rng = np.random.default_rng(66)
    feats = rng.random((3, 8, 8))
    head = fit_head([feats], [feats[0]], gamma=0.0)
    want = np.array([1.0, 0.0, 0.0])
    assert np.abs(head.weights - want).max() < 1e-6
    assert abs(head.bias) < 1e-6


def test_fit_head_two_unknowns_by_hand():
    rng = np.random.default_rng(67)
    target = rng.random((5, 5))
    feats = (target + 5.0)[None]
    head = fit_head([feats], [target], gamma=0.0)
    assert abs(head.weights[0] - 1.0) < 1e-9
    assert abs(head.bias + 5.0) < 1e-9


def test_fit_head_large_gamma_shrinks_weights():
    rng = np.random.default_rng(68)
    feats = rng.random((2, 10, 10))
    target = rng.random((10, 10))
    head = fit_head([feats], [target], gamma=1e12)
    assert np.abs(head.weights).max() < 1e-6
    # unpenalized bias absorbs the mean
    assert abs(head.bias - target.mean()) < 1e-3


def test_fit_head_singular_reported():
    feats = np.stack([np.ones((4, 4)), np.ones((4, 4))])  # duplicated channel
    with pytest.raises(ValueError, match="singular"):
        fit_head([feats], [np.ones((4, 4))], gamma=0.0)
    fit_head([feats], [np.ones((4, 4))], gamma=1e-6)  # the documented retry


def test_fit_head_is_ridge_optimum():
    rng = np.random.default_rng(69)
    feats = [rng.random((3, 7, 7)) for _ in range(2)]
    targets = [rng.random((7, 7)) for _ in range(2)]
    gamma = 0.5
    head = fit_head(feats, targets, gamma)

    def objective(w, b):
        sse = 0.0
        for f, t in zip(feats, targets):
            pred = np.tensordot(w, f, axes=(0, 0)) + b
            sse += float(np.sum((pred - t) ** 2))
        return sse + gamma * float(np.sum(w * w))

    base = objective(head.weights, head.bias)
    for k in range(3):
        for eps in (1e-3, -1e-3):
            w = head.weights.copy()
            w[k] += eps
            assert base <= objective(w, head.bias) + 1e-9
    for eps in (1e-3, -1e-3):
        assert base <= objective(head.weights, head.bias + eps) + 1e-9


def _tiny_training_pair(seed, M=32, N=32):
    rng = np.random.default_rng(seed)
    gt, rgb = make_scene(rng, M, N, n_shapes=3)
    from gdsr.guidance import luminance, multichannel_edge_weight
    from gdsr.resample import degrade

    _, up = degrade(gt, 4)
    bank = identity_bank()
    phi_l = extract(up.data, bank, "depth")
    phi_r = extract(luminance(rgb), bank, "guide")
    w = multichannel_edge_weight(phi_r, EdgeWeightConfig("hard", 0.9))
    return phi_l, phi_r, w, gt.data


def test_fit_lambda_never_regresses_and_trace_decreases():
    pair = _tiny_training_pair(70)
    lambdas, trace = fit_lambda([pair], head_gamma=1e-8, grid_points=5, sweeps=2)
    assert lambdas.shape == (1,)
    assert np.all(lambdas > 0.0)
    assert trace[-1] <= trace[0]
    # every accepted move strictly improves
    assert all(b < a for a, b in zip(trace, trace[1:]))


def test_fit_lambda_identity_task_no_regression():
    # HR target equals the upsampled input: nothing to gain, nothing lost
    phi_l, phi_r, w, _ = _tiny_training_pair(71)
    pair = (phi_l, phi_r, w, phi_l[0])
    _, trace = fit_lambda([pair], head_gamma=1e-8, grid_points=5, sweeps=1)
    assert trace[-1] <= trace[0] + 1e-15


def test_fit_lambda_input_validation():
    with pytest.raises(ValueError, match="empty"):
        fit_lambda([], 1e-6)
    with pytest.raises(ValueError, match="grid_points"):
        fit_lambda([_tiny_training_pair(72)], 1e-6, grid_points=2)


def test_params_roundtrip(tmp_path):
    path = tmp_path / "params.json"
    save_params(path, {
        "method": "feature",
        "bank": "default8",
        "lambdas": np.array([1.0, 2.0]),
        "head_weights": np.array([0.5, 0.5]),
        "head_bias": 0.125,
        "head_gamma": 1e-6,
        "config_hash": "abc123",
    })
    params = load_params(path)
    assert params["method"] == "feature"
    assert params["lambdas"] == [1.0, 2.0]
    assert params["head_bias"] == 0.125
    with open(tmp_path / "bad.json", "w") as fh:
        fh.write("{}")
    with pytest.raises(ValueError, match="method"):
        load_params(tmp_path / "bad.json")
