"""Fixed semi-coupled filter bank, per-channel spectral solves, and the
linear reconstruction head.

The bank is the learning-free counterpart of a learned two-stream
feature extractor: shared pairs apply one stencil to both modalities,
private pairs apply a depth-side and a guide-side stencil that differ.
Channel c of the depth and guide feature stacks always comes from pair
c, and the per-channel solve couples them through the same screened
equation used in the image domain, with its own regularization weight
per channel.

Reconstruction is a ridge-regression linear head over the solved
channels plus a bias; fitting minimizes the pixelwise sum of squares.
The channel weights lambda_c are fit by derivative-free coordinate
search in log space (grid bracketing plus golden-section refinement),
accepting a move only when the training RMSE strictly decreases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .image_core import as_image, as_stack, elementwise_combine
from .filters import correlate_reflect
from .spectral import (
    FIVE_POINT,
    LaplacianKernel,
    SpectralSymbol,
    build_rhs,
    derived_symbol,
    laplacian_apply,
    paper_symbol,
    solve_screened,
)

__all__ = [
    "FilterPair",
    "FilterBank",
    "default_bank",
    "gaussian_stencil",
    "log_stencil",
    "extract",
    "channel_solve",
    "ReconstructionHead",
    "fit_head",
    "apply_head",
    "fit_lambda",
    "save_params",
    "load_params",
    "LOG_LAMBDA_BOUNDS",
    "INIT_LOG_LAMBDA",
]

# Search interval for log(lambda_c) and the fixed starting point e^0.1.
LOG_LAMBDA_BOUNDS = (-4.0, 4.0)
INIT_LOG_LAMBDA = 0.1


def _stencil(values) -> np.ndarray:
    st = np.asarray(values, dtype=np.float64)
    if st.ndim != 2 or st.shape[0] % 2 == 0 or st.shape[1] % 2 == 0:
        raise ValueError(f"stencil must be 2-D with odd dimensions, got {st.shape}")
    if not np.all(np.isfinite(st)):
        raise ValueError("stencil weights must be finite")
    st = st.copy()
    st.setflags(write=False)
    return st


@dataclass(frozen=True)
class FilterPair:
    """One depth-side and one guide-side stencil; shared pairs use the same."""

    depth_filter: np.ndarray
    guide_filter: np.ndarray
    shared: bool

    def __post_init__(self):
        d = _stencil(self.depth_filter)
        g = _stencil(self.guide_filter)
        if self.shared and not (d.shape == g.shape and np.array_equal(d, g)):
            raise ValueError("shared pair must carry identical stencils")
        object.__setattr__(self, "depth_filter", d)
        object.__setattr__(self, "guide_filter", g)


@dataclass(frozen=True)
class FilterBank:
    """Ordered filter pairs; channel c of every stack comes from pair c."""

    pairs: tuple[FilterPair, ...]
    name: str = "custom"

    def __post_init__(self):
        pairs = tuple(self.pairs)
        if len(pairs) < 1:
            raise ValueError("bank must hold at least one pair")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)


def gaussian_stencil(sigma: float, size: int) -> np.ndarray:
    """Sampled 2-D Gaussian, normalized to sum to 1."""
    if size % 2 == 0 or size < 1:
        raise ValueError(f"size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = np.arange(size) - size // 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def log_stencil(sigma: float, size: int) -> np.ndarray:
    """Sampled Laplacian-of-Gaussian, mean-subtracted to sum exactly to 0."""
    if size % 2 == 0 or size < 1:
        raise ValueError(f"size must be odd and >= 1, got {size}")
    r = np.arange(size) - size // 2
    r2 = r[:, None] ** 2 + r[None, :] ** 2
    s2 = sigma * sigma
    log = (r2 - 2.0 * s2) / (s2 * s2) * np.exp(-r2 / (2.0 * s2))
    return log - log.mean()


def default_bank() -> FilterBank:
    """The stock 8-pair bank: 4 shared stencils, 4 private combinations.

    Smoothing stencils sum to 1, derivative stencils to 0.
    """
    identity = np.array([[1.0]])
    g1 = gaussian_stencil(1.0, 5)
    g2 = gaussian_stencil(2.0, 7)
    lap5 = np.asarray(FIVE_POINT.weights)
    ddx = np.array([[-0.5, 0.0, 0.5]])
    ddy = ddx.T
    pairs = (
        FilterPair(identity, identity, shared=True),
        FilterPair(g1, g1, shared=True),
        FilterPair(g2, g2, shared=True),
        FilterPair(lap5, lap5, shared=True),
        FilterPair(g1, ddx, shared=False),
        FilterPair(g1, ddy, shared=False),
        FilterPair(identity, log_stencil(1.0, 7), shared=False),
        FilterPair(g2, identity, shared=False),
    )
    return FilterBank(pairs, name="default8")


def extract(img, bank: FilterBank, side: str) -> np.ndarray:
    """Run the side-appropriate stencil of every pair over the image.

    Returns a (C, M, N) stack, reflection-padded like every filter in
    the pipeline.
    """
    img = as_image(img)
    if side not in ("depth", "guide"):
        raise ValueError(f"side must be 'depth' or 'guide', got {side!r}")
    channels = [
        correlate_reflect(img, p.depth_filter if side == "depth" else p.guide_filter)
        for p in bank.pairs
    ]
    return np.stack(channels)


def _check_lambdas(lambdas, channels: int) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=np.float64).ravel()
    if lam.size != channels:
        raise ValueError(f"expected {channels} channel weights, got {lam.size}")
    if not np.all(np.isfinite(lam)) or np.any(lam < 0.0):
        raise ValueError("channel weights must be finite and >= 0")
    return lam


def channel_solve(phi_l, phi_r, w, lambdas, symbol: SpectralSymbol,
                  kernel: LaplacianKernel = FIVE_POINT) -> np.ndarray:
    """Per-channel screened solve coupling depth and guide features.

    For each channel c: E_c = lam_c * lap(lap(phi_r_c) * w_c) + phi_l_c,
    then H_c solves (Id + lam_c * lap^2) H_c = E_c. Channels are fully
    independent.
    """
    phi_l = as_stack(phi_l)
    phi_r = as_stack(phi_r)
    w = as_stack(w)
    if not (phi_l.shape == phi_r.shape == w.shape):
        raise ValueError(
            f"stack shape mismatch: {phi_l.shape} vs {phi_r.shape} vs {w.shape}"
        )
    lam = _check_lambdas(lambdas, phi_l.shape[0])
    out = np.empty_like(phi_l)
    for c in range(phi_l.shape[0]):
        target = elementwise_combine(laplacian_apply(phi_r[c], kernel), w[c], "mul")
        e = build_rhs(phi_l[c], target, lam[c], kernel)
        out[c] = solve_screened(e, lam[c], symbol)
    return out


@dataclass(frozen=True)
class ReconstructionHead:
    """Linear map over solved channels: sum_c w_c * H_c + bias."""

    weights: np.ndarray
    bias: float
    gamma: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()  # copy: frozen below
        if w.size < 1 or not np.all(np.isfinite(w)):
            raise ValueError("head weights must be a nonempty finite vector")
        if not np.isfinite(self.bias):
            raise ValueError("head bias must be finite")
        if not (np.isfinite(self.gamma) and self.gamma >= 0.0):
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def channels(self) -> int:
        return self.weights.size


def apply_head(features, head: ReconstructionHead) -> np.ndarray:
    """Pixelwise channel combination sum_c w_c * features[c] + bias."""
    features = as_stack(features)
    if features.shape[0] != head.channels:
        raise ValueError(
            f"head expects {head.channels} channels, got {features.shape[0]}"
        )
    return np.tensordot(head.weights, features, axes=(0, 0)) + head.bias


def _normal_equations(features_list, targets_list):
    """Accumulate X^T X and X^T y over all pixels of all pairs.

    The design matrix row for a pixel is its C channel values plus a
    trailing 1 for the bias.
    """
    if len(features_list) == 0 or len(features_list) != len(targets_list):
        raise ValueError("need at least one features/target pair, one target per stack")
    channels = None
    dim = None
    G = b = None
    count = 0
    for feats, target in zip(features_list, targets_list):
        feats = as_stack(feats)
        target = as_image(target)
        if feats.shape[1:] != target.shape:
            raise ValueError(
                f"features {feats.shape[1:]} do not match target {target.shape}"
            )
        if channels is None:
            channels = feats.shape[0]
            dim = channels + 1
            G = np.zeros((dim, dim))
            b = np.zeros(dim)
        elif feats.shape[0] != channels:
            raise ValueError("all feature stacks must share one channel count")
        n = target.size
        X = np.empty((dim, n))
        X[:channels] = feats.reshape(channels, n)
        X[channels] = 1.0
        G += X @ X.T
        b += X @ target.ravel()
        count += n
    return G, b, count


def fit_head(features_list, targets_list, gamma: float) -> ReconstructionHead:
    """Closed-form ridge fit of the reconstruction head.

    Minimizes sum ||[features | 1] w - target||^2 + gamma * ||w||^2 over
    all pixels of all pairs; the bias is excluded from the penalty so
    constant depth offsets are not shrunk.
    """
    if not (np.isfinite(gamma) and gamma >= 0.0):
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    G, b, _ = _normal_equations(features_list, targets_list)
    A = G.copy()
    A[np.diag_indices(A.shape[0] - 1)] += gamma
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            f"singular normal matrix ({exc}); retry with gamma > 0"
        ) from None
    return ReconstructionHead(w[:-1], float(w[-1]), gamma)


class _LambdaObjective:
    """Training RMSE of the full pipeline as a function of the channel weights.

    Caches the lambda-independent pieces (phi_l, lap of the masked guide
    Laplacian, per-size symbols) and the solved stacks for the current
    accepted weights, so a coordinate search only re-solves the channel
    it is moving.
    """

    def __init__(self, train_pairs, head_gamma, kernel, symbol_mode):
        if len(train_pairs) == 0:
            raise ValueError("empty training set")
        self.gamma = head_gamma
        self.kernel = kernel
        self.pairs = []
        self.targets = []
        self.channels = None
        symbols: dict[tuple[int, int], SpectralSymbol] = {}
        for phi_l, phi_r, w, target in train_pairs:
            phi_l = as_stack(phi_l)
            phi_r = as_stack(phi_r)
            w = as_stack(w)
            target = as_image(target)
            if not (phi_l.shape == phi_r.shape == w.shape):
                raise ValueError("stack shape mismatch in training pair")
            if phi_l.shape[1:] != target.shape:
                raise ValueError("target does not match feature dimensions")
            if self.channels is None:
                self.channels = phi_l.shape[0]
            elif phi_l.shape[0] != self.channels:
                raise ValueError("training pairs must share one channel count")
            shape = target.shape
            if shape not in symbols:
                if symbol_mode == "paper":
                    symbols[shape] = paper_symbol(*shape)
                else:
                    symbols[shape] = derived_symbol(kernel, *shape)
            lap_t = np.stack([
                laplacian_apply(laplacian_apply(phi_r[c], kernel) * w[c], kernel)
                for c in range(self.channels)
            ])
            self.pairs.append((phi_l, lap_t, symbols[shape]))
            self.targets.append(target)
        self.n_pixels = sum(t.size for t in self.targets)

    def solve_channel(self, pair_idx: int, c: int, lam: float) -> np.ndarray:
        phi_l, lap_t, symbol = self.pairs[pair_idx]
        e = lam * lap_t[c] + phi_l[c]
        return solve_screened(e, lam, symbol)

    def solve_all(self, lambdas) -> list[np.ndarray]:
        return [
            np.stack([self.solve_channel(i, c, lambdas[c]) for c in range(self.channels)])
            for i in range(len(self.pairs))
        ]

    def rmse(self, solved) -> float:
        head = fit_head(solved, self.targets, self.gamma)
        sse = 0.0
        for feats, target in zip(solved, self.targets):
            sse += float(np.sum((apply_head(feats, head) - target) ** 2))
        return math.sqrt(sse / self.n_pixels)


def _golden_min(f, lo: float, hi: float, tol: float = 0.02):
    """Golden-section minimum of f on [lo, hi]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def fit_lambda(train_pairs, head_gamma: float = 1e-6, grid_points: int = 9,
               sweeps: int = 2, kernel: LaplacianKernel = FIVE_POINT,
               symbol_mode: str = "derived"):
    """Coordinate search for the per-channel regularization weights.

    ``train_pairs`` is a sequence of (phi_l, phi_r, w, target_hr) tuples.
    Each pass visits every channel once and searches log(lambda_c) over
    LOG_LAMBDA_BOUNDS: a ``grid_points``-sample scan brackets the
    minimum, golden-section refines inside the bracket, and the move is
    accepted only if the training RMSE of the full pipeline (solve, head
    refit, reconstruction) strictly decreases. Starts from
    lambda_c = e^0.1 for every channel; stops after ``sweeps`` passes or
    one pass with no accepted move.

    Returns (lambdas, rmse_trace) with one trace entry for the start and
    one per accepted move.
    """
    if grid_points < 3:
        raise ValueError(f"grid_points must be >= 3, got {grid_points}")
    if sweeps < 1:
        raise ValueError(f"sweeps must be >= 1, got {sweeps}")
    obj = _LambdaObjective(train_pairs, head_gamma, kernel, symbol_mode)
    C = obj.channels
    lambdas = np.full(C, math.exp(INIT_LOG_LAMBDA))
    solved = obj.solve_all(lambdas)
    best = obj.rmse(solved)
    trace = [best]
    lo, hi = LOG_LAMBDA_BOUNDS
    grid = np.linspace(lo, hi, grid_points)

    for _ in range(sweeps):
        accepted = False
        for c in range(C):

            def eval_log(v: float) -> float:
                lam = math.exp(v)
                candidate = [s.copy() for s in solved]
                for i in range(len(candidate)):
                    candidate[i][c] = obj.solve_channel(i, c, lam)
                return obj.rmse(candidate)

            grid_vals = [eval_log(v) for v in grid]
            k = int(np.argmin(grid_vals))
            bracket = (grid[max(0, k - 1)], grid[min(grid_points - 1, k + 1)])
            v_star, f_star = _golden_min(eval_log, *bracket)
            if grid_vals[k] < f_star:
                v_star, f_star = float(grid[k]), grid_vals[k]
            if f_star < best:
                lambdas[c] = math.exp(v_star)
                for i in range(len(solved)):
                    solved[i][c] = obj.solve_channel(i, c, lambdas[c])
                best = f_star
                trace.append(best)
                accepted = True
        if not accepted:
            break
    return lambdas, trace


def save_params(path, params: dict) -> None:
    """Write fitted parameters as flat key-value JSON text.

    Keys for the feature-domain pipeline: method, bank, lambdas,
    head_weights, head_bias, head_gamma, config_hash. The image-domain
    pipeline stores method, lambda, config_hash.
    """
    clean = {}
    for key, value in params.items():
        if isinstance(value, np.ndarray):
            value = value.tolist()
        elif isinstance(value, (np.floating, np.integer)):
            value = value.item()
        clean[key] = value
    with open(path, "w", encoding="ascii") as fh:
        json.dump(clean, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        params = json.load(fh)
    if "method" not in params:
        raise ValueError(f"parameter file {path} lacks a 'method' key")
    return params
