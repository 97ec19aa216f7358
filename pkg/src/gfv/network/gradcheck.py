"""Finite-difference validation of the analytic backward pass.

Central differences in 64-bit precision over every trainable parameter of
a small architecture instance, compared against backward_batch. Runs the
same train-mode batchnorm math as training, but without touching the
running statistics, so the loss is a pure function of the parameters.

Two kinds of parameters are excluded from the comparison, for the same
reason the hinge singularities d in {0, margin} are excluded: at them the
finite difference does not measure the gradient.

* kink straddles: if a relu pre-activation changes sign between the base
  point and a perturbed evaluation, the secant crosses a point where the
  loss is not differentiable;
* noise-floor pairs: if both the analytic and the FD value are below the
  rounding noise of the difference quotient (a few hundred ulps of the
  loss divided by 2*epsilon), the quotient is rounding noise. This covers
  parameters whose true gradient is exactly zero by pair symmetry, e.g.
  the final fc bias, which shifts both embeddings identically.
"""

from __future__ import annotations

import numpy as np

from .config import ArchitectureConfig
from .loss import contrastive_batch, pair_distance
from .model import backward_batch, forward_batch, init_params

# Small instance used for the seeded random sweep: 16x16 input keeps a
# full every-parameter sweep tractable.
CHECK_ARCH = ArchitectureConfig(
    input_h=16, input_w=16, conv_channels=(2, 3, 3), fc_widths=(4, 4, 5)
)

NOISE_FLOOR_ULPS = 1024.0


def _relu_signature(arch, caches) -> list[np.ndarray]:
    signs = []
    for entry in caches:
        if entry[0] == "conv_block" and arch.conv_activation == "relu":
            signs.append(entry[5]["act"] > 0)
        elif entry[0] == "fc" and entry[3] is not None:
            signs.append(entry[3] > 0)
    return signs


def _pair_loss(params, x, c, margin, want_signature: bool = False):
    emb, caches = forward_batch(
        params, x, mode="train", with_cache=want_signature, update_running=False
    )
    loss, _, _ = contrastive_batch(emb[:1], emb[1:], np.array([c], dtype=np.float64), margin)
    if not want_signature:
        return loss
    return loss, _relu_signature(params.arch, caches)


def _same_signature(a, b) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(
    arch: ArchitectureConfig,
    xa: np.ndarray,
    xb: np.ndarray,
    c: int,
    margin: float = 2.0,
    epsilon: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error |g_analytic - g_fd| / max(1e-8, |g_a| + |g_fd|)."""
    params = init_params(arch, seed=seed, dtype=np.float64)
    x = np.stack([np.asarray(xa, dtype=np.float64), np.asarray(xb, dtype=np.float64)])
    emb, caches = forward_batch(params, x, mode="train", with_cache=True, update_running=False)
    base_loss, dv1, dv2 = contrastive_batch(
        emb[:1], emb[1:], np.array([c], dtype=np.float64), margin
    )
    base_signs = _relu_signature(arch, caches)
    grads = backward_batch(params, caches, np.concatenate([dv1, dv2]))
    noise_floor = (
        NOISE_FLOOR_ULPS * np.finfo(np.float64).eps * max(1.0, abs(base_loss))
    ) / (2.0 * epsilon)
    max_err = 0.0
    for key in params.trainable_keys():
        tensor = params.tensors[key]
        analytic = grads[key]
        flat = tensor.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lo_hi, signs_hi = _pair_loss(params, x, c, margin, want_signature=True)
            flat[i] = orig - epsilon
            lo_lo, signs_lo = _pair_loss(params, x, c, margin, want_signature=True)
            flat[i] = orig
            if not (_same_signature(base_signs, signs_hi) and _same_signature(base_signs, signs_lo)):
                continue
            fd = (lo_hi - lo_lo) / (2.0 * epsilon)
            if abs(aflat[i]) < noise_floor and abs(fd) < noise_floor:
                continue
            err = abs(aflat[i] - fd) / max(1e-8, abs(aflat[i]) + abs(fd))
            if err > max_err:
                max_err = err
    return max_err


def make_check_instance(point_seed: int, margin: float = 2.0):
    """Seeded random (xa, xb, c) on CHECK_ARCH, away from the d=0 / d=margin
    singularities of the hinge. Returns (arch, xa, xb, c, params_seed)."""
    for attempt in range(100):
        rng = np.random.default_rng([point_seed, 7, attempt])
        activation = "relu" if rng.integers(2) == 0 else "tanh"
        arch = ArchitectureConfig(
            input_h=CHECK_ARCH.input_h,
            input_w=CHECK_ARCH.input_w,
            conv_channels=CHECK_ARCH.conv_channels,
            fc_widths=CHECK_ARCH.fc_widths,
            conv_activation=activation,
        )
        xa = rng.uniform(0.0, 1.0, (1, arch.input_h, arch.input_w))
        xb = rng.uniform(0.0, 1.0, (1, arch.input_h, arch.input_w))
        c = int(rng.integers(2))
        params = init_params(arch, seed=point_seed, dtype=np.float64)
        emb, _ = forward_batch(
            params, np.stack([xa, xb]), mode="train", with_cache=False, update_running=False
        )
        d = pair_distance(emb[0], emb[1])
        if d > 0.05 and abs(d - margin) > 0.05:
            return arch, xa, xb, c, point_seed
    raise RuntimeError(f"could not find a non-singular instance for seed {point_seed}")


def gradient_check_sweep(
    n_points: int = 20, margin: float = 2.0, epsilon: float = 1e-5, base_seed: int = 0
) -> float:
    """Max relative error over `n_points` seeded random configurations."""
    worst = 0.0
    for k in range(n_points):
        arch, xa, xb, c, params_seed = make_check_instance(base_seed + k, margin)
        err = gradient_check(arch, xa, xb, c, margin, epsilon, seed=params_seed)
        worst = max(worst, err)
    return worst
