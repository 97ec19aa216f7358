"""Twin-branch convolutional encoder: parameters, forward and backward passes.

One parameter set serves both branches (weight sharing); a "pair" forward
is a single batched pass over the concatenation of both inputs, so
batchnorm statistics in train mode are shared across branches. All layer
math is plain numpy; the backward pass is validated against central finite
differences (see gradcheck).

Activations are kept in channels-last (N, H, W, C) layout internally so
every elementwise op and reduction runs on contiguous memory; parameter
tensors keep the conventional (out_c, in_c, k, k) / (out, in) shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatchError
from .config import ArchitectureConfig

RUNNING_STAT_SUFFIXES = (".running_mean", ".running_var")


@dataclass
class SiameseParams:
    """Named parameter tensors plus the architecture they belong to."""

    arch: ArchitectureConfig
    tensors: dict[str, np.ndarray]
    seed: int

    @property
    def fingerprint(self) -> str:
        return self.arch.fingerprint()

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["conv1.w"].dtype

    def trainable_keys(self) -> list[str]:
        return [k for k in self.tensors if not k.endswith(RUNNING_STAT_SUFFIXES)]

    def copy(self) -> "SiameseParams":
        return SiameseParams(
            arch=self.arch,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            seed=self.seed,
        )

    def allclose(self, other: "SiameseParams") -> bool:
        return self.tensors.keys() == other.tensors.keys() and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors
        )


def init_params(
    arch: ArchitectureConfig, seed: int, dtype=np.float32
) -> SiameseParams:
    """Fan-in-scaled uniform init, drawn in fixed layer order from one stream.

    Batchnorm starts at scale 1, shift 0, running mean 0, running var 1.
    """
    rng = np.random.default_rng(seed)
    k = arch.kernel_size
    tensors: dict[str, np.ndarray] = {}
    in_c = 1
    for i, out_c in enumerate(arch.conv_channels, start=1):
        bound = 1.0 / np.sqrt(in_c * k * k)
        tensors[f"conv{i}.w"] = rng.uniform(-bound, bound, (out_c, in_c, k, k)).astype(dtype)
        tensors[f"conv{i}.b"] = rng.uniform(-bound, bound, out_c).astype(dtype)
        tensors[f"bn{i}.gamma"] = np.ones(out_c, dtype=dtype)
        tensors[f"bn{i}.beta"] = np.zeros(out_c, dtype=dtype)
        tensors[f"bn{i}.running_mean"] = np.zeros(out_c, dtype=dtype)
        tensors[f"bn{i}.running_var"] = np.ones(out_c, dtype=dtype)
        in_c = out_c
    width = arch.flatten_width
    for j, out_w in enumerate(arch.fc_widths, start=1):
        bound = 1.0 / np.sqrt(width)
        tensors[f"fc{j}.w"] = rng.uniform(-bound, bound, (out_w, width)).astype(dtype)
        tensors[f"fc{j}.b"] = rng.uniform(-bound, bound, out_w).astype(dtype)
        width = out_w
    return SiameseParams(arch=arch, tensors=tensors, seed=seed)


# -- layer primitives (channels-last) -----------------------------------------

def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """(N,H,W,C) -> (N*H*W, k*k*C) patch matrix for stride-1 same convolution."""
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    s = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, h, w, k, k, c),
        strides=(s[0], s[1], s[2], s[1], s[2], s[3]),
        writeable=False,
    )
    return view.reshape(n * h * w, k * k * c)


def _col2im(dcols: np.ndarray, x_shape: tuple, k: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back to image layout."""
    n, h, w, c = x_shape
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=dcols.dtype)
    d = dcols.reshape(n, h, w, k, k, c)
    for di in range(k):
        for dj in range(k):
            dxp[:, di : di + h, dj : dj + w, :] += d[:, :, :, di, dj, :]
    return dxp[:, pad : pad + h, pad : pad + w, :]


def _conv_wmat(w: np.ndarray) -> np.ndarray:
    """(OC,IC,k,k) kernel as a (k*k*IC, OC) matrix matching _im2col layout."""
    oc = w.shape[0]
    return np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(-1, oc))


def _conv_forward(x, w, b, k, pad):
    n, h, wd, _ = x.shape
    cols = _im2col(x, k, pad)
    out = cols @ _conv_wmat(w)
    out += b
    return out.reshape(n, h, wd, w.shape[0]), cols


def _conv_backward(dout, cols, x_shape, w, k, pad):
    n, h, wd, _ = x_shape
    oc = w.shape[0]
    dmat = dout.reshape(n * h * wd, oc)
    dwmat = cols.T @ dmat
    dw = dwmat.reshape(k, k, w.shape[1], oc).transpose(3, 2, 0, 1)
    db = dmat.sum(axis=0)
    dcols = dmat @ _conv_wmat(w).T
    dx = _col2im(dcols, x_shape, k, pad)
    return dx, np.ascontiguousarray(dw), db


def _bn_forward(x, gamma, beta, running_mean, running_var, eps, momentum,
                train: bool, update_running: bool):
    if train:
        mu = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        if update_running:
            m = x.shape[0] * x.shape[1] * x.shape[2]
            unbiased = var * (m / (m - 1)) if m > 1 else var
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    else:
        mu = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    y = gamma * xhat + beta
    return y, (xhat, inv_std)


def _bn_backward(dout, cache, gamma):
    # Train-mode backward: batch statistics are functions of x.
    xhat, inv_std = cache
    m = dout.shape[0] * dout.shape[1] * dout.shape[2]
    dbeta = dout.sum(axis=(0, 1, 2))
    dgamma = (dout * xhat).sum(axis=(0, 1, 2))
    dxhat = dout * gamma
    dx = (
        dxhat
        - dxhat.mean(axis=(0, 1, 2))
        - xhat * ((dxhat * xhat).sum(axis=(0, 1, 2)) / m)
    ) * inv_std
    return dx, dgamma, dbeta


def _act_forward(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0), x
    y = np.tanh(x)
    return y, y


def _act_backward(dout, cache, kind):
    if kind == "relu":
        return dout * (cache > 0)
    return dout * (1.0 - cache * cache)


# -- full network -----------------------------------------------------------

def forward_batch(
    params: SiameseParams,
    x: np.ndarray,
    mode: str = "eval",
    with_cache: bool = False,
    update_running: bool | None = None,
):
    """Run a batch (N,1,H,W) through the shared encoder.

    Returns (embeddings (N,L), caches). `mode="train"` normalizes with
    batch statistics and, unless `update_running=False`, updates the
    running estimates in place; `mode="eval"` is pure.
    """
    arch = params.arch
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    train = mode == "train"
    if update_running is None:
        update_running = train
    x = np.asarray(x, dtype=params.dtype)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != arch.input_shape:
        raise ShapeMismatchError(
            f"input shape {x.shape[1:]} does not match configured {arch.input_shape}"
        )
    x = np.ascontiguousarray(x.transpose(0, 2, 3, 1))  # channels-last
    t = params.tensors
    k, pad = arch.kernel_size, arch.padding
    caches = []
    for i in range(1, len(arch.conv_channels) + 1):
        x_shape = x.shape
        y, cols = _conv_forward(x, t[f"conv{i}.w"], t[f"conv{i}.b"], k, pad)
        stages = ("bn", "act") if arch.bn_before_activation else ("act", "bn")
        stage_caches = {}
        for stage in stages:
            if stage == "act":
                y, c_act = _act_forward(y, arch.conv_activation)
                stage_caches["act"] = c_act
            else:
                y, c_bn = _bn_forward(
                    y, t[f"bn{i}.gamma"], t[f"bn{i}.beta"],
                    t[f"bn{i}.running_mean"], t[f"bn{i}.running_var"],
                    arch.bn_eps, arch.bn_momentum, train, update_running,
                )
                stage_caches["bn"] = c_bn
        if with_cache:
            caches.append(("conv_block", i, x_shape, cols, stages, stage_caches))
        x = y
    n = x.shape[0]
    flat_shape = x.shape
    x = x.reshape(n, -1)
    if with_cache:
        caches.append(("flatten", flat_shape))
    n_fc = len(arch.fc_widths)
    for j in range(1, n_fc + 1):
        x_in = x
        x = x @ t[f"fc{j}.w"].T + t[f"fc{j}.b"]
        c_act = None
        if j < n_fc:
            x, c_act = _act_forward(x, "relu")
        if with_cache:
            caches.append(("fc", j, x_in, c_act))
    return x, (caches if with_cache else None)


def backward_batch(
    params: SiameseParams,
    caches,
    dout: np.ndarray,
    defer_dense: set[str] | None = None,
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every trainable tensor.

    `dout` is the loss gradient at the embedding output, shape (N, L).
    For fc weight keys listed in `defer_dense` the gradient is returned
    unmaterialized as (dout, input) factors for the optimizer's fused
    update path.
    """
    from .train import DeferredDenseGrad  # local import breaks the cycle

    arch = params.arch
    t = params.tensors
    k, pad = arch.kernel_size, arch.padding
    grads: dict[str, np.ndarray] = {}
    dx = np.asarray(dout, dtype=params.dtype)
    for entry in reversed(caches):
        if entry[0] == "fc":
            _, j, x_in, c_act = entry
            if c_act is not None:
                dx = _act_backward(dx, c_act, "relu")
            if defer_dense and f"fc{j}.w" in defer_dense:
                grads[f"fc{j}.w"] = DeferredDenseGrad(dout=dx, x_in=x_in)
            else:
                grads[f"fc{j}.w"] = dx.T @ x_in
            grads[f"fc{j}.b"] = dx.sum(axis=0)
            dx = dx @ t[f"fc{j}.w"]
        elif entry[0] == "flatten":
            dx = dx.reshape(entry[1])
        else:
            _, i, x_shape, cols, stages, stage_caches = entry
            for stage in reversed(stages):
                if stage == "act":
                    dx = _act_backward(dx, stage_caches["act"], arch.conv_activation)
                else:
                    dx, dgamma, dbeta = _bn_backward(dx, stage_caches["bn"], t[f"bn{i}.gamma"])
                    grads[f"bn{i}.gamma"] = dgamma
                    grads[f"bn{i}.beta"] = dbeta
            dx, dw, db = _conv_backward(dx, cols, x_shape, t[f"conv{i}.w"], k, pad)
            grads[f"conv{i}.w"] = dw
            grads[f"conv{i}.b"] = db
    return grads


def forward_branch(params: SiameseParams, x: np.ndarray, mode: str = "eval") -> np.ndarray:
    """Embed one input tensor (1,H,W); returns the L-value feature vector."""
    emb, _ = forward_batch(params, np.asarray(x)[None], mode=mode)
    return emb[0]


def embed_pair(
    params: SiameseParams, xa: np.ndarray, xb: np.ndarray, mode: str = "eval"
) -> tuple[np.ndarray, np.ndarray]:
    """Embed both inputs through the one shared parameter set.

    In train mode the pair goes through as a single two-sample batch, so
    batchnorm statistics are computed over both branches together.
    """
    x = np.stack([np.asarray(xa), np.asarray(xb)])
    emb, _ = forward_batch(params, x, mode=mode)
    return emb[0], emb[1]
