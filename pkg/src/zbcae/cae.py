"""Zero-bias tied-weight convolutional auto-encoder.

The model owns a single encoder filter bank; decoder filters are always
derived on the fly by :func:`zbcae.ops.tied_decoder_weights`, so no stale
decoder state can exist.  Encoding is ReLU(conv(x, W_e) + b), decoding is
act(conv(z, tied(W_e)) + b_d); reconstruction loss is half the summed
squared error over a batch.

Two bias regimes are supported.  ``train-then-zero`` (default) lets the
biases learn during reconstruction training and pins them to zero only for
feature extraction; ``always-zero`` treats them as the constant zero in
every forward pass and returns zero bias gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLossError, ShapeError
from .ops import (
    ConvSpec,
    conv2d,
    conv2d_bias_grad,
    conv2d_input_grad,
    conv2d_weight_grad,
    flatten,
    maxpool2,
    relu,
    tied_decoder_weights,
)

BIAS_TRAIN_THEN_ZERO = "train-then-zero"
BIAS_ALWAYS_ZERO = "always-zero"
BIAS_MODES = (BIAS_TRAIN_THEN_ZERO, BIAS_ALWAYS_ZERO)


@dataclass
class CaeModel:
    """Encoder filter bank plus per-map biases and convolution geometry.

    w_e: (K, C, kh, kh) encoder filters, square kernels only.
    b_e: (K,) encoder biases.  b_d: (C,) decoder biases.
    decoder_relu: apply ReLU after the decoder convolution (identity when off).
    """

    w_e: np.ndarray
    b_e: np.ndarray
    b_d: np.ndarray
    spec: ConvSpec
    decoder_relu: bool = True

    def __post_init__(self):
        self.w_e = np.ascontiguousarray(self.w_e, dtype=np.float64)
        self.b_e = np.ascontiguousarray(self.b_e, dtype=np.float64)
        self.b_d = np.ascontiguousarray(self.b_d, dtype=np.float64)
        if self.w_e.ndim != 4:
            raise ShapeError(f"encoder weights must be K x C x kh x kw, got shape {self.w_e.shape}")
        k, c, kh, kw = self.w_e.shape
        if kh != kw:
            raise ShapeError(f"kernels must be square, got {kh} x {kw}")
        if self.b_e.shape != (k,):
            raise ShapeError(f"encoder bias has length {self.b_e.size}, expected {k}")
        if self.b_d.shape != (c,):
            raise ShapeError(f"decoder bias has length {self.b_d.size}, expected {c}")
        for name, a in (("weights", self.w_e), ("encoder bias", self.b_e), ("decoder bias", self.b_d)):
            if not np.isfinite(a).all():
                raise ValueError(f"model {name} contain non-finite values")

    @property
    def n_filters(self) -> int:
        return self.w_e.shape[0]

    @property
    def n_channels(self) -> int:
        return self.w_e.shape[1]

    @property
    def kernel(self) -> int:
        return self.w_e.shape[2]


@dataclass
class CaeTrainConfig:
    """SGD schedule.  Defaults are the reference operating point: 100
    epochs, batch 512, learning rate 1e-5, tenfold decay on plateau."""

    epochs: int = 100
    batch_size: int = 512
    learning_rate: float = 1e-5
    anneal_factor: float = 0.1
    plateau_patience: int = 5
    plateau_rel_tol: float = 1e-3
    max_anneals: int = 3
    bias_mode: str = BIAS_TRAIN_THEN_ZERO
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 < self.anneal_factor < 1.0:
            raise ValueError(f"anneal_factor must be in (0, 1), got {self.anneal_factor}")
        if self.plateau_patience < 1:
            raise ValueError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if self.plateau_rel_tol <= 0:
            raise ValueError(f"plateau_rel_tol must be > 0, got {self.plateau_rel_tol}")
        if self.max_anneals < 0:
            raise ValueError(f"max_anneals must be >= 0, got {self.max_anneals}")
        if self.bias_mode not in BIAS_MODES:
            raise ValueError(f"bias_mode must be one of {BIAS_MODES}, got {self.bias_mode!r}")


@dataclass
class CaeGradients:
    """Loss gradients w.r.t. the model parameters."""

    dw_e: np.ndarray
    db_e: np.ndarray
    db_d: np.ndarray


@dataclass
class LossHistory:
    """Per-epoch training record: mean loss, learning rate in effect, and
    (epoch, new_lr) anneal events."""

    mean_loss: list = field(default_factory=list)
    learning_rate: list = field(default_factory=list)
    anneal_events: list = field(default_factory=list)


def init_model(
    n_filters: int,
    n_channels: int,
    kernel: int,
    seed: int,
    stride: int = 1,
    pad: int | None = None,
    decoder_relu: bool = True,
) -> CaeModel:
    """Build a fresh model with fan-balanced uniform filters and zero biases.

    Filters are drawn from U[-s, s] with s = sqrt(6 / (fan_in + fan_out)),
    fan_in = C*kh*kh and fan_out = K*kh*kh.  ``pad`` defaults to (kernel-1)//2,
    which preserves spatial extent at stride 1.
    """
    if n_filters < 1 or n_channels < 1 or kernel < 1:
        raise ShapeError(
            f"filters, channels and kernel must be >= 1, got {n_filters}, {n_channels}, {kernel}"
        )
    if pad is None:
        pad = (kernel - 1) // 2
    fan_in = n_channels * kernel * kernel
    fan_out = n_filters * kernel * kernel
    s = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    w_e = rng.uniform(-s, s, size=(n_filters, n_channels, kernel, kernel))
    return CaeModel(
        w_e=w_e,
        b_e=np.zeros(n_filters),
        b_d=np.zeros(n_channels),
        spec=ConvSpec(stride=stride, pad=pad),
        decoder_relu=decoder_relu,
    )


def encode(model: CaeModel, x: np.ndarray, zero_bias: bool = False) -> np.ndarray:
    """ReLU(conv(x, W_e) + b_e), or with b_e pinned to zero when zero_bias."""
    b = np.zeros(model.n_filters) if zero_bias else model.b_e
    return relu(conv2d(x, model.w_e, b, model.spec))


def decode(model: CaeModel, z: np.ndarray, zero_bias: bool = False) -> np.ndarray:
    """Map a code back to input space through the tied, flipped filters."""
    b = np.zeros(model.n_channels) if zero_bias else model.b_d
    g = conv2d(z, tied_decoder_weights(model.w_e), b, model.spec)
    return relu(g) if model.decoder_relu else g


def _check_batch(model: CaeModel, batch) -> list:
    if len(batch) == 0:
        raise ShapeError("batch must contain at least one sample")
    tensors = [np.ascontiguousarray(x, dtype=np.float64) for x in batch]
    shape = tensors[0].shape
    for i, t in enumerate(tensors):
        if t.ndim != 3:
            raise ShapeError(f"sample {i} must be C x H x W, got shape {t.shape}")
        if t.shape != shape:
            raise ShapeError(f"sample {i} has shape {t.shape}, expected {shape}")
    if shape[0] != model.n_channels:
        raise ShapeError(f"samples have {shape[0]} channels but the model expects {model.n_channels}")
    return tensors


def _forward_backward(model: CaeModel, batch, bias_mode: str):
    """Loss plus gradients, with the encoder- and decoder-path weight terms
    kept separate (both flow into W_e through the tie)."""
    tensors = _check_batch(model, batch)
    use_bias = bias_mode == BIAS_TRAIN_THEN_ZERO
    k, c, kh, _ = model.w_e.shape
    spec = model.spec
    b_e = model.b_e if use_bias else np.zeros(k)
    b_d = model.b_d if use_bias else np.zeros(c)
    w_d = tied_decoder_weights(model.w_e)

    loss = 0.0
    dw_enc = np.zeros_like(model.w_e)
    dw_dec_tied = np.zeros_like(model.w_e)
    db_e = np.zeros(k)
    db_d = np.zeros(c)
    for x in tensors:
        a = conv2d(x, model.w_e, b_e, spec)
        z = relu(a)
        g = conv2d(z, w_d, b_d, spec)
        y = relu(g) if model.decoder_relu else g
        if y.shape != x.shape:
            raise ShapeError(
                f"reconstruction shape {y.shape} differs from input shape {x.shape}; "
                f"the convolution geometry must preserve spatial extent"
            )
        r = y - x
        loss += 0.5 * float((r * r).sum())

        dg = r * (g > 0.0) if model.decoder_relu else r
        db_d += conv2d_bias_grad(dg)
        dw_d = conv2d_weight_grad(z, dg, kh, kh, spec)
        dw_dec_tied += tied_decoder_weights(dw_d)
        da = conv2d_input_grad(dg, w_d, z.shape, spec) * (a > 0.0)
        db_e += conv2d_bias_grad(da)
        dw_enc += conv2d_weight_grad(x, da, kh, kh, spec)

    if not use_bias:
        db_e = np.zeros(k)
        db_d = np.zeros(c)
    return loss, dw_enc, dw_dec_tied, db_e, db_d


def reconstruction_loss(model: CaeModel, batch, zero_bias: bool = False) -> float:
    """Half the summed squared reconstruction error over the batch.

    ``zero_bias`` evaluates the forward pass with both encoder and decoder
    biases pinned to zero, matching gradients taken in always-zero mode.
    """
    tensors = _check_batch(model, batch)
    total = 0.0
    for x in tensors:
        y = decode(model, encode(model, x, zero_bias=zero_bias), zero_bias=zero_bias)
        if y.shape != x.shape:
            raise ShapeError(
                f"reconstruction shape {y.shape} differs from input shape {x.shape}; "
                f"the convolution geometry must preserve spatial extent"
            )
        r = y - x
        total += 0.5 * float((r * r).sum())
    return total


def loss_gradients(model: CaeModel, batch, bias_mode: str = BIAS_TRAIN_THEN_ZERO) -> CaeGradients:
    """Exact gradient of the reconstruction loss.

    The W_e gradient sums the encoder-path and decoder-path contributions,
    since the tied decoder shares W_e.  ReLU backprop uses subgradient 0 at
    exactly 0.  In always-zero mode the bias gradients are zero and the
    forward pass treats both biases as the constant 0.
    """
    if bias_mode not in BIAS_MODES:
        raise ValueError(f"bias_mode must be one of {BIAS_MODES}, got {bias_mode!r}")
    _, dw_enc, dw_dec, db_e, db_d = _forward_backward(model, batch, bias_mode)
    return CaeGradients(dw_e=dw_enc + dw_dec, db_e=db_e, db_d=db_d)


def sgd_step(model: CaeModel, grads: CaeGradients, lr: float) -> CaeModel:
    """Plain in-place stochastic gradient step, no momentum or decay."""
    if grads.dw_e.shape != model.w_e.shape:
        raise ShapeError(f"weight gradient shape {grads.dw_e.shape} != {model.w_e.shape}")
    model.w_e -= lr * grads.dw_e
    model.b_e -= lr * grads.db_e
    model.b_d -= lr * grads.db_d
    return model


def train(model: CaeModel, dataset, config: CaeTrainConfig, progress=None):
    """Run SGD with per-epoch shuffling and plateau-triggered annealing.

    The dataset is a sequence of (C, H, W) tensors; labels never enter this
    function.  Each epoch the data is reshuffled with the seeded generator
    and split into batches (the trailing short batch is kept).  The recorded
    epoch metric is the mean per-sample loss.  An epoch counts toward a
    plateau unless it improves on the best mean loss seen so far by at
    least ``plateau_rel_tol`` (relative); after ``plateau_patience``
    consecutive plateau epochs the learning rate is multiplied by
    ``anneal_factor``, at most ``max_anneals`` times.

    ``progress``, if given, is called as progress(epoch, mean_loss, lr)
    after every epoch.  Returns (model, LossHistory).
    """
    n = len(dataset)
    if n == 0:
        raise ShapeError("training dataset is empty")
    history = LossHistory()
    if config.epochs == 0:
        return model, history

    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    plateau_run = 0
    anneals = 0
    best = None
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            loss, dw_enc, dw_dec, db_e, db_d = _forward_backward(model, batch, config.bias_mode)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite reconstruction loss at epoch {epoch}, batch {b}; "
                    f"reduce the learning rate"
                )
            sgd_step(model, CaeGradients(dw_enc + dw_dec, db_e, db_d), lr)
            total += loss
        mean = total / n
        history.mean_loss.append(mean)
        history.learning_rate.append(lr)

        if best is None:
            best = mean
        else:
            improvement = (best - mean) / best if best > 0 else 0.0
            if improvement < config.plateau_rel_tol:
                plateau_run += 1
                if plateau_run >= config.plateau_patience and anneals < config.max_anneals:
                    lr *= config.anneal_factor
                    anneals += 1
                    plateau_run = 0
                    history.anneal_events.append((epoch, lr))
            else:
                best = mean
                plateau_run = 0
        if progress is not None:
            progress(epoch, mean, lr)
    return model, history


def extract_features(model: CaeModel, x: np.ndarray) -> np.ndarray:
    """Feed-forward feature vector: zero-bias encode, 2x2 max-pool, flatten.

    Bias values never influence the output, so the result has length
    K * ceil(H/2) * ceil(W/2) and is elementwise non-negative.
    """
    z = encode(model, x, zero_bias=True)
    pooled, _ = maxpool2(z)
    return flatten(pooled)
