"""Position-sensitive axial attention, the residual axial block, and full 2D attention.

Along the width axis, for row i and query column j::

    y_ij = sum_w softmax_w(q_ij.k_iw + q_ij.rq[j-w] + k_iw.rk[j-w]) (v_iw + rv[j-w])

per head, followed by a 1x1 output projection over the concatenated heads.
The height axis is the same computation on the transposed map.
"""
from __future__ import annotations

import contextlib
import math

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ConfigurationError, DimensionError
from .nn import BatchNorm2d, Conv2d, Module, Parameter, avg_pool2d, normal_init
from .tensor import Tensor, make_op, relu, reshape, transpose


class _CostCounter:
    """Counts pairwise (query, key) multiply-adds performed by attention ops."""

    def __init__(self):
        self.total = 0


_counters: list[_CostCounter] = []


@contextlib.contextmanager
def count_attention_ops():
    counter = _CostCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


def _record_cost(n: int) -> None:
    for c in _counters:
        c.total += n


def _relative_index(n: int, max_length: int) -> np.ndarray:
    j = np.arange(n)
    return j[:, None] - j[None, :] + max_length - 1


def _skew(buf: np.ndarray, length: int, by_query: bool) -> np.ndarray:
    """(heads, S, N, N) view of a (heads, S, N, 2L-1) offset buffer.

    Element [n, s, j, w] aliases buf[n, s, j, j-w+L-1] when ``by_query`` and
    buf[n, s, w, j-w+L-1] otherwise. The map is injective for N <= L, so
    in-place adds through the view scatter without collisions.
    """
    heads, S, N, span = buf.shape
    item = buf.itemsize
    inner = (2 * length * item, -item) if by_query else (item, (2 * length - 2) * item)
    base = buf.reshape(-1)[length - 1:]
    return as_strided(base, shape=(heads, S, N, N), strides=(S * N * span * item, N * span * item) + inner)


def attend(q: Tensor, k: Tensor, v: Tensor, rq: Tensor | None = None, rk: Tensor | None = None,
           rv: Tensor | None = None, max_length: int | None = None, logit_scale: float | None = None,
           details: dict | None = None) -> Tensor:
    """Multi-head softmax attention over sequences with optional relative position tables.

    q, k: (S, heads, N, d_qk); v: (S, heads, N, d_v). Tables are (heads, 2L-1, d)
    indexed by offset ``query - key + L - 1``. Keys may be a shorter sequence than
    queries only when no tables are given. Returns (S, heads, N, d_v).
    """
    tensors = [t for t in (q, k, v, rq, rk, rv) if t is not None]
    dt = np.result_type(*[t.data for t in tensors])
    # head-major working layout: (heads, S, N, d)
    qn, kn, vn = (np.ascontiguousarray(t.data.astype(dt, copy=False).transpose(1, 0, 2, 3)) for t in (q, k, v))
    H, S, N, dqk = qn.shape
    M = kn.shape[2]
    dv = vn.shape[3]
    positional = rq is not None
    if positional:
        if M != N:
            raise DimensionError("relative positions need equal query and key lengths")
        if N > max_length:
            raise ConfigurationError(f"axis length {N} exceeds configured maximum {max_length}")
        L = max_length
        tq, tk, tv = (t.data.astype(dt, copy=False) for t in (rq, rk, rv))
        bq, bk, bv = tq[:, None], tk[:, None], tv[:, None]
    logits = qn @ np.swapaxes(kn, -1, -2)
    if positional:
        logits += _skew(qn @ np.swapaxes(bq, -1, -2), L, True)
        logits += _skew(kn @ np.swapaxes(bk, -1, -2), L, False)
    scale = None if logit_scale is None else logits.dtype.type(logit_scale)
    if scale is not None:
        logits *= scale
    logits -= logits.max(axis=-1, keepdims=True)
    a = np.exp(logits, out=logits)
    a /= a.sum(axis=-1, keepdims=True)
    y = a @ vn
    if positional:
        a_off = np.zeros((H, S, N, 2 * L - 1), dtype=dt)
        _skew(a_off, L, True)[...] = a
        y += a_off @ bv
    _record_cost(S * H * N * M * (dqk + dv))
    if details is not None:
        details.update(weights=a.transpose(1, 0, 2, 3), v=vn.transpose(1, 0, 2, 3),
                       out=y.transpose(1, 0, 2, 3),
                       rv=tv[:, _relative_index(N, L), :] if positional else None)

    def per_head(x):
        # (H, S, N, P) -> (H, P, S*N) for table gradients
        return np.swapaxes(x.reshape(H, S * N, -1), -1, -2)

    def bw(g):
        g = np.ascontiguousarray(g.transpose(1, 0, 2, 3))
        da = g @ np.swapaxes(vn, -1, -2)
        gv_ = np.swapaxes(a, -1, -2) @ g if v.requires_grad else None
        g_rv = None
        if positional:
            da += _skew(g @ np.swapaxes(bv, -1, -2), L, True)
            if rv.requires_grad:
                g_rv = per_head(a_off) @ g.reshape(H, S * N, dv)
        dl = a * (da - (da * a).sum(axis=-1, keepdims=True))
        if scale is not None:
            dl *= scale
        gq_ = dl @ kn if q.requires_grad else None
        gk_ = np.swapaxes(dl, -1, -2) @ qn if k.requires_grad else None
        g_rq = g_rk = None
        if positional:
            dq_off = np.zeros((H, S, N, 2 * L - 1), dtype=dt)
            _skew(dq_off, L, True)[...] = dl
            dk_off = np.zeros((H, S, N, 2 * L - 1), dtype=dt)
            _skew(dk_off, L, False)[...] = dl
            if gq_ is not None:
                gq_ += dq_off @ bq
            if gk_ is not None:
                gk_ += dk_off @ bk
            if rq.requires_grad:
                g_rq = per_head(dq_off) @ qn.reshape(H, S * N, dqk)
            if rk.requires_grad:
                g_rk = per_head(dk_off) @ kn.reshape(H, S * N, dqk)
        back = tuple(None if x is None else x.transpose(1, 0, 2, 3) for x in (gq_, gk_, gv_))
        return back + (g_rq, g_rk, g_rv) if positional else back

    return make_op(y.transpose(1, 0, 2, 3), (q, k, v, rq, rk, rv) if positional else (q, k, v), bw)


class AxialAttentionLayer(Module):
    """Multi-head position-sensitive attention along one spatial axis."""

    def __init__(self, axis: str, d_model: int, heads: int = 8, d_head_qk: int | None = None,
                 d_head_v: int | None = None, out_ch: int | None = None, max_length: int = 64,
                 positional: bool = True, scale_logits: bool = False,
                 rng: np.random.Generator | None = None, pos_std: float = 0.02):
        super().__init__()
        if axis not in ("height", "width"):
            raise ConfigurationError(f"axis must be 'height' or 'width', got {axis!r}")
        rng = rng or np.random.default_rng(0)
        d_head_qk = d_head_qk or max(1, d_model // (2 * heads))
        d_head_v = d_head_v or d_head_qk
        out_ch = out_ch or d_model
        self.axis, self.d_model, self.heads = axis, d_model, heads
        self.d_head_qk, self.d_head_v = d_head_qk, d_head_v
        self.max_length, self.positional, self.scale_logits = max_length, positional, scale_logits
        std_in = 1.0 / math.sqrt(d_model)
        self.w_q = Parameter(normal_init(rng, (heads * d_head_qk, d_model, 1, 1), std=std_in))
        self.w_k = Parameter(normal_init(rng, (heads * d_head_qk, d_model, 1, 1), std=std_in))
        self.w_v = Parameter(normal_init(rng, (heads * d_head_v, d_model, 1, 1), std=std_in))
        self.w_out = Parameter(normal_init(rng, (out_ch, heads * d_head_v, 1, 1),
                                           std=1.0 / math.sqrt(heads * d_head_v)))
        if positional:
            span = 2 * max_length - 1
            self.r_q = Parameter(normal_init(rng, (heads, span, d_head_qk), std=pos_std))
            self.r_k = Parameter(normal_init(rng, (heads, span, d_head_qk), std=pos_std))
            self.r_v = Parameter(normal_init(rng, (heads, span, d_head_v), std=pos_std))

    def _split(self, t: Tensor, d: int) -> Tensor:
        # (B, heads*d, H, W) -> (sequences, heads, axis length, d)
        B, _, H, W = t.shape
        t = reshape(t, (B, self.heads, d, H, W))
        if self.axis == "width":
            return reshape(transpose(t, (0, 3, 1, 4, 2)), (B * H, self.heads, W, d))
        return reshape(transpose(t, (0, 4, 1, 3, 2)), (B * W, self.heads, H, d))

    def _merge(self, y: Tensor, B: int, H: int, W: int) -> Tensor:
        d = self.d_head_v
        if self.axis == "width":
            y = transpose(reshape(y, (B, H, self.heads, W, d)), (0, 2, 4, 1, 3))
        else:
            y = transpose(reshape(y, (B, W, self.heads, H, d)), (0, 2, 4, 3, 1))
        return reshape(y, (B, self.heads * d, H, W))

    def forward(self, x: Tensor, details: dict | None = None) -> Tensor:
        from .nn import conv2d

        if x.ndim != 4 or x.shape[1] != self.d_model:
            raise DimensionError(f"axial layer expects {self.d_model} channels, got {x.shape}")
        B, _, H, W = x.shape
        length = W if self.axis == "width" else H
        if length > self.max_length:
            raise ConfigurationError(f"axis length {length} exceeds configured maximum {self.max_length}")
        q = self._split(conv2d(x, self.w_q), self.d_head_qk)
        k = self._split(conv2d(x, self.w_k), self.d_head_qk)
        v = self._split(conv2d(x, self.w_v), self.d_head_v)
        scale = 1.0 / math.sqrt(self.d_head_qk) if self.scale_logits else None
        if self.positional:
            y = attend(q, k, v, self.r_q, self.r_k, self.r_v, self.max_length, scale, details)
        else:
            y = attend(q, k, v, logit_scale=scale, details=details)
        return conv2d(self._merge(y, B, H, W), self.w_out)


class FullAttention2d(Module):
    """Content-only multi-head attention over all h*w positions (no factorization).

    ``kv_pool`` average-pools the key/value input before projection; 1 gives
    exact pairwise attention.
    """

    def __init__(self, d_model: int, heads: int = 1, d_head_qk: int | None = None,
                 d_head_v: int | None = None, out_ch: int | None = None, max_positions: int = 1024,
                 kv_pool: int = 1, scale_logits: bool = False, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        d_head_qk = d_head_qk or max(1, d_model // (2 * heads))
        d_head_v = d_head_v or d_head_qk
        out_ch = out_ch or d_model
        self.d_model, self.heads, self.d_head_qk, self.d_head_v = d_model, heads, d_head_qk, d_head_v
        self.max_positions, self.kv_pool, self.scale_logits = max_positions, kv_pool, scale_logits
        std_in = 1.0 / math.sqrt(d_model)
        self.w_q = Parameter(normal_init(rng, (heads * d_head_qk, d_model, 1, 1), std=std_in))
        self.w_k = Parameter(normal_init(rng, (heads * d_head_qk, d_model, 1, 1), std=std_in))
        self.w_v = Parameter(normal_init(rng, (heads * d_head_v, d_model, 1, 1), std=std_in))
        self.w_out = Parameter(normal_init(rng, (out_ch, heads * d_head_v, 1, 1),
                                           std=1.0 / math.sqrt(heads * d_head_v)))

    @classmethod
    def from_axial(cls, layer: AxialAttentionLayer, max_positions: int = 1024) -> "FullAttention2d":
        """Oracle sharing the projection weights of an axial layer."""
        oracle = cls(layer.d_model, layer.heads, layer.d_head_qk, layer.d_head_v,
                     layer.w_out.shape[0], max_positions, scale_logits=layer.scale_logits)
        oracle.w_q, oracle.w_k, oracle.w_v, oracle.w_out = layer.w_q, layer.w_k, layer.w_v, layer.w_out
        return oracle

    def _seq(self, t: Tensor, d: int) -> Tensor:
        B, _, H, W = t.shape
        return transpose(reshape(t, (B, self.heads, d, H * W)), (0, 1, 3, 2))

    def forward(self, x: Tensor, details: dict | None = None) -> Tensor:
        from .nn import conv2d

        if x.ndim != 4 or x.shape[1] != self.d_model:
            raise DimensionError(f"full attention expects {self.d_model} channels, got {x.shape}")
        B, _, H, W = x.shape
        kv_in = avg_pool2d(x, self.kv_pool) if self.kv_pool > 1 else x
        n_kv = kv_in.shape[2] * kv_in.shape[3]
        if n_kv > self.max_positions:
            raise ConfigurationError(f"{n_kv} key positions exceed the limit {self.max_positions}")
        q = self._seq(conv2d(x, self.w_q), self.d_head_qk)
        k = self._seq(conv2d(kv_in, self.w_k), self.d_head_qk)
        v = self._seq(conv2d(kv_in, self.w_v), self.d_head_v)
        scale = 1.0 / math.sqrt(self.d_head_qk) if self.scale_logits else None
        y = attend(q, k, v, logit_scale=scale, details=details)
        y = reshape(transpose(y, (0, 1, 3, 2)), (B, self.heads * self.d_head_v, H, W))
        return conv2d(y, self.w_out)


def full_attention_2d(oracle: FullAttention2d, x: Tensor) -> Tensor:
    return oracle(x)


class AxialBlock(Module):
    """Residual bottleneck: 1x1 reduce, height then width attention, 1x1 restore, skip, ReLU.

    ``attention='full2d'`` swaps the axial pair for one full 2D attention layer
    with the same bottleneck.
    """

    def __init__(self, ch: int, heads: int = 8, max_length: int = 64, attention: str = "axial",
                 positional: bool = True, scale_logits: bool = False, max_kv_positions: int = 256,
                 rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        mid = max(1, ch // 2)
        self.attention = attention
        self.reduce = Conv2d(ch, mid, 1, bias=False, rng=rng)
        self.bn1 = BatchNorm2d(mid, rng=rng)
        if attention == "axial":
            heads = max(1, min(heads, mid))
            self.height = AxialAttentionLayer("height", mid, heads, max_length=max_length,
                                              positional=positional, scale_logits=scale_logits, rng=rng)
            self.width = AxialAttentionLayer("width", mid, heads, max_length=max_length,
                                             positional=positional, scale_logits=scale_logits, rng=rng)
        elif attention == "full2d":
            pool = 1
            while (max_length // pool) ** 2 > max_kv_positions:
                pool *= 2
            self.full = FullAttention2d(mid, heads=1, d_head_qk=max(1, mid // 2), d_head_v=max(1, mid // 2),
                                        max_positions=max_kv_positions, kv_pool=pool,
                                        scale_logits=scale_logits, rng=rng)
        else:
            raise ConfigurationError(f"unknown attention mode {attention!r}")
        self.restore = Conv2d(mid, ch, 1, bias=False, rng=rng)
        self.bn2 = BatchNorm2d(ch, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.reduce.in_ch:
            raise DimensionError(f"axial block expects {self.reduce.in_ch} channels, got {x.shape}")
        h = relu(self.bn1(self.reduce(x)))
        if self.attention == "axial":
            h = self.width(self.height(h))
        else:
            h = self.full(h)
        h = self.bn2(self.restore(relu(h)))
        return relu(x + h)


def axial_attend(layer: AxialAttentionLayer, x: Tensor) -> Tensor:
    return layer(x)


def axial_block_forward(block: AxialBlock, x: Tensor) -> Tensor:
    return block(x)
