"""Minimal neural-net layers with hand-written backward passes.

Everything is plain numpy. Layers follow one convention: ``forward`` returns
``(output, cache)``, ``backward(cache, d_out)`` returns the gradient w.r.t.
the input and accumulates parameter gradients in place. Training is
single-writer, so gradient accumulation needs no locking; call
``zero_grad()`` between steps.

Parameters are exposed through ``named_parameters()`` /
``named_grads()`` as flat dotted-name dicts. Updates mutate the arrays in
place so the name -> array references stay valid.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(weights: np.ndarray, d_weights: np.ndarray) -> np.ndarray:
    """JVP of softmax along the last axis; rows are probability vectors."""
    inner = np.sum(weights * d_weights, axis=-1, keepdims=True)
    return weights * (d_weights - inner)


class Linear:
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, dtype=np.float32):
        bound = 1.0 / np.sqrt(d_in)
        self.W = rng.uniform(-bound, bound, (d_in, d_out)).astype(dtype)
        self.b = np.zeros(d_out, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    def forward(self, x: np.ndarray):
        return x @ self.W + self.b, x

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        x = cache
        d_in, d_outw = self.W.shape
        self.dW += x.reshape(-1, d_in).T @ d_out.reshape(-1, d_outw)
        self.db += d_out.reshape(-1, d_outw).sum(axis=0)
        return d_out @ self.W.T

    def named_parameters(self, prefix: str):
        yield f"{prefix}.W", self.W
        yield f"{prefix}.b", self.b

    def named_grads(self, prefix: str):
        yield f"{prefix}.W", self.dW
        yield f"{prefix}.b", self.db

    def zero_grad(self):
        self.dW[...] = 0
        self.db[...] = 0


class LayerNorm:
    def __init__(self, d: int, dtype=np.float32, eps: float = 1e-5):
        self.gamma = np.ones(d, dtype=dtype)
        self.beta = np.zeros(d, dtype=dtype)
        self.eps = eps
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)

    def forward(self, x: np.ndarray):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv
        return self.gamma * xhat + self.beta, (xhat, inv)

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        xhat, inv = cache
        d = xhat.shape[-1]
        self.dgamma += (d_out * xhat).reshape(-1, d).sum(axis=0)
        self.dbeta += d_out.reshape(-1, d).sum(axis=0)
        dxhat = d_out * self.gamma
        # standard layernorm input gradient over the last axis
        return inv / d * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )

    def named_parameters(self, prefix: str):
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta

    def named_grads(self, prefix: str):
        yield f"{prefix}.gamma", self.dgamma
        yield f"{prefix}.beta", self.dbeta

    def zero_grad(self):
        self.dgamma[...] = 0
        self.dbeta[...] = 0


class MultiHeadAttention:
    """Batched multi-head attention; query and key/value inputs may differ."""

    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int, dtype=np.float32):
        if d_model % n_heads != 0:
            raise ValidationError(f"d_model={d_model} must be divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = Linear(rng, d_model, d_model, dtype)
        self.k_proj = Linear(rng, d_model, d_model, dtype)
        self.v_proj = Linear(rng, d_model, d_model, dtype)
        self.o_proj = Linear(rng, d_model, d_model, dtype)

    def _split(self, x: np.ndarray) -> np.ndarray:
        B, T, _ = x.shape
        return x.reshape(B, T, self.n_heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        B, H, T, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)

    def forward(self, q_in: np.ndarray, kv_in: np.ndarray):
        Q, cq = self.q_proj.forward(q_in)
        K, ck = self.k_proj.forward(kv_in)
        V, cv = self.v_proj.forward(kv_in)
        Qh, Kh, Vh = self._split(Q), self._split(K), self._split(V)
        scores = Qh @ Kh.transpose(0, 1, 3, 2) / np.sqrt(self.d_head)
        A = softmax(scores)
        ctx = A @ Vh
        out, co = self.o_proj.forward(self._merge(ctx))
        return out, (cq, ck, cv, co, Qh, Kh, Vh, A)

    def backward(self, cache, d_out: np.ndarray):
        """Returns (d_q_in, d_kv_in)."""
        cq, ck, cv, co, Qh, Kh, Vh, A = cache
        d_ctx = self._split(self.o_proj.backward(co, d_out))
        dA = d_ctx @ Vh.transpose(0, 1, 3, 2)
        dVh = A.transpose(0, 1, 3, 2) @ d_ctx
        dS = softmax_backward(A, dA) / np.sqrt(self.d_head)
        dQh = dS @ Kh
        dKh = dS.transpose(0, 1, 3, 2) @ Qh
        d_q_in = self.q_proj.backward(cq, self._merge(dQh))
        d_kv_in = self.k_proj.backward(ck, self._merge(dKh))
        d_kv_in = d_kv_in + self.v_proj.backward(cv, self._merge(dVh))
        return d_q_in, d_kv_in

    def _children(self):
        return [("q_proj", self.q_proj), ("k_proj", self.k_proj),
                ("v_proj", self.v_proj), ("o_proj", self.o_proj)]

    def named_parameters(self, prefix: str):
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}.{name}")

    def named_grads(self, prefix: str):
        for name, child in self._children():
            yield from child.named_grads(f"{prefix}.{name}")

    def zero_grad(self):
        for _, child in self._children():
            child.zero_grad()


class FeedForward:
    def __init__(self, rng: np.random.Generator, d_model: int, d_ff: int, dtype=np.float32):
        self.lin1 = Linear(rng, d_model, d_ff, dtype)
        self.lin2 = Linear(rng, d_ff, d_model, dtype)

    def forward(self, x: np.ndarray):
        h, c1 = self.lin1.forward(x)
        a = np.maximum(h, 0)
        out, c2 = self.lin2.forward(a)
        return out, (c1, c2, h)

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        c1, c2, h = cache
        da = self.lin2.backward(c2, d_out)
        dh = da * (h > 0)
        return self.lin1.backward(c1, dh)

    def _children(self):
        return [("lin1", self.lin1), ("lin2", self.lin2)]

    def named_parameters(self, prefix: str):
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}.{name}")

    def named_grads(self, prefix: str):
        for name, child in self._children():
            yield from child.named_grads(f"{prefix}.{name}")

    def zero_grad(self):
        for _, child in self._children():
            child.zero_grad()


class TransformerEncoderLayer:
    """Post-norm encoder block: self-attention then feed-forward, residual each."""

    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int, d_ff: int, dtype=np.float32):
        self.attn = MultiHeadAttention(rng, d_model, n_heads, dtype)
        self.ln1 = LayerNorm(d_model, dtype)
        self.ffn = FeedForward(rng, d_model, d_ff, dtype)
        self.ln2 = LayerNorm(d_model, dtype)

    def forward(self, x: np.ndarray):
        a, ca = self.attn.forward(x, x)
        y1, c1 = self.ln1.forward(x + a)
        f, cf = self.ffn.forward(y1)
        y2, c2 = self.ln2.forward(y1 + f)
        return y2, (ca, c1, cf, c2)

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        ca, c1, cf, c2 = cache
        dh2 = self.ln2.backward(c2, d_out)
        dy1 = dh2 + self.ffn.backward(cf, dh2)
        dh1 = self.ln1.backward(c1, dy1)
        dq, dkv = self.attn.backward(ca, dh1)
        return dh1 + dq + dkv

    def _children(self):
        return [("attn", self.attn), ("ln1", self.ln1), ("ffn", self.ffn), ("ln2", self.ln2)]

    def named_parameters(self, prefix: str):
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}.{name}")

    def named_grads(self, prefix: str):
        for name, child in self._children():
            yield from child.named_grads(f"{prefix}.{name}")

    def zero_grad(self):
        for _, child in self._children():
            child.zero_grad()


def cross_entropy_with_logits(logits: np.ndarray, targets: np.ndarray):
    """Per-element negative log-likelihood and its logit gradient.

    logits: (..., C); targets: integer array matching the leading shape.
    Returns (nll (...,), d_logits (..., C)) where d_logits is the gradient of
    the summed (not averaged) nll.
    """
    targets = np.asarray(targets)
    C = logits.shape[-1]
    if targets.min() < 0 or targets.max() >= C:
        raise ValidationError(f"target id out of range for {C} classes")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    onehot = np.eye(C, dtype=logits.dtype)[targets]
    nll = -(logp * onehot).sum(axis=-1)
    d_logits = np.exp(logp) - onehot
    return nll, d_logits
