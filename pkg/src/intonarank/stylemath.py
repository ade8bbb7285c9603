"""Forward/backward math for the style-embedding auxiliaries.

Covers the weighted intonation cross-entropy, the gradient-reversal layer
with its L1 content loss, the residual final-syllable embedding, single
head style-token attention, the intensity FC map and the multi-style
concatenation. Every differentiable piece returns its analytic gradient so
it can be checked against central differences with :func:`grad_check`.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import as_vector

D_STYLE = 16
N_TOKENS = 10
ROLES = ("R_s", "R_f", "R_res", "G_s", "G_f", "h_i")
PROB_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class StyleEmbedding:
    role: str
    data: np.ndarray

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        object.__setattr__(self, "data", as_vector(self.data, "data"))

    def __len__(self):
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class TokenBank:
    tokens: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tokens, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] < 1:
            raise ValueError("token bank must be a non-empty K x d matrix")
        if not np.all(np.isfinite(t)):
            raise ValueError("token bank contains non-finite values")
        object.__setattr__(self, "tokens", t)

    @property
    def n_tokens(self):
        return self.tokens.shape[0]

    @property
    def dim(self):
        return self.tokens.shape[1]

    @classmethod
    def random(cls, n_tokens=N_TOKENS, dim=D_STYLE, seed=0):
        rng = np.random.default_rng(seed)
        return cls(np.tanh(rng.standard_normal((n_tokens, dim))))


def _data(x):
    return x.data if isinstance(x, StyleEmbedding) else as_vector(x)


# -- losses ---------------------------------------------------------------


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z))
    return e / e.sum()


def weighted_ce(probs, onehot, sigma=1.0):
    """Weighted two-class cross entropy ``-y1 log p1 - sigma y2 log p2``.

    ``probs`` and ``onehot`` are ordered (statement, question); ``sigma``
    up-weights the question class.
    """
    p = as_vector(probs, "probs", length=2)
    y = as_vector(onehot, "onehot", length=2)
    if np.any(p <= 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError("probs must be positive and sum to 1")
    if not (set(y.tolist()) <= {0.0, 1.0} and y.sum() == 1.0):
        raise ValueError("onehot must be exactly one-hot")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return float(-y[0] * np.log(p[0]) - sigma * y[1] * np.log(p[1]))


def weighted_ce_logits(logits, onehot, sigma=1.0):
    """Weighted CE applied to ``softmax(logits)``; returns (loss, d loss/d logits)."""
    z = as_vector(logits, "logits", length=2)
    y = as_vector(onehot, "onehot", length=2)
    p = softmax(z)
    loss = weighted_ce(p, y, sigma)
    c = np.array([y[0], sigma * y[1]])
    return loss, c.sum() * p - c


def balance_sigma(n_statement, n_question):
    """Question-class weight that balances the two intonation classes."""
    if n_question <= 0:
        raise ValueError("need at least one question to balance against")
    return n_statement / n_question


def content_l1(c_hat, c):
    """Mean absolute error and its (sub)gradient with respect to ``c_hat``."""
    c_hat = _data(c_hat)
    c = _data(c)
    if c_hat.shape != c.shape:
        raise ValueError("content vectors differ in length")
    diff = c_hat - c
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


class GradientReversal:
    """Identity forward, ``-lambda`` times the gradient backward."""

    def __init__(self, lam=1.0):
        self.lam = lam

    def forward(self, x):
        return np.array(_data(x), copy=True)

    def backward(self, grad):
        return -self.lam * as_vector(grad, "grad")


def grl(upstream_grad, lam=1.0):
    """Backward pass of the gradient-reversal layer."""
    return GradientReversal(lam).backward(upstream_grad)


# -- embeddings -----------------------------------------------------------


def residual_style(R_f, R_s):
    """Final-syllable residual ``R_f - R_s``."""
    for emb, role in ((R_f, "R_f"), (R_s, "R_s")):
        if isinstance(emb, StyleEmbedding) and emb.role != role:
            raise ValueError(f"expected a {role} embedding, got {emb.role}")
    a, b = _data(R_f), _data(R_s)
    if a.shape != b.shape:
        raise ValueError("embeddings differ in dimension")
    return StyleEmbedding("R_res", a - b)


@dataclass
class AttentionResult:
    embedding: StyleEmbedding
    weights: np.ndarray
    logits: np.ndarray


def style_token_attention(ref, bank, role="G_f"):
    """Single-head scaled dot-product attention over a token bank.

    weights = softmax(tokens @ ref / sqrt(d)); output = weights @ tokens.
    """
    if not isinstance(bank, TokenBank):
        bank = TokenBank(bank)
    r = _data(ref)
    if r.shape[0] != bank.dim:
        raise ValueError("reference and token dimensions disagree")
    logits = bank.tokens @ r / np.sqrt(bank.dim)
    a = softmax(logits)
    return AttentionResult(StyleEmbedding(role, a @ bank.tokens), a, logits)


def style_token_attention_backward(ref, bank, upstream):
    """Gradients of ``upstream . attention(ref, bank)`` w.r.t. ref and tokens."""
    tokens = bank.tokens if isinstance(bank, TokenBank) else np.asarray(bank)
    r = _data(ref)
    v = as_vector(upstream, "upstream")
    scale = 1.0 / np.sqrt(tokens.shape[1])
    a = softmax(tokens @ r * scale)
    da = tokens @ v
    dlogits = a * (da - a @ da)
    d_ref = scale * tokens.T @ dlogits
    d_tokens = np.outer(a, v) + scale * np.outer(dlogits, r)
    return d_ref, d_tokens


def intensity_embed(intensity, weights, bias):
    """FC map of a scalar intensity in [0, 1] to ``h_i``."""
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity {intensity} outside [0, 1]")
    w = as_vector(weights, "weights")
    b = as_vector(bias, "bias", length=w.shape[0])
    return StyleEmbedding("h_i", intensity * w + b)


def intensity_embed_backward(intensity, weights, upstream):
    """Gradients of ``upstream . h_i`` w.r.t. (intensity, weights, bias)."""
    v = as_vector(upstream, "upstream")
    return float(v @ as_vector(weights, "weights")), intensity * v, v.copy()


def random_fc(dim=D_STYLE, seed=0):
    """Seeded stand-in weights and bias for the intensity FC layer."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim) / np.sqrt(dim), np.zeros(dim)


def concat_multistyle(G_s, G_f, h_i):
    parts = [_data(G_s), _data(G_f), _data(h_i)]
    if len({p.shape[0] for p in parts}) != 1:
        raise ValueError("style embeddings differ in dimension")
    return np.concatenate(parts)


# -- finite differences ---------------------------------------------------


def numerical_gradient(fn, x, eps=1e-5):
    """Central-difference gradient of scalar ``fn`` at ``x``."""
    x = as_vector(x, "x")
    g = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = eps
        hi, lo = fn(x + step), fn(x - step)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise FloatingPointError("non-finite evaluation during grad_check")
        g[i] = (hi - lo) / (2 * eps)
    return g


def relative_error(g_fd, g):
    return float(np.max(np.abs(g_fd - g) / np.maximum(1.0, np.abs(g_fd))))


def grad_check(fn, x, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``fn(x)`` must return ``(value, grad)``.
    """
    x = as_vector(x, "x")
    value, g = fn(x)
    if not np.isfinite(value):
        raise FloatingPointError("non-finite evaluation during grad_check")
    g_fd = numerical_gradient(lambda z: fn(z)[0], x, eps)
    return relative_error(g_fd, np.asarray(g, dtype=np.float64))


def grl_check(head, x, lam=1.0, eps=1e-5):
    """Compare reversed analytic gradients against ``-lam`` times finite
    differences of ``head`` composed with the GRL forward pass.

    ``head(z)`` returns ``(value, grad)``.
    """
    layer = GradientReversal(lam)
    x = as_vector(x, "x")
    _, g_head = head(layer.forward(x))
    reversed_grad = layer.backward(g_head)
    g_fd = numerical_gradient(lambda z: head(layer.forward(z))[0], x, eps)
    return relative_error(-lam * g_fd, reversed_grad)


def gradient_suite(seed, n_points=50, dim=D_STYLE, n_tokens=N_TOKENS):
    """Run every finite-difference check at ``n_points`` seeded points.

    Returns a dict mapping check name to its worst relative error.
    """
    rng = np.random.default_rng(seed)
    worst = {}

    def record(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(n_points):
        target = np.eye(2)[rng.integers(2)]
        sigma = rng.uniform(0.5, 3.0)
        record("weighted_ce_softmax", grad_check(
            lambda z: weighted_ce_logits(z, target, sigma), rng.normal(0, 2, 2)))

        c = rng.standard_normal(dim)
        # keep every coordinate away from the |.| kink
        offset = rng.uniform(0.05, 1.0, dim) * rng.choice([-1.0, 1.0], dim)
        record("content_l1", grad_check(lambda z: content_l1(z, c), c + offset))

        weights, bias, up = rng.standard_normal((3, dim))
        intensity = rng.uniform(0.05, 0.95)

        def fc_in_intensity(z):
            h = intensity_embed(float(z[0]), weights, bias).data
            return float(up @ h), [intensity_embed_backward(float(z[0]), weights, up)[0]]

        def fc_in_params(z):
            w, b = z[:dim], z[dim:]
            h = intensity_embed(intensity, w, b).data
            _, gw, gb = intensity_embed_backward(intensity, w, up)
            return float(up @ h), np.concatenate([gw, gb])

        record("intensity_embed", grad_check(fc_in_intensity, [intensity]))
        record("intensity_embed", grad_check(fc_in_params, np.concatenate([weights, bias])))

        tokens = rng.standard_normal((n_tokens, dim))
        ref = rng.standard_normal(dim)

        def att_ref(z):
            out = style_token_attention(z, tokens).embedding.data
            return float(up @ out), style_token_attention_backward(z, tokens, up)[0]

        def att_tokens(z):
            T = z.reshape(n_tokens, dim)
            out = style_token_attention(ref, T).embedding.data
            return float(up @ out), style_token_attention_backward(ref, T, up)[1].ravel()

        record("style_token_attention", grad_check(att_ref, ref))
        record("style_token_attention", grad_check(att_tokens, tokens.ravel()))

        lam = rng.uniform(0.1, 2.0)
        proj = rng.standard_normal((dim, dim)) / np.sqrt(dim)
        x = rng.standard_normal(dim)
        # target kept >= 0.1 away from the prediction so no |.| kink is crossed
        gap = rng.uniform(0.1, 1.0, dim) * rng.choice([-1.0, 1.0], dim)
        content = proj @ x - gap

        def content_head(z):
            loss, g = content_l1(proj @ z, content)
            return loss, proj.T @ g

        def smooth_head(z):
            return float(np.sum(np.tanh(z) * up)), (1 - np.tanh(z) ** 2) * up

        record("grl_content_head", grl_check(content_head, x, lam))
        record("grl_smooth_head", grl_check(smooth_head, x, lam))
    return worst
