"""Fast runtime checks: gradient checks on every primitive and the composed
network, QWK against a brute-force oracle, the t-test and one optimizer step."""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate

from gazeaeg import numcore as nc
from gazeaeg.evaluation import paired_ttest_2tailed, qwk
from gazeaeg.model import ModelConfig, collate, forward_batch, init_params, multitask_loss
from gazeaeg.numcore import Tensor, grad_check
from gazeaeg.training import OptimState, rmsprop_step

GRAD_TOL = 1e-4


def primitive_checks(seed: int = 0) -> dict[str, float]:
    """Max relative gradient error of every differentiable primitive."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))
    mask = np.array([[1, 1, 0, 1], [1, 0, 0, 0], [1, 1, 1, 1]], dtype=bool)
    seq = rng.normal(size=(2, 5, 3))
    smask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], dtype=bool)
    k = Tensor(rng.normal(size=(5, 3, 4)) * 0.5)
    kb = Tensor(rng.normal(size=4))
    wx, wh, lb = (Tensor(rng.normal(size=s) * 0.5) for s in [(3, 16), (4, 16), (16,)])
    aw, av = Tensor(rng.normal(size=(3, 6))), Tensor(rng.normal(size=6))
    emb_idx = np.array([[0, 2, 1], [2, 2, 0]])
    drop_rng = lambda: np.random.default_rng(7)  # noqa: E731
    target = rng.uniform(size=(3, 4))
    checks = {
        "add": (lambda t: nc.tsum(nc.tanh(nc.add(t, Tensor(w[:, 0])))), x),
        "add_broadcast": (lambda t: nc.tsum(nc.tanh(nc.add(Tensor(x), t))), w[:, 0]),
        "sub": (lambda t: nc.tsum(nc.tanh(nc.sub(1.0, t))), x),
        "mul": (lambda t: nc.tsum(nc.mul(t, t)), x),
        "matmul": (lambda t: nc.tsum(nc.tanh(nc.matmul(t, Tensor(w)))), x),
        "reshape": (lambda t: nc.tsum(nc.mul(nc.reshape(t, (2, 6)), Tensor(np.arange(12.0).reshape(2, 6)))), x),
        "sum_axis": (lambda t: nc.tsum(nc.mul(nc.tsum(t, axis=0), nc.tsum(t, axis=0))), x),
        "getitem": (lambda t: nc.tsum(nc.mul(t[:, 1:3], t[:, 1:3])), x),
        "concat": (lambda t: nc.tsum(nc.tanh(nc.concat([t, nc.mul(t[:1], 3.0)], axis=0))), x),
        "stack": (lambda t: nc.tsum(nc.tanh(nc.stack([t, nc.mul(t, 2.0)], axis=1))), x),
        "sigmoid": (lambda t: nc.tsum(nc.sigmoid(nc.sigmoid(t))), x),
        "tanh": (lambda t: nc.tsum(nc.tanh(nc.mul(t, 0.7))), x),
        "relu": (lambda t: nc.tsum(nc.mul(nc.relu(t), t)), x),
        "embed": (lambda t: nc.tsum(nc.tanh(nc.embed(t, emb_idx))), x),
        "masked_softmax": (lambda t: nc.tsum(nc.mul(nc.masked_softmax(t, mask), Tensor(target))), x),
        "dropout": (lambda t: nc.tsum(nc.tanh(nc.dropout(t, 0.5, True, drop_rng()))), x),
        "mse": (lambda t: nc.mse(nc.sigmoid(t), target, mask), x),
        "conv1d_same": (lambda t: nc.tsum(nc.tanh(nc.conv1d_same(t, k, kb))), seq),
        "lstm_seq": (lambda t: nc.tsum(nc.lstm_seq(t, wx, wh, lb, smask)), seq),
        "lstm_wx": (lambda t: nc.tsum(nc.tanh(nc.lstm_seq(Tensor(seq), t, wh, lb, smask))), wx.data),
        "lstm_wh": (lambda t: nc.tsum(nc.tanh(nc.lstm_seq(Tensor(seq), wx, t, lb, smask))), wh.data),
        "lstm_b": (lambda t: nc.tsum(nc.tanh(nc.lstm_seq(Tensor(seq), wx, wh, t, smask))), lb.data),
        "attention_pool": (lambda t: nc.tsum(nc.tanh(nc.attention_pool(t, aw, av, smask)[0])), seq),
    }
    return {name: grad_check(f, x0) for name, (f, x0) in checks.items()}


def toy_model(seed: int = 0, gaze: bool = True):
    """A two-sentence essay and a miniature network sharing the production code path."""
    from gazeaeg.textprep import EncodedEssay

    # low dropout: at 0.5 the three-unit essay vector loses most units and the LSTM
    # gradients shrink to the round-off floor of the central differences
    cfg = ModelConfig(embed_dim=4, cnn_kernel=3, cnn_filters=3, lstm_hidden=3, attention_dim=3,
                      dropout_rate=0.1, gaze_enabled=gaze)
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-1.0, 1.0, size=(6, 4))
    emb[0] = 0.0
    params = init_params(cfg, emb, seed)
    # fan-in scaled weights keep every pre-activation O(1)
    for k, v in params.items():
        if k == "embedding":
            continue
        if v.ndim == 1:
            params[k] = v + rng.normal(scale=0.3, size=v.shape)
        else:
            params[k] = rng.normal(scale=1 / np.sqrt(np.prod(v.shape[:-1])), size=v.shape)
    grid = np.array([[2, 3, 4, 0], [5, 1, 0, 0], [0, 0, 0, 0]])
    tmask = grid > 0
    gt = rng.uniform(size=(5, 3, 4)) * tmask
    enc = EncodedEssay(1, 3, 2, grid, tmask.any(axis=1), tmask, 0.7, (3, 2),
                       gaze_targets=gt, gaze_mask=tmask.copy())
    return cfg, params, enc


def network_check(seed: int = 0) -> dict[str, float]:
    """Gradient check of the full training loss w.r.t. every parameter tensor."""
    cfg, params, enc = toy_model(seed)
    batch = collate([enc], trim=False)
    errors = {}
    for name in params:
        def f(t, name=name):
            if name == "embedding":
                # the padding row is frozen at zero, so only the other rows are free
                t = nc.concat([Tensor(np.zeros((1, t.shape[1]))), t])
            p = {k: (t if k == name else Tensor(v)) for k, v in params.items()}
            pred = forward_batch(p, batch, cfg, train=True, rng=np.random.default_rng(3))
            return multitask_loss(pred, batch, cfg)[0]
        x0 = params[name][1:] if name == "embedding" else params[name]
        errors[name] = grad_check(f, x0)
    return errors


def _qwk_bruteforce(gold, pred, lo, hi) -> float:
    cats = range(lo, hi + 1)
    n = len(gold)
    num = sum((g - p) ** 2 for g, p in zip(gold, pred))
    hg = {c: sum(1 for g in gold if g == c) for c in cats}
    hp = {c: sum(1 for p in pred if p == c) for c in cats}
    den = sum(hg[i] * hp[j] * (i - j) ** 2 for i, j in itertools.product(cats, cats)) / n
    return 1.0 if den == 0 else 1.0 - num / den


def run_selftest() -> list[tuple[str, bool, str]]:
    out = []
    prim = primitive_checks()
    worst = max(prim, key=prim.get)
    out.append(("primitive gradients", prim[worst] <= GRAD_TOL, f"worst {worst} {prim[worst]:.2e}"))
    net = network_check()
    worst = max(net, key=net.get)
    out.append(("network gradients", net[worst] <= GRAD_TOL, f"worst {worst} {net[worst]:.2e}"))

    rng = np.random.default_rng(1)
    err = 0.0
    for _ in range(200):
        n, hi = int(rng.integers(2, 60)), int(rng.integers(1, 12))
        g, p = rng.integers(0, hi + 1, n), rng.integers(0, hi + 1, n)
        err = max(err, abs(qwk(g, p, 0, hi) - _qwk_bruteforce(list(g), list(p), 0, hi)))
    out.append(("qwk oracle", err <= 1e-12, f"max abs diff {err:.1e}"))

    t, p = paired_ttest_2tailed([1, 2, 3], [0, 0, 0])
    pdf = lambda s: math.gamma(1.5) / (math.sqrt(2 * math.pi) * math.gamma(1.0)) * (1 + s * s / 2) ** -1.5  # noqa: E731
    p_quad = 2 * integrate.quad(pdf, abs(t), np.inf)[0]
    out.append(("paired t-test", abs(t - 2 * math.sqrt(3)) < 1e-12 and abs(p - p_quad) < 1e-8,
                f"t={t:.4f} p={p:.4f}"))

    theta, _ = rmsprop_step({"x": np.zeros(1)}, {"x": np.ones(1)}, OptimState.fresh({"x": np.zeros(1)}))
    expect = -0.001 / math.sqrt(0.1 + 1e-8)
    out.append(("rmsprop step", abs(theta["x"][0] - expect) < 1e-15, f"theta={theta['x'][0]:.7f}"))
    return out
