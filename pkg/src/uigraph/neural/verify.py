"""Invariant and gradient-verification suite for the neural kernels.

Each check compares reverse-mode gradients against central finite
differences or asserts a structural identity (fusion identity at init,
resampler shape invariance, softmax row sums, GCN eigenvector property).
The CLI `kernel-check` command runs this suite and fails the process when
any check fails.
"""

from __future__ import annotations

import zlib
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .kernels import GcaBlock, ResamplerBlock, attention, fusion_layer, gca, gcn_forward, layer_norm, resample

GRAD_TOLERANCE = 1e-4

# finite differences perturb by ~1e-5; any relu pre-activation this far
# from zero cannot be pushed across the kink by a probe
RELU_MARGIN = 1e-3


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rand(rng, *shape) -> Tensor:
    return Tensor(rng.normal(0.0, 1.0, size=shape), requires_grad=True)


def _case_elementwise(op_name):
    def build(rng):
        a = _rand(rng, 3, 4)
        return (lambda x: getattr(ad, op_name)(x)), [a]

    return build


def _case_binary(op_name):
    def build(rng):
        a, b = _rand(rng, 3, 4), _rand(rng, 3, 4)
        return (lambda x, y: getattr(ad, op_name)(x, y)), [a, b]

    return build


def _case_matmul(rng):
    a, b = _rand(rng, 3, 4), _rand(rng, 4, 5)
    return (lambda x, y: ad.matmul(x, y)), [a, b]


def _case_power(rng):
    a = _rand(rng, 3, 4)
    return (lambda x: ad.power(x, 3.0)), [a]


def _case_log(rng):
    a = Tensor(rng.uniform(0.5, 3.0, (3, 4)), requires_grad=True)
    return (lambda x: ad.log(x)), [a]


def _case_mean_axis(rng):
    a = _rand(rng, 3, 4)
    return (lambda x: ad.mean_axis(x, axis=-1)), [a]


def _case_softmax(rng):
    # summing a bare softmax gives an identically-zero gradient (rows sum
    # to 1), which finite differences cannot resolve; weight the outputs
    a = _rand(rng, 3, 4)
    w = Tensor(rng.normal(size=(3, 4)))
    return (lambda x: ad.mul(ad.softmax_rows(x), w)), [a]


def _case_concat(rng):
    a, b = _rand(rng, 3, 5), _rand(rng, 4, 5)
    return (lambda x, y: ad.concat_rows(x, y)), [a, b]


def _case_gather(rng):
    a = _rand(rng, 3, 4)
    return (lambda x: ad.gather_rows(x, [0, 2, 2, 1])), [a]


def _case_cross_entropy(rng):
    a = _rand(rng, 3, 4)
    targets = rng.integers(0, 4, size=3)
    return (lambda x: ad.cross_entropy(x, targets)), [a]


def _case_layer_norm(rng):
    x, g, b = _rand(rng, 3, 5), _rand(rng, 5), _rand(rng, 5)
    return (lambda a, gg, bb: layer_norm(a, gg, bb)), [x, g, b]


def _case_attention(rng):
    q, k, v = _rand(rng, 3, 5), _rand(rng, 4, 5), _rand(rng, 4, 5)
    return (lambda a, b, c: attention(a, b, c)), [q, k, v]


def _open_gca(rng, d) -> GcaBlock:
    block = GcaBlock.init(d, rng)
    # open the gates so both delta paths carry gradient
    block.g_attn.data = np.asarray(rng.uniform(0.2, 0.6))
    block.g_ff.data = np.asarray(rng.uniform(-0.6, -0.2))
    return block


def _case_gca(rng):
    d = 5
    block = _open_gca(rng, d)
    ctx, tgt = _rand(rng, 4, d), _rand(rng, 3, d)
    return (lambda c, t: gca(c, t, block)), [ctx, tgt]


def _case_gca_params(rng):
    d = 5
    block = _open_gca(rng, d)
    block.g_attn.requires_grad = True
    block.g_ff.requires_grad = True
    ctx = Tensor(rng.normal(size=(4, d)))
    tgt = Tensor(rng.normal(size=(3, d)))

    def f(*_params):
        return gca(ctx, tgt, block)

    return f, block.params()


def _case_fusion(rng):
    d = 5
    vis, gra = _open_gca(rng, d), _open_gca(rng, d)
    x, z, e = _rand(rng, 4, d), _rand(rng, 3, d), _rand(rng, 4, d)
    return (lambda a, b, c: fusion_layer(a, b, c, vis, gra)), [x, z, e]


def _case_fusion_params(rng):
    # the acceptance case: d=8, gradients w.r.t. every block parameter
    d, m, n = 8, 4, 4
    vis, gra = _open_gca(rng, d), _open_gca(rng, d)
    x = Tensor(rng.normal(size=(n, d)))
    z = Tensor(rng.normal(size=(n, d)))
    e = Tensor(rng.normal(size=(m, d)))

    def f(*_params):
        return fusion_layer(x, z, e, vis, gra)

    return f, vis.params() + gra.params()


def _case_resample(rng):
    d = 5
    block = ResamplerBlock.init(d, rng)
    feats, latents = _rand(rng, 4, d), _rand(rng, 3, d)
    return (lambda a, b: resample(a, b, block)), [feats, latents]


def _case_gcn(rng):
    n, d = 4, 5
    adj = np.ones((n, n)) / n
    weights = [_rand(rng, d, d), _rand(rng, d, d)]
    h = _rand(rng, n, d)
    return (lambda x: gcn_forward(x, Tensor(adj), weights)), [h]


CASE_BUILDERS = {
    "add": _case_binary("add"),
    "sub": _case_binary("sub"),
    "mul": _case_binary("mul"),
    "matmul": _case_matmul,
    "power": _case_power,
    "tanh": _case_elementwise("tanh"),
    "relu": _case_elementwise("relu"),
    "exp": _case_elementwise("exp"),
    "log": _case_log,
    "sum_all": _case_elementwise("sum_all"),
    "mean_axis": _case_mean_axis,
    "softmax_rows": _case_softmax,
    "concat_rows": _case_concat,
    "gather_rows": _case_gather,
    "cross_entropy": _case_cross_entropy,
    "layer_norm": _case_layer_norm,
    "attention": _case_attention,
    "gca": _case_gca,
    "gca_params": _case_gca_params,
    "fusion_layer": _case_fusion,
    "fusion_layer_params": _case_fusion_params,
    "resample": _case_resample,
    "gcn_forward": _case_gcn,
}


def _min_relu_input(fn, inputs) -> float:
    """Smallest |pre-activation| any relu sees during one forward pass."""
    margins: list[float] = []
    orig = ad.relu

    def probe(a):
        if a.data.size:
            margins.append(float(np.abs(a.data).min()))
        return orig(a)

    ad.relu = probe
    try:
        fn(*inputs)
    finally:
        ad.relu = orig
    return min(margins, default=float("inf"))


def build_case(name: str, seed: int):
    """Deterministically draw a test point whose relu inputs clear the margin."""
    builder = CASE_BUILDERS[name]
    salt = zlib.crc32(name.encode())
    for attempt in range(64):
        rng = np.random.default_rng([seed, salt, attempt])
        fn, inputs = builder(rng)
        if name == "relu" or _min_relu_input(fn, inputs) > RELU_MARGIN:
            if name == "relu":
                # check the op itself away from its kink
                if float(np.abs(inputs[0].data).min()) <= RELU_MARGIN:
                    continue
            return fn, inputs
    raise NumericError(f"could not find a kink-free test point for {name}")


def run_kernel_checks(n_seeds: int = 20, break_op: str | None = None) -> list[CheckResult]:
    """Run the full invariant suite; returns one result per check."""
    results: list[CheckResult] = []
    with _maybe_broken(break_op):
        results.extend(_gradient_checks(n_seeds))
    results.append(_fusion_identity_check())
    results.append(_resampler_shape_check())
    results.append(_softmax_rowsum_check())
    results.append(_gcn_regular_graph_check())
    return results


def _gradient_checks(n_seeds: int) -> list[CheckResult]:
    worst: dict[str, float] = {}
    for seed in range(n_seeds):
        for name in CASE_BUILDERS:
            fn, inputs = build_case(name, seed)
            rel = grad_check(fn, inputs)
            worst[name] = max(worst.get(name, 0.0), rel)
    return [
        CheckResult(
            name=f"grad:{name}",
            passed=rel < GRAD_TOLERANCE,
            detail=f"max rel err {rel:.3e}",
        )
        for name, rel in worst.items()
    ]


def _fusion_identity_check() -> CheckResult:
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(10):
        d = 8
        vis = GcaBlock.init(d, rng)
        gra = GcaBlock.init(d, rng)
        e = Tensor(rng.normal(size=(5, d)))
        out = fusion_layer(
            Tensor(rng.normal(size=(6, d))), Tensor(rng.normal(size=(3, d))), e, vis, gra
        )
        ok = ok and np.array_equal(out.data, e.data)
    return CheckResult("fusion_identity_at_init", ok, "bitwise" if ok else "mismatch")


def _resampler_shape_check() -> CheckResult:
    rng = np.random.default_rng(11)
    d, n_latents = 8, 16
    block = ResamplerBlock.init(d, rng)
    latents = Tensor(rng.normal(size=(n_latents, d)))
    ok = True
    for n in (1, 10, 100):
        out = resample(Tensor(rng.normal(size=(n, d))), latents, block)
        ok = ok and out.data.shape == (n_latents, d)
    return CheckResult("resampler_shape_invariance", ok, f"latents {n_latents}")


def _softmax_rowsum_check() -> CheckResult:
    rng = np.random.default_rng(13)
    sums = ad.softmax_rows(Tensor(rng.normal(size=(50, 17)) * 10)).data.sum(axis=1)
    err = float(np.abs(sums - 1.0).max())
    return CheckResult("softmax_row_sums", err < 1e-12, f"max |sum-1| {err:.2e}")


def _gcn_regular_graph_check() -> CheckResult:
    # ring lattices are d-regular; with identity weights and constant
    # features the normalized adjacency has row sums 1, so output == input
    err = 0.0
    for n, k in ((6, 1), (9, 2), (12, 3)):
        adj = np.zeros((n, n))
        for i in range(n):
            for off in range(1, k + 1):
                adj[i, (i + off) % n] = adj[(i + off) % n, i] = 1.0
        deg = adj.sum(axis=1) + 1.0
        norm = (adj + np.eye(n)) / np.sqrt(deg[:, None] * deg[None, :])
        feats = np.ones((n, 3)) * np.array([1.0, -2.0, 0.5])
        out = gcn_forward(Tensor(feats), Tensor(norm), [Tensor(np.eye(3))])
        err = max(err, float(np.abs(out.data - feats).max()))
    return CheckResult("gcn_regular_identity", err < 1e-12, f"max err {err:.2e}")


@contextmanager
def _maybe_broken(op_name: str | None):
    """Scale one op's recorded gradient by 1.01 (harness sensitivity hook)."""
    if op_name is None:
        yield
        return
    if not hasattr(ad, op_name):
        raise ValueError(f"unknown op {op_name!r}")
    orig = getattr(ad, op_name)

    def corrupted(*args, **kwargs):
        out = orig(*args, **kwargs)
        tape = ad._active_tape()
        if tape is not None and tape.entries and tape.entries[-1].output is out:
            entry = tape.entries[-1]
            inner = entry.backward
            tape.entries[-1] = ad.TapeEntry(
                entry.output, entry.inputs, lambda g: inner(g * 1.01)
            )
        return out

    setattr(ad, op_name, corrupted)
    try:
        yield
    finally:
        setattr(ad, op_name, orig)
