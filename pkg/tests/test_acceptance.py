"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The end-to-end criteria (5 to 10) share training runs through module-scoped
fixtures; together they take roughly ten minutes on one core.
"""

import itertools
import math
import time

import numpy as np
import pytest

from oracles import loop_mha
from specmix import eea
from specmix.diffcore import MultiHeadAttention, Tensor, multi_head_attention
from specmix.diffcore import tensor as T
from specmix.diffcore.gradcheck import check_gradients
from specmix.fsnet import AbundancePredictor, AttentionNeighborhood, SignaturePredictor
from specmix.geometry import PcaProjection, pca_fit, simplex_volume
from specmix.metrics import evaluate, match_endmembers, sad_per_endmember
from specmix.scene import NoiseSpec, SceneConfig, add_noise, synth_scene
from specmix.trainer import TrainConfig, unmix

SEEDS = (0, 1, 2)
GRAD_TOL = 1e-4


# criterion 1: gradients ------------------------------------------------------


def _w(rng, out):
    return Tensor(rng.normal(size=out.shape))


def _op_cases():
    def unary(fn, shape=(3, 4), prep=None):
        def case(rng):
            x = rng.normal(size=shape)
            if prep:
                x = prep(x)
            w = _w(rng, fn(Tensor(x)))
            return (lambda a: T.sum_(T.mul(fn(a), w))), [x]

        return case

    def binary(fn, sa=(3, 4), sb=(3, 4)):
        def case(rng):
            a, b = rng.normal(size=sa), rng.normal(size=sb)
            w = _w(rng, fn(Tensor(a), Tensor(b)))
            return (lambda x, y: T.sum_(T.mul(fn(x, y), w))), [a, b]

        return case

    def away_from_kink(x):
        x[np.abs(x) < 0.05] = 0.3
        return x

    def det_case(rng):
        n = int(rng.integers(1, 5))
        return T.det, [rng.normal(size=(n, n)) + 2 * np.eye(n)]

    def attention_case(rng):
        q, k, v = rng.normal(size=(2, 3)), rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
        w = rng.normal(size=(2, 2))
        return (lambda a, b, c: T.sum_(T.mul(T.attention(a, b, c)[0], Tensor(w)))), [q, k, v]

    def mha_case(rng):
        heads = int(rng.integers(1, 3))
        d = 2 * heads
        arrays = [rng.normal(size=(2, d)), rng.normal(size=(3, d))] + [rng.normal(size=(d, d)) for _ in range(4)]
        w = rng.normal(size=(2, d))

        def f(q, kv, wq, wk, wv, wo):
            return T.sum_(T.mul(multi_head_attention(q, kv, kv, wq, wk, wv, wo, heads), Tensor(w)))

        return f, arrays

    def volume_case(rng):
        M = int(rng.integers(2, 5))
        proj = pca_fit(rng.normal(size=(5, 40)), M - 1)
        return (lambda s: simplex_volume(s, proj)), [rng.normal(size=(5, M))]

    return {
        "add": binary(lambda a, b: T.add(a, T.getitem(b, 0))),
        "sub": binary(T.sub),
        "mul": binary(T.mul),
        "div": binary(lambda a, b: T.div(a, T.add(T.square(b), 0.5))),
        "matmul": binary(lambda a, b: T.matmul(a, T.transpose(b))),
        "batched_matmul": binary(T.matmul, (2, 3, 4), (4, 5)),
        "concat": binary(lambda a, b: T.concat([a, b], axis=0)),
        "stack": binary(lambda a, b: T.stack([a, b], axis=1)),
        "square": unary(T.square),
        "sqrt": unary(lambda a: T.sqrt(T.add(T.square(a), 0.5))),
        "exp": unary(T.exp),
        "log": unary(lambda a: T.log(T.add(T.square(a), 0.1))),
        "power": unary(lambda a: T.power(T.add(T.square(a), 0.2), 1.5)),
        "relu": unary(T.relu, prep=away_from_kink),
        "abs": unary(T.abs_, prep=away_from_kink),
        "arccos": unary(T.arccos, prep=lambda x: 0.9 * np.tanh(x)),
        "softmax": unary(lambda a: T.softmax(a, axis=-1)),
        "transpose": unary(T.transpose),
        "reshape": unary(lambda a: T.reshape(a, (-1,))),
        "getitem": unary(lambda a: T.getitem(a, (slice(None), [0, 0, 1]))),
        "mean": unary(lambda a: T.mean(a, axis=0)),
        "sum": unary(lambda a: T.sum_(a, axis=1, keepdims=True)),
        "det": det_case,
        "attention": attention_case,
        "multi_head_attention": mha_case,
        "simplex_volume": volume_case,
    }


def _network_cases():
    L, M, n_nbr, n_eea = 6, 2, 3, 2

    def an_case(rng):
        y, eta = rng.normal(size=(2, L)), rng.normal(size=(2, n_nbr, L))
        ws = [rng.uniform(-0.5, 0.5, size=(L, L)) for _ in range(4)]

        def f(y, eta, *w):
            an = AttentionNeighborhood(L)
            an.mha = MultiHeadAttention(*w, heads=3)
            return T.mean(T.square(an(y, eta)))

        return f, [y, eta, *ws]

    def ap_case(rng):
        ap = AbundancePredictor(L, M, rng, heads=2)
        names = list(ap.named_parameters())
        target = rng.dirichlet(np.ones(M), size=3)

        def f(x, *arrays):
            net = AbundancePredictor.from_state({**dict(zip(names, arrays)), "meta.ap.heads": 2})
            return T.mean(T.square(T.sub(net(x), target)))

        return f, [rng.normal(size=(3, L)), *(p.data for p in ap.named_parameters().values())]

    def sp_case(rng):
        sp = SignaturePredictor(rng.uniform(size=(M, n_eea, L)), rng, heads=2)
        sp.expand_heads()
        for p in sp.phi_parameters():  # move off the identity so every path is exercised
            p.data += 0.1 * rng.normal(size=p.shape)
        names = list(sp.named_parameters())
        w = Tensor(rng.normal(size=(L, M)))
        meta = {"sp.groups": sp.groups, "meta.sp.heads": 2, "meta.sp.target_heads": 2}

        def f(*arrays):
            return T.sum_(T.mul(SignaturePredictor.from_state({**dict(zip(names, arrays)), **meta})(), w))

        return f, [p.data for p in sp.named_parameters().values()]

    return {"AN": an_case, "AP": ap_case, "SP": sp_case}


def test_criterion_1_gradient_suite(verdict):
    cases = {**_op_cases(), **_network_cases()}
    names = sorted(cases)
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for trial in range(100):
        name = names[trial % len(names)]
        fn, arrays = cases[name](rng)
        err = check_gradients(fn, arrays)
        worst = max(worst, err)
        if not err < GRAD_TOL:
            failures.append((name, err))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30.0
    verdict(1, ok, f"100 trials over {len(names)} ops/networks, worst rel err {worst:.2e}, {elapsed:.1f} s, failures {failures}")


# criterion 2: attention oracle -----------------------------------------------


def test_criterion_2_attention_oracle(verdict):
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(200):
        heads = int(rng.integers(1, 3))
        d_model = int(rng.integers(1, 9))
        dk = int(rng.integers(1, 8 // heads + 1))
        dv = int(rng.integers(1, 8 // heads + 1))
        nq, nk = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        q, k, v = (rng.normal(size=(n, d_model)) for n in (nq, nk, nk))
        wq, wk = rng.normal(size=(d_model, heads * dk)), rng.normal(size=(d_model, heads * dk))
        wv, wo = rng.normal(size=(d_model, heads * dv)), rng.normal(size=(heads * dv, d_model))
        got = multi_head_attention(q, k, v, wq, wk, wv, wo, heads).data
        want = loop_mha(q, k, v, wq, wk, wv, wo, heads)
        worst = max(worst, float(np.max(np.abs(got - want))))
    verdict(2, worst <= 1e-10, f"200 instances, max abs diff {worst:.2e}")


# criterion 3: simplex volume -------------------------------------------------


def _leibniz_det(A):
    n = len(A)
    total = 0.0
    for perm in itertools.permutations(range(n)):
        sign = (-1) ** sum(perm[i] > perm[j] for i in range(n) for j in range(i + 1, n))
        total += sign * math.prod(A[i][p] for i, p in enumerate(perm))
    return total


def test_criterion_3_simplex_volume(verdict):
    rng = np.random.default_rng(303)
    problems = []
    triangle = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [4.0, 4.0, 4.0]])
    axis = PcaProjection(mean=np.zeros(3), basis=np.eye(3)[:2])
    if abs(simplex_volume(triangle, axis) - 0.5) > 1e-15:
        problems.append("triangle")
    worst_rel, worst_grad = 0.0, 0.0
    for M in (2, 3, 4):
        proj = pca_fit(rng.normal(size=(6, 60)), M - 1)
        for _ in range(20):
            S = rng.normal(size=(6, M))
            Z = proj.basis @ (S - proj.mean[:, None])
            want = abs(_leibniz_det(np.vstack([np.ones(M), Z]).tolist())) / math.factorial(M - 1)
            got = simplex_volume(S, proj)
            worst_rel = max(worst_rel, abs(got - want) / max(want, 1e-300))
            for perm in itertools.permutations(range(M)):
                if simplex_volume(S[:, perm], proj) != got:
                    problems.append(f"permutation M={M}")
                    break
        worst_grad = max(worst_grad, check_gradients(lambda s: simplex_volume(s, proj), [rng.normal(size=(6, M))]))
    ok = not problems and worst_rel < 1e-10 and worst_grad < GRAD_TOL
    verdict(3, ok, f"max rel diff vs Leibniz {worst_rel:.1e}, grad err {worst_grad:.1e}, issues {problems or 'none'}")


# criterion 4: EEA recovery ---------------------------------------------------


def test_criterion_4_eea_recovery(verdict):
    img, truth = synth_scene(3, 50, 30, 30, seed=5, config=SceneConfig(pure_pixels=True))
    parts, ok = [], True
    for name in eea.ALGORITHMS:
        t0 = time.perf_counter()
        found = eea.extract(img.data, 3, name, seed=0)
        elapsed = time.perf_counter() - t0
        sad = sad_per_endmember(found.signatures, truth.signatures, match_endmembers(found.signatures, truth.signatures))[0]
        ok &= bool(sad.max() < 0.05) and elapsed < 10.0
        parts.append(f"{name} max SAD {sad.max():.1e} in {elapsed:.2f} s")
    verdict(4, ok, "; ".join(parts))


# criteria 5 to 10: shared end-to-end runs ------------------------------------


def _cfg(seed, **kw):
    return TrainConfig(param_seed=seed, shuffle_seed=seed + 100, eea_seed=seed + 200, **kw)


class Runs:
    """Lazily trains and caches end-to-end runs on the criterion-5 scene."""

    def __init__(self):
        self.img, self.truth = synth_scene(4, 50, 40, 40, seed=0)
        self.cache = {}

    def get(self, key, seed, eeas=eea.ALGORITHMS, snr=None, **kw):
        if (key, seed) not in self.cache:
            img = self.img if snr is None else add_noise(self.img, NoiseSpec(snr, seed))
            t0 = time.perf_counter()
            result = unmix(img, 4, _cfg(seed, **kw), eeas=eeas)
            elapsed = time.perf_counter() - t0
            score = evaluate(result.signatures, result.abundances, self.truth.signatures, self.truth.abundances)
            self.cache[(key, seed)] = (result, score, elapsed)
        return self.cache[(key, seed)]


@pytest.fixture(scope="module")
def runs():
    return Runs()


@pytest.mark.slow
def test_criterion_5_end_to_end(runs, verdict):
    result, score, elapsed = runs.get("all", 0)
    rep = result.report
    traces = (len(rep.an_loss), len(rep.stage1_loss), len(rep.stage2_loss))
    ok = score.sad_avg <= 0.10 and score.rmse_avg <= 0.20 and elapsed <= 600 and traces == (50, 300, 100)
    verdict(5, ok, f"avg SAD {score.sad_avg:.4f} (<= 0.10), avg RMSE {score.rmse_avg:.4f} (<= 0.20), {elapsed:.0f} s, trace lengths {traces}")


@pytest.mark.slow
def test_criterion_6_ensemble_fusion(runs, verdict):
    med = {}
    for name in ("all", *eea.ALGORITHMS):
        eeas = eea.ALGORITHMS if name == "all" else (name,)
        med[name] = float(np.median([runs.get(name, s, eeas=eeas)[1].rmse_avg for s in SEEDS]))
    ok = all(med["all"] <= med[n] for n in eea.ALGORITHMS)
    verdict(6, ok, "median avg RMSE " + ", ".join(f"{k} {v:.5f}" for k, v in med.items()))


@pytest.mark.slow
def test_criterion_7_training_stages(runs, verdict):
    both = runs.get("all", 0)[1].rmse_avg
    s1 = runs.get("stage1", 0, epochs_stage2=0)[1].rmse_avg
    s2 = runs.get("stage2", 0, epochs_stage1=0)[1].rmse_avg
    verdict(7, both <= s1 <= s2, f"avg RMSE stage1+2 {both:.4f}, stage1 only {s1:.4f}, stage2 only {s2:.4f}")


@pytest.mark.slow
def test_criterion_8_noise_robustness(runs, verdict):
    pairs = [(runs.get("all", s)[1].rmse_avg, runs.get("snr20", s, snr=20.0)[1].rmse_avg) for s in SEEDS]
    ok = all(noisy <= 3 * clean for clean, noisy in pairs)
    verdict(8, ok, "RMSE clean->20 dB " + ", ".join(f"{c:.4f}->{n:.4f}" for c, n in pairs))


@pytest.mark.slow
def test_criterion_9_abundance_constraints(runs, verdict):
    assert runs.cache, "criteria 5-8 produced no runs"
    worst_sum, worst_min = 0.0, np.inf
    for result, _, _ in runs.cache.values():
        A = result.abundances
        worst_sum = max(worst_sum, float(np.max(np.abs(A.sum(axis=0) - 1.0))))
        worst_min = min(worst_min, float(A.min()))
    ok = worst_sum <= 1e-6 and worst_min >= 0.0
    verdict(9, ok, f"{len(runs.cache)} runs, max |sum-1| {worst_sum:.1e}, min abundance {worst_min:.1e}")


@pytest.mark.slow
def test_criterion_10_determinism(runs, verdict):
    first = runs.get("all", 0)[0]
    again = unmix(runs.img, 4, _cfg(0))
    same = (
        np.array_equal(first.abundances, again.abundances)
        and np.array_equal(first.signatures, again.signatures)
        and all(
            getattr(first.report, k) == getattr(again.report, k)
            for k in ("an_loss", "stage1_loss", "stage2_loss", "stage2_volume", "control_volume")
        )
    )
    verdict(10, same, "repeat run " + ("bit-identical" if same else "differs") + " in abundances, signatures and loss traces")
