"""Behavioural gate for the whole pipeline.

Ten numbered end-to-end guarantees, each reported as its own pass/fail
line in the terminal summary.  The slow ones (6-8) train real models; a
module-scope cache shares runs between criteria so the suite stays well
inside its time budget.
"""

import functools
import time

import numpy as np
import pytest
from scipy.special import erf

import conftest
from test_injector import reference_visible
from test_kg import oracle_query

from kbert.autodiff import Tensor
from kbert.checkpoint import load_checkpoint, save_checkpoint
from kbert.config import Ablation, ModelConfig
from kbert.data import ExampleRecord
from kbert.encoder import encoder_forward, init_params, wrap_params
from kbert.heads import forward_task, init_head
from kbert.injector import NEG_INF, build_trunk, flatten, k_inject, visible_matrix
from kbert.kg import KnowledgeGraph, QueryLimits, Triple, k_query
from kbert.model import KBertModel
from kbert.probe import CELLS, build_clean_probe, build_misleading_probe, run_cell
from kbert.tokenizer import Token, Tokenizer, build_vocab
from kbert.trainer import collate, encode_example, forward_batch

SEEDS = (0, 1, 2, 3, 4)
TIME_BUDGET = 600.0  # seconds per training criterion


def criterion(num: int, desc: str):
    """Record a pass/fail line for the terminal summary."""

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            conftest.ACCEPTANCE_RESULTS[num] = ("FAIL", desc)
            fn(*args, **kwargs)
            conftest.ACCEPTANCE_RESULTS[num] = ("PASS", desc)

        return wrapper

    return deco


# --------------------------------------------------------------------------
# 1. pinned layout of the injected city sentence


@criterion(1, "city sentence reproduces the pinned soft positions and mask cells")
def test_01_city_sentence_layout(city_tokenizer, city_kg):
    trunk = build_trunk(city_tokenizer, "Tim Cook is visiting Beijing now")
    tree = k_inject(trunk, k_query(trunk, city_kg), city_tokenizer)
    seq = flatten(tree)
    m = visible_matrix(seq, tree)
    assert seq.soft_pos == [0, 1, 2, 3, 4, 3, 4, 5, 6, 7, 6, 7, 6]
    assert m[4][9] == NEG_INF  # Apple (branch 1) cannot see China (branch 2)
    assert m[0][4] == NEG_INF  # [CLS] cannot see Apple
    assert m[2][4] == 0.0  # Cook sees its own branch token Apple


# --------------------------------------------------------------------------
# 2. all-zero mask is bit-identical to an encoder with no mask term

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def _plain_layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return (xc * (1.0 / np.sqrt(var + 1e-12))) * g + b


def plain_encoder(h0, params, config):
    """The encoder re-written in plain numpy with no mask anywhere."""
    h = h0
    heads, dk = config.heads, config.d_k
    states = [h0]
    for i in range(config.layers):
        p = f"layer{i}."
        b, n, hidden = h.shape

        def proj(name):
            full = np.matmul(h, params[p + "w" + name]) + params[p + "b" + name]
            return full.reshape(b, n, heads, dk).transpose(0, 2, 1, 3)

        q, k, v = proj("q"), proj("k"), proj("v")
        logits = np.matmul(q, k.transpose(0, 1, 3, 2)) / np.sqrt(float(dk))
        shifted = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=-1, keepdims=True)
        merged = np.matmul(s, v).transpose(0, 2, 1, 3).reshape(b, n, hidden)
        attn = np.matmul(merged, params[p + "wo"]) + params[p + "bo"]
        x = _plain_layer_norm(h + attn, params[p + "ln1_g"], params[p + "ln1_b"])
        pre = np.matmul(x, params[p + "ffn_w1"]) + params[p + "ffn_b1"]
        ff = pre * (0.5 * (1.0 + erf(pre * _INV_SQRT2)))
        ff = np.matmul(ff, params[p + "ffn_w2"]) + params[p + "ffn_b2"]
        h = _plain_layer_norm(x + ff, params[p + "ln2_g"], params[p + "ln2_b"])
        states.append(h)
    return states


@criterion(2, "all-zero mask output is bit-identical to a mask-free encoder, 100 runs")
def test_02_zero_mask_bitwise_equivalence():
    geometries = [(2, 2, 8, 16), (1, 1, 4, 8), (2, 4, 16, 32)]
    for i in range(100):
        rng = np.random.default_rng(1000 + i)
        layers, heads, hidden, d_ff = geometries[i % 3]
        config = ModelConfig(
            layers=layers, heads=heads, hidden=hidden, d_ff=d_ff, max_seq_len=16
        )
        raw = init_params(config, vocab_size=5, seed=2000 + i)
        b = int(rng.integers(1, 4))
        n = int(rng.integers(2, 11))
        h0 = rng.standard_normal((b, n, hidden))
        out, hidden_states = encoder_forward(
            Tensor(h0), np.zeros((n, n)), wrap_params(raw, False), config
        )
        ref_states = plain_encoder(h0, raw, config)
        assert out.data.tobytes() == ref_states[-1].tobytes(), f"instance {i}"
        for layer, (got, want) in enumerate(zip(hidden_states.states, ref_states)):
            assert got.tobytes() == want.tobytes(), f"instance {i}, state {layer}"


# --------------------------------------------------------------------------
# 3. the mask blocks first-order flow but allows the two-hop path


def _chain_mask(n: int) -> np.ndarray:
    m = np.full((n, n), NEG_INF)
    idx = np.arange(n)
    m[idx, idx] = 0.0
    m[idx[:-1], idx[:-1] + 1] = 0.0
    m[idx[1:], idx[1:] - 1] = 0.0
    return m


@criterion(3, "blocked token leaks <=1e-12 after one layer, reaches >1e-8 via two hops")
def test_03_mask_soundness_and_two_hop_reach():
    config = ModelConfig(layers=2, heads=2, hidden=8, d_ff=16, max_seq_len=8)
    for trial in range(10):
        raw = init_params(config, vocab_size=5, seed=300 + trial)
        params = wrap_params(raw, trainable=False)
        rng = np.random.default_rng(400 + trial)
        h = rng.standard_normal((1, 3, 8))
        visible = _chain_mask(3)  # position 0 sees 1, 1 sees 2, 0 never sees 2
        _, base = encoder_forward(Tensor(h), visible, params, config)
        bumped = h.copy()
        bumped[0, 2] += 0.5
        _, moved = encoder_forward(Tensor(bumped), visible, params, config)
        one_layer = np.max(np.abs(base.states[1][0, 0] - moved.states[1][0, 0]))
        two_layer = np.max(np.abs(base.states[2][0, 0] - moved.states[2][0, 0]))
        assert one_layer <= 1e-12, f"trial {trial}: leak {one_layer:.3e}"
        assert two_layer > 1e-8, f"trial {trial}: no reach {two_layer:.3e}"


# --------------------------------------------------------------------------
# 4. analytic gradients vs central finite differences, every parameter


@criterion(4, "gradients match central differences (eps 1e-4) within 1e-4 everywhere")
def test_04_finite_difference_gradients():
    config = ModelConfig(layers=2, heads=2, hidden=8, d_ff=16, max_seq_len=8)
    vocab = build_vocab(["aa bb rel tail"], min_count=1)
    model = KBertModel.init(config, vocab, seed=5)
    head = init_head("classify", ["c0", "c1"], hidden=8, seed=6)
    kg = KnowledgeGraph([Triple("bb", "rel", "tail")])
    enc = encode_example(model, head, ExampleRecord(text="aa bb", label="c0"), kg)
    assert len(enc.ids) == 5  # [CLS] aa bb + injected rel tail
    batch = collate([enc])

    loss, _, params, head_params = forward_batch(model, head, batch, trainable=True)
    loss.backward()
    analytic = {name: t.grad for name, t in {**params, **head_params}.items()}

    def loss_value() -> float:
        l, _, _, _ = forward_batch(model, head, batch, trainable=False)
        return l.data.item()

    eps = 1e-4
    worst = 0.0
    for name, arr in {**model.params, **head.params}.items():
        grad = analytic[name]
        assert grad is not None, f"no gradient reached {name}"
        for idx in np.ndindex(*arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            fp = loss_value()
            arr[idx] = orig - eps
            fm = loss_value()
            arr[idx] = orig
            fd = (fp - fm) / (2.0 * eps)
            a = grad[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            worst = max(worst, rel)
            assert rel <= 1e-4, f"{name}{idx}: analytic {a:.6e} vs fd {fd:.6e} (rel {rel:.2e})"
    assert worst <= 1e-4


# --------------------------------------------------------------------------
# 5. matcher and visible matrix vs exhaustive oracles, 1000 random instances


@criterion(5, "matcher and visible matrix agree with exhaustive oracles on 1000 instances")
def test_05_query_and_mask_oracles():
    alphabet = ["aa", "bb", "cc", "dd", "ee", "ff"]
    extra = ["rr", "ss", "tt", "uu"]
    specials = {"[CLS]", "[SEP]", "[PAD]", "[UNK]", "[MASK]"}
    vocab = build_vocab([" ".join(alphabet + extra)], min_count=1)
    tokenizer = Tokenizer(vocab, "whitespace")
    limits = QueryLimits(8, 64)
    for i in range(1000):
        rng = np.random.default_rng(9000 + i)
        heads = []
        for _ in range(int(rng.integers(1, 5))):
            heads.append(" ".join(rng.choice(alphabet, size=int(rng.integers(1, 3)))))
        heads = list(dict.fromkeys(heads))
        triples = []
        for h in heads:
            for _ in range(int(rng.integers(1, 3))):
                tail = " ".join(rng.choice(extra, size=int(rng.integers(1, 3))))
                triples.append(Triple(h, str(rng.choice(extra)), tail))
        kg = KnowledgeGraph(triples)
        length = int(rng.integers(1, 10))
        surfaces = [str(rng.choice(alphabet + ["[CLS]", "[SEP]"])) for _ in range(length)]
        sent = [Token(vocab.lookup(s), s) for s in surfaces]

        matches = k_query(sent, kg, limits)
        got = [(m.start, m.end, m.entity) for m in matches]
        assert got == oracle_query(surfaces, heads, specials), f"instance {i}"

        tree = k_inject(sent, matches, tokenizer)
        seq = flatten(tree)
        m = visible_matrix(seq, tree)
        n = len(seq)
        for r in range(n):
            for c in range(n):
                want = reference_visible(seq, tree, r, c)
                assert (m[r, c] == 0.0) == want, f"instance {i}: cell ({r}, {c})"
                assert m[r, c] in (0.0, NEG_INF)


# --------------------------------------------------------------------------
# 6-8. ablation probes (runs shared through a module-scope cache)


@pytest.fixture(scope="module")
def probe_cache():
    return {}


def probe_accuracy(cache, probe: str, cell: str, seed: int, epochs: int) -> float:
    key = (probe, cell, seed)
    if key not in cache:
        data_key = (probe, seed)
        if data_key not in cache:
            build = build_misleading_probe if probe == "misleading" else build_clean_probe
            cache[data_key] = build(seed)
        result = run_cell(cache[data_key], CELLS[cell], seed, epochs=epochs)
        cache[key] = result["accuracy"]
    return cache[key]


@criterion(6, "clean probe: branches lift mean accuracy >=20 points; no-graph run sits at chance")
def test_06_clean_probe_lift(probe_cache):
    start = time.time()
    full = [probe_accuracy(probe_cache, "clean", "full", s, 6) for s in SEEDS]
    no_kg = [probe_accuracy(probe_cache, "clean", "no_kg", s, 6) for s in SEEDS]
    elapsed = time.time() - start
    lift = float(np.mean(full)) - float(np.mean(no_kg))
    assert lift >= 0.20, f"lift {lift:.3f} (full {full}, no_kg {no_kg})"
    assert abs(float(np.mean(no_kg)) - 0.25) <= 0.05, f"baseline off chance: {no_kg}"
    assert elapsed <= TIME_BUDGET, f"took {elapsed:.0f}s"


@criterion(7, "misleading probe: graph without the mask loses to no-graph on >=4/5 seeds")
def test_07_misleading_probe_inversion(probe_cache):
    start = time.time()
    no_vm = [
        probe_accuracy(probe_cache, "misleading", "no_visible_matrix", s, 3) for s in SEEDS
    ]
    no_kg = [probe_accuracy(probe_cache, "misleading", "no_kg", s, 3) for s in SEEDS]
    elapsed = time.time() - start
    wins = sum(a < b for a, b in zip(no_vm, no_kg))
    assert wins >= 4, f"only {wins}/5 seeds show the inversion ({no_vm} vs {no_kg})"
    assert elapsed <= TIME_BUDGET, f"took {elapsed:.0f}s"


@criterion(8, "clean probe: soft positions strictly beat flattened positions on the mean")
def test_08_soft_position_advantage(probe_cache):
    start = time.time()
    full = [probe_accuracy(probe_cache, "clean", "full", s, 6) for s in SEEDS]
    hard = [probe_accuracy(probe_cache, "clean", "no_soft_position", s, 6) for s in SEEDS]
    elapsed = time.time() - start
    assert float(np.mean(full)) > float(np.mean(hard)), f"full {full} vs hard {hard}"
    assert elapsed <= TIME_BUDGET, f"took {elapsed:.0f}s"


# --------------------------------------------------------------------------
# 9. switching the graph off reproduces a hand-built plain pipeline exactly


@criterion(9, "use_kg=off logits equal a hand-built no-graph pipeline on 100 sentences")
def test_09_kg_off_equals_plain_pipeline():
    words = [f"w{i:02d}" for i in range(12)]
    config = ModelConfig(layers=2, heads=2, hidden=16, d_ff=32, max_seq_len=32)
    vocab = build_vocab([" ".join(words)], min_count=1)
    model = KBertModel.init(config, vocab, seed=21)
    head = init_head("classify", ["c0", "c1", "c2"], hidden=16, seed=22)
    kg = KnowledgeGraph(
        [Triple("w00", "rel", "w05"), Triple("w01 w02", "rel", "w06"), Triple("w03", "rel", "w07")]
    )
    params = wrap_params(model.params, trainable=False)
    rng = np.random.default_rng(23)
    cls_id = model.tokenizer.special("[CLS]").id
    matched_sentences = 0
    for i in range(100):
        sent_words = [str(w) for w in rng.choice(words, size=int(rng.integers(3, 11)))]
        text = " ".join(sent_words)
        via_switch = forward_task(model, head, text, kg, Ablation(use_kg=False))

        toks = model.tokenizer.tokenize(text)
        matched_sentences += bool(k_query([model.tokenizer.special("[CLS]")] + toks, kg))
        ids = np.array([cls_id] + [t.id for t in toks], dtype=np.int64)
        n = len(ids)
        h0 = (
            model.params["embed.token"][ids] + model.params["embed.position"][np.arange(n)]
        ) + model.params["embed.segment"][np.zeros(n, dtype=np.int64)]
        out, _ = encoder_forward(Tensor(h0[None]), np.zeros((n, n)), params, config)
        logits = (np.matmul(out.data[:, 0, :], head.params["head.w"]) + head.params["head.b"])[0]
        assert np.array_equal(via_switch, logits), f"sentence {i}: {text!r}"
    # the switch must actually be bypassing something on a good share of inputs
    assert matched_sentences >= 30, f"only {matched_sentences} sentences touch the graph"


# --------------------------------------------------------------------------
# 10. checkpoint round trip


@criterion(10, "checkpoint save-load-save is byte-identical and reproduces logits exactly")
def test_10_checkpoint_round_trip(tmp_path):
    config = ModelConfig(layers=2, heads=2, hidden=16, d_ff=32, max_seq_len=32)
    vocab = build_vocab(["aa bb cc dd ee ff"], min_count=1)
    model = KBertModel.init(config, vocab, seed=31)
    head = init_head("classify", ["x", "y"], hidden=16, seed=32)
    sentences = ["aa bb", "cc dd ee", "ff aa cc", "bb", "ee ff aa bb cc"]
    before = [forward_task(model, head, s, None) for s in sentences]

    first = tmp_path / "first.kbt"
    second = tmp_path / "second.kbt"
    save_checkpoint(first, model, head)
    loaded_model, loaded_head = load_checkpoint(first)
    save_checkpoint(second, loaded_model, loaded_head)
    assert first.read_bytes() == second.read_bytes()

    after = [forward_task(loaded_model, loaded_head, s, None) for s in sentences]
    for i, (a, b) in enumerate(zip(before, after)):
        assert np.array_equal(a, b), f"sentence {i}"
