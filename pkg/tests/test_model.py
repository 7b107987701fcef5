import numpy as np
import pytest

from rotapath import autodiff as ad
from rotapath import complexops as cx
from rotapath.kg import KnowledgeGraph, add_inverse_relations
from rotapath.kge import KgeTrainConfig, compose_relations, init_complex_embeddings, init_embeddings
from rotapath.model import (
    QaModel,
    QaModelConfig,
    RotateScaleHead,
    attend_paths,
    combine,
    fuse_path,
    project,
    qa_loss,
    sample_candidates,
    score_view,
)
from rotapath.paths import PathFinder
from rotapath.ppr import Subgraph
from rotapath.text import Vocab, path_token_ids


def small_world():
    base = KnowledgeGraph(
        ["ann", "bob", "cara", "dan", "eve", "acme"],
        ["parent_of", "works_at", "friend_of"],
        [
            (0, 0, 1), (0, 0, 2), (1, 0, 3), (2, 0, 4),
            (1, 1, 5), (4, 1, 5), (0, 2, 4), (3, 2, 0),
        ],
    )
    return add_inverse_relations(base)


def make_model(seed=0, **cfg_kwargs):
    kg = small_world()
    table = init_embeddings(kg, KgeTrainConfig(d=6, seed=seed))
    vocab = Vocab.build(["who is the grandparent of ann"],
                        [kg.relation_text(r) for r in range(kg.n_relations)])
    model = QaModel(table, vocab, QaModelConfig(seed=seed, **cfg_kwargs))
    model.set_relation_texts(kg)
    return kg, table, model


class TestProject:
    def test_zero_weight_heads_give_biases(self):
        rng = np.random.default_rng(0)
        head = RotateScaleHead(4, 3, rng)
        for ffn in (head.theta_ffn, head.m_ffn):
            ffn.lin1.w.data[:] = 0
            ffn.lin2.w.data[:] = 0
            ffn.lin1.b.data[:] = 0
            ffn.lin2.b.data[:] = 0
        rep = project(np.ones(4), head)
        np.testing.assert_array_equal(rep.theta, 0.0)
        np.testing.assert_array_equal(rep.m, 0.0)
        np.testing.assert_array_equal(rep.rep.re, 0.0)
        np.testing.assert_array_equal(rep.rep.im, 0.0)

    def test_pure_rotation_head_unit_modulus(self):
        rng = np.random.default_rng(1)
        head = RotateScaleHead(4, 3, rng, scale_enabled=False)
        rep = project(rng.normal(size=4), head)
        np.testing.assert_allclose(cx.modulus(rep.rep), 1.0, atol=1e-12)

    def test_rep_is_from_polar(self):
        rng = np.random.default_rng(2)
        head = RotateScaleHead(5, 4, rng)
        rep = project(rng.normal(size=5), head)
        want = cx.from_polar(rep.m, rep.theta)
        np.testing.assert_allclose(rep.rep.re, want.re, atol=1e-12)
        np.testing.assert_allclose(rep.rep.im, want.im, atol=1e-12)
        np.testing.assert_allclose(cx.modulus(rep.rep), np.abs(rep.m), atol=1e-12)

    def test_width_mismatch(self):
        head = RotateScaleHead(4, 3, np.random.default_rng(3))
        with pytest.raises(ValueError):
            project(np.ones(5), head)


class TestScoreView:
    def test_exact_match_scores_zero(self):
        rng = np.random.default_rng(4)
        h = cx.ComplexVec(rng.normal(size=3), rng.normal(size=3))
        rep = cx.ComplexVec(rng.normal(size=3), rng.normal(size=3))
        c = cx.hadamard(h, rep)
        assert score_view(h, rep, c) == pytest.approx(0.0, abs=1e-12)

    def test_quarter_rotation_hand_case(self):
        h = cx.ComplexVec(np.array([1.0]), np.array([0.0]))
        rep = cx.ComplexVec(np.array([0.0]), np.array([1.0]))
        c = cx.ComplexVec(np.array([0.0]), np.array([1.0]))
        assert score_view(h, rep, c) == pytest.approx(0.0, abs=1e-12)

    def test_scaling_beats_pure_rotation_for_modulus_gap(self):
        # best unit rotation leaves distance 1; scaling by 2 closes it
        h = cx.ComplexVec(np.array([1.0]), np.array([0.0]))
        c = cx.ComplexVec(np.array([2.0]), np.array([0.0]))
        best_rotation = score_view(h, cx.ComplexVec(np.array([1.0]), np.array([0.0])), c)
        scaled = score_view(h, cx.ComplexVec(np.array([2.0]), np.array([0.0])), c)
        assert best_rotation == pytest.approx(-1.0)
        assert scaled == pytest.approx(0.0)

    def test_always_nonpositive(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            h, rep, c = (cx.ComplexVec(rng.normal(size=4), rng.normal(size=4))
                         for _ in range(3))
            assert score_view(h, rep, c) <= 0


class TestCombine:
    def test_endpoints(self):
        assert combine(-1.0, -2.0, 0.0) == -1.0
        assert combine(-1.0, -2.0, 1.0) == -2.0

    def test_default_lambda_hand_case(self):
        assert combine(-1.0, -2.0, 0.6) == pytest.approx(-1.6)

    def test_absent_path_score_falls_back(self):
        assert combine(-1.5, None, 0.9) == -1.5

    def test_monotone_in_both_arguments(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            sq, sp = -rng.random(2) * 5
            lam = rng.random()
            eps = 0.1
            assert combine(sq + eps, sp, lam) >= combine(sq, sp, lam)
            assert combine(sq, sp + eps, lam) >= combine(sq, sp, lam)

    def test_lambda_out_of_range(self):
        with pytest.raises(ValueError):
            combine(-1.0, -2.0, 1.5)


class TestSampleCandidates:
    def _subgraph(self, n=30):
        return Subgraph(np.arange(n))

    def test_n1_is_the_gold(self):
        out = sample_candidates(self._subgraph(), {7}, 1, seed=0)
        assert out == [7]

    def test_no_duplicates_many_draws(self):
        sub = self._subgraph()
        for seed in range(20):
            out = sample_candidates(sub, {3, 4}, 10, seed=seed)
            assert len(out) == len(set(out)) == 10
            assert out[0] in {3, 4}
            assert not ({3, 4} & set(out[1:]))  # golds never appear as negatives

    def test_deterministic(self):
        sub = self._subgraph()
        assert sample_candidates(sub, {5}, 8, seed=3) == sample_candidates(sub, {5}, 8, seed=3)

    def test_capped_by_subgraph(self):
        out = sample_candidates(self._subgraph(5), {2}, 100, seed=0)
        assert len(out) == 5  # 1 gold + 4 non-gold

    def test_empty_subgraph(self):
        with pytest.raises(ValueError):
            sample_candidates(Subgraph(np.empty(0, dtype=np.int64)), {1}, 3, seed=0)


class TestQaLoss:
    def test_equal_scores_two_candidates(self):
        loss = qa_loss(np.zeros(2), np.zeros(2), 0)
        assert float(loss.data) == pytest.approx(2 * np.log(2))

    def test_dominant_target_drives_loss_to_zero(self):
        sq = np.array([100.0, 0.0, 0.0])
        loss = qa_loss(sq, sq, 0)
        assert float(loss.data) == pytest.approx(0.0, abs=1e-12)

    def test_gradient_is_softmax_minus_onehot(self):
        rng = np.random.default_rng(7)
        sq = ad.Tensor(rng.normal(size=5), requires_grad=True)
        loss = qa_loss(sq, None, 2)
        loss.backward()
        e = np.exp(sq.data - sq.data.max())
        want = e / e.sum()
        want[2] -= 1
        np.testing.assert_allclose(sq.grad, want, rtol=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(8)
        sq = rng.normal(size=6)
        sp = rng.normal(size=6)
        a = float(qa_loss(sq, sp, 1).data)
        b = float(qa_loss(sq + 7.3, sp - 2.1, 1).data)
        assert a == pytest.approx(b, abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            qa_loss(np.zeros(3), np.zeros(4), 0)

    def test_bad_target(self):
        with pytest.raises(ValueError):
            qa_loss(np.zeros(3), None, 5)


class TestFuseAttend:
    def test_zero_parameters_give_zero_vector(self):
        rng = np.random.default_rng(9)
        ffn = ad.Ffn(10, 20, 6, rng)
        for lin in (ffn.lin1, ffn.lin2):
            lin.w.data[:] = 0
            lin.b.data[:] = 0
        out = fuse_path(rng.normal(size=2), cx.ComplexVec(rng.normal(size=4),
                                                          rng.normal(size=4)), ffn)
        np.testing.assert_array_equal(out, 0.0)

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        ffn = ad.Ffn(6, 12, 4, rng)
        p_t = rng.normal(size=2)
        p_l = cx.ComplexVec(rng.normal(size=2), rng.normal(size=2))
        np.testing.assert_array_equal(fuse_path(p_t, p_l, ffn), fuse_path(p_t, p_l, ffn))

    def test_single_path_attention_is_identity(self):
        from rotapath.paths import PathBundle, RelationPath

        rng = np.random.default_rng(11)
        bundle = PathBundle(0, 1, [RelationPath((0,))],
                            textual_reps=[rng.normal(size=4)],
                            hybrid_reps=[rng.normal(size=4)])
        w1 = rng.normal(size=(4, 4))
        w2 = rng.normal(size=(4, 4))
        out = attend_paths(rng.normal(size=4), bundle, w1, w2)
        np.testing.assert_allclose(out, bundle.hybrid_reps[0], atol=1e-12)

    def test_identical_textual_reps_average_evenly(self):
        from rotapath.paths import PathBundle, RelationPath

        rng = np.random.default_rng(12)
        text = rng.normal(size=4)
        h1, h2 = rng.normal(size=4), rng.normal(size=4)
        bundle = PathBundle(0, 1, [RelationPath((0,)), RelationPath((1,))],
                            textual_reps=[text, text], hybrid_reps=[h1, h2])
        out = attend_paths(rng.normal(size=4), bundle,
                           rng.normal(size=(4, 4)), rng.normal(size=(4, 4)))
        np.testing.assert_allclose(out, (h1 + h2) / 2, atol=1e-12)

    def test_weights_simplex_and_convex_hull(self):
        from rotapath.paths import PathBundle, RelationPath

        rng = np.random.default_rng(13)
        texts = [rng.normal(size=5) for _ in range(3)]
        hybrids = [rng.normal(size=5) for _ in range(3)]
        bundle = PathBundle(0, 1, [RelationPath((i,)) for i in range(3)],
                            textual_reps=texts, hybrid_reps=hybrids)
        out = attend_paths(rng.normal(size=5), bundle,
                           rng.normal(size=(5, 5)), rng.normal(size=(5, 5)))
        stacked = np.stack(hybrids)
        assert np.all(out >= stacked.min(axis=0) - 1e-12)
        assert np.all(out <= stacked.max(axis=0) + 1e-12)

    def test_empty_bundle_rejected(self):
        from rotapath.paths import PathBundle

        with pytest.raises(ValueError):
            attend_paths(np.ones(3), PathBundle(0, 1, []), np.eye(3), np.eye(3))


class TestBatchedPathViewMatchesSpecOps:
    """The segment-batched path scoring must reproduce the per-candidate
    composition of the instance-level operations exactly."""

    @pytest.mark.parametrize("seed", [0, 1])
    def test_dual_route_equality(self, seed):
        kg, table, model = make_model(seed=seed)
        finder = PathFinder(kg, 3, 32)
        tokens = model.tokenizer.tokenize("who is the grandparent of ann")
        topic = 3  # dan
        cands = np.array([0, 1, 2, 4, 5])
        with ad.no_grad():
            q_vec = model.encode_question(tokens)
            sp, kept = model.path_scores(tokens, q_vec, topic, cands, finder)
        assert sp is not None
        got = dict(zip([int(cands[i]) for i in kept], sp.data))

        h_vec = table.entity_vec(topic)
        for c, got_score in got.items():
            bundle = finder.bundle(topic, c)
            texts, hybrids = [], []
            for p in bundle.paths:
                ids = path_token_ids(model.tokenizer, tokens,
                                     [model.relation_texts[r] for r in p.steps])
                with ad.no_grad():
                    p_t = model.encoder.encode(ids).data
                p_l = compose_relations(p.steps, table)
                texts.append(p_t)
                hybrids.append(fuse_path(p_t, p_l, model.fuse_ffn))
            bundle.textual_reps = texts
            bundle.hybrid_reps = hybrids
            with ad.no_grad():
                q_np = model.encoder.encode(tokens).data
            attended = attend_paths(q_np, bundle, model.attn_w1, model.attn_w2)
            rep = project(attended, model.p_head)
            want = score_view(h_vec, rep, table.entity_vec(c))
            assert got_score == pytest.approx(want, abs=1e-9)

    def test_question_scores_match_score_view(self):
        kg, table, model = make_model(seed=3)
        tokens = model.tokenizer.tokenize("who is the grandparent of ann")
        cands = np.arange(kg.n_entities)
        with ad.no_grad():
            q_vec = model.encode_question(tokens)
            rep = model.question_rep(q_vec)
            sq = model.question_scores(rep, 0, cands).data
            q_np = model.encode_question(tokens).data
        rep_np = project(q_np, model.q_head)
        for c in cands:
            want = score_view(table.entity_vec(0), rep_np, table.entity_vec(int(c)))
            assert sq[c] == pytest.approx(want, abs=1e-9)

    def test_candidates_without_paths_are_excluded(self):
        kg, _, model = make_model(seed=4)
        finder = PathFinder(kg, 1, 32)  # only direct edges count
        tokens = model.tokenizer.tokenize("who is ann")
        with ad.no_grad():
            q_vec = model.encode_question(tokens)
            sp, kept = model.path_scores(tokens, q_vec, 0, np.array([0, 5]), finder)
        # 0 -> 0 is a self pair (no path); 0 -> 5 (acme) is two hops away
        assert sp is None and kept == []


class TestModelGradients:
    """Central finite differences through the full per-example loss."""

    def _loss_fn(self, model, kg, match_kind):
        from rotapath.config import PipelineConfig
        from rotapath.pipeline import example_loss

        finder = PathFinder(kg, 3, 32)
        tokens = model.tokenizer.tokenize("who is the grandparent of ann")
        cands = np.array([3, 1, 2, 4, 5])
        cfg = PipelineConfig()

        def build():
            return example_loss(model, tokens, 0, cands, finder, cfg)

        return build

    @pytest.mark.parametrize("match_kind", ["rotate_scale", "rotate", "complex"])
    def test_all_parameter_groups(self, match_kind):
        if match_kind == "complex":
            kg = small_world()
            table = init_complex_embeddings(kg, KgeTrainConfig(d=6, seed=5))
            vocab = Vocab.build(["who is the grandparent of ann"],
                                [kg.relation_text(r) for r in range(kg.n_relations)])
            model = QaModel(table, vocab, QaModelConfig(seed=5, match_kind="complex"))
            model.set_relation_texts(kg)
        else:
            kg, _, model = make_model(seed=5, match_kind=match_kind)
        # knock the anchored (zero-weight) output layers off their init so no
        # parameter group sits in a degenerate zero-gradient state
        nudge = np.random.default_rng(99)
        for p in model.params().values():
            p.data += nudge.normal(0, 0.05, size=p.data.shape)
        build = self._loss_fn(model, kg, match_kind)
        loss = build()
        loss.backward()
        rng = np.random.default_rng(6)
        step = 1e-5
        checked = 0
        for name, p in model.params().items():
            if p.grad is None:
                continue
            flat = p.data.reshape(-1)
            gflat = p.grad.reshape(-1)
            idxs = rng.choice(flat.shape[0], size=min(4, flat.shape[0]), replace=False)
            for idx in idxs:
                orig = flat[idx]
                flat[idx] = orig + step
                hi = float(build().data)
                flat[idx] = orig - step
                lo = float(build().data)
                flat[idx] = orig
                fd = (hi - lo) / (2 * step)
                denom = max(abs(fd), abs(gflat[idx]), 1e-6)
                assert abs(fd - gflat[idx]) / denom < 1e-3, f"{name}[{idx}]"
                checked += 1
        assert checked >= 20

    def test_tunable_embeddings_receive_gradients(self):
        kg, _, model = make_model(seed=7, freeze_embeddings=False)
        build = self._loss_fn(model, kg, "rotate_scale")
        loss = build()
        loss.backward()
        assert model.ent_re.grad is not None and np.abs(model.ent_re.grad).sum() > 0
        assert model.rel_phase.grad is not None

    def test_frozen_embeddings_stay_out_of_params(self):
        _, _, model = make_model(seed=8)
        assert "kge.ent_re" not in model.params()
