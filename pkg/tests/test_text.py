import numpy as np
import pytest

from rotapath import autodiff as ad
from rotapath.text import (
    R_CLOSE,
    R_OPEN,
    SEP,
    TextEncoder,
    Tokenizer,
    Vocab,
    path_token_ids,
    split_text,
)


class TestSplitText:
    def test_punctuation_becomes_tokens(self):
        assert split_text("Who directed [Blade]?") == [
            "who", "directed", "[", "blade", "]", "?"]

    def test_special_tokens_atomic(self):
        assert split_text("<r> directed_by </r>") == ["<r>", "directed_by", "</r>"]

    def test_empty_text(self):
        assert split_text("") == []

    def test_lowercasing(self):
        assert split_text("ALICE Morgan") == ["alice", "morgan"]


class TestVocab:
    def test_specials_first(self):
        v = Vocab()
        assert v.tokens[:4] == ["<unk>", SEP, R_OPEN, R_CLOSE]

    def test_unknown_maps_to_unk(self):
        v = Vocab(["hello"])
        tok = Tokenizer(v)
        ids = tok.tokenize("hello stranger")
        assert ids[0] == v.id_of("hello")
        assert ids[1] == v.unknown_token_id

    def test_build_splits_relation_underscores(self):
        v = Vocab.build(["who directed it"], ["directed_by", "acted_in (reversed)"])
        for word in ("directed", "by", "acted", "in", "(", "reversed", ")"):
            assert word in v.index

    def test_tokenization_deterministic(self):
        v = Vocab.build(["a b c"], [])
        tok = Tokenizer(v)
        assert tok.tokenize("a c b q") == tok.tokenize("a c b q")

    def test_save_load_round_trip(self, tmp_path):
        v = Vocab.build(["alpha beta"], ["gamma_delta"])
        p = tmp_path / "vocab.txt"
        v.save(p)
        v2 = Vocab.load(p)
        assert v2.tokens == v.tokens
        assert v2.index == v.index


class TestEncoder:
    def _enc(self, n_tokens=10, d=6, seed=0):
        return TextEncoder(n_tokens, d, np.random.default_rng(seed))

    def test_single_token_is_its_embedding(self):
        enc = self._enc()
        out = enc.encode([3])
        np.testing.assert_array_equal(out.data, enc.token_emb.data[3])

    def test_repeated_token_average_idempotent(self):
        enc = self._enc()
        np.testing.assert_allclose(enc.encode([5, 5]).data, enc.encode([5]).data)

    def test_permutation_invariance(self):
        enc = self._enc()
        a = enc.encode([1, 2, 3, 4]).data
        b = enc.encode([4, 2, 1, 3]).data
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_output_is_exact_mean(self):
        enc = self._enc()
        ids = [1, 3, 3, 7]
        np.testing.assert_allclose(enc.encode(ids).data,
                                   enc.token_emb.data[ids].mean(axis=0))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            self._enc().encode([])

    def test_output_width_fixed_and_finite(self):
        enc = self._enc(d=9)
        for ids in ([0], [1, 2], list(range(10))):
            out = enc.encode(ids).data
            assert out.shape == (9,)
            assert np.isfinite(out).all()

    def test_gradient_matches_finite_differences(self):
        enc = self._enc(n_tokens=5, d=4, seed=1)
        ids = [0, 2, 2, 4]
        weights = np.random.default_rng(2).normal(size=4)

        def value():
            return float(ad.total(ad.mul(enc.encode(ids), weights)).data)

        out = ad.total(ad.mul(enc.encode(ids), weights))
        out.backward()
        grad = enc.token_emb.grad.copy()
        step = 1e-6
        flat = enc.token_emb.data.reshape(-1)
        gflat = grad.reshape(-1)
        rng = np.random.default_rng(3)
        for idx in rng.choice(flat.shape[0], size=8, replace=False):
            orig = flat[idx]
            flat[idx] = orig + step
            hi = value()
            flat[idx] = orig - step
            lo = value()
            flat[idx] = orig
            fd = (hi - lo) / (2 * step)
            assert abs(fd - gflat[idx]) <= 1e-4 * max(1.0, abs(fd))

    def test_encode_many_matches_single(self):
        enc = self._enc()
        seqs = [[1, 2, 3], [4], [5, 6]]
        flat = [i for s in seqs for i in s]
        offsets = np.cumsum([0] + [len(s) for s in seqs])
        batch = enc.encode_many(np.array(flat), offsets).data
        for row, seq in zip(batch, seqs):
            np.testing.assert_allclose(row, enc.encode(seq).data, atol=1e-15)


class TestPathTokenIds:
    def _tok(self):
        return Tokenizer(Vocab.build(["who directed blade"], ["directed by"]))

    def test_question_sep_then_wrapped_relations(self):
        tok = self._tok()
        q = tok.tokenize("who directed blade")
        ids = path_token_ids(tok, q, ["directed by"])
        v = tok.vocab
        assert ids == q + [v.id_of(SEP), v.id_of(R_OPEN), v.id_of("directed"),
                           v.id_of("by"), v.id_of(R_CLOSE)]

    def test_single_token_question_single_token_relation_is_five(self):
        tok = Tokenizer(Vocab.build(["who"], ["leads"]))
        ids = path_token_ids(tok, tok.tokenize("who"), ["leads"])
        assert len(ids) == 5

    def test_empty_path_rejected(self):
        tok = self._tok()
        with pytest.raises(ValueError):
            path_token_ids(tok, [1], [])
