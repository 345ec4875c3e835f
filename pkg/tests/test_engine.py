"""Engine primitives: forward values and analytic-vs-numeric gradients."""

import numpy as np
import pytest

from imk.model import engine
from imk.model.engine import Tensor
from imk.model.gradcheck import check_gradients, random_projection_loss


def t64(rng, *shape, requires_grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=requires_grad)


class TestForwardValues:
    def test_softmax_uniform(self):
        p = engine.softmax(Tensor(np.zeros(3))).data
        np.testing.assert_allclose(p, [1 / 3] * 3)

    def test_softmax_spot_value(self):
        p = engine.softmax(Tensor(np.array([np.log(2.0), 0.0, 0.0]))).data
        np.testing.assert_allclose(p, [0.5, 0.25, 0.25], atol=1e-12)

    def test_softmax_shift_invariance(self, rng):
        x = rng.standard_normal((4, 7))
        p1 = engine.softmax(Tensor(x)).data
        p2 = engine.softmax(Tensor(x + 1000.0)).data
        np.testing.assert_allclose(p1, p2, atol=1e-9)
        assert (p1.argmax(-1) == p2.argmax(-1)).all()

    def test_softmax_rows_sum_to_one(self, rng):
        p = engine.softmax(Tensor(rng.standard_normal((5, 31)) * 50)).data
        np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-6)

    def test_sigmoid_extreme_values_stable(self):
        out = engine.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-12)

    def test_cross_entropy_uniform(self):
        logits = Tensor(np.zeros((1, 4)))
        loss = engine.cross_entropy_logits(logits, np.array([2]))
        assert abs(loss.item() - np.log(4.0)) < 1e-12

    def test_cross_entropy_zero_weights(self):
        logits = Tensor(np.zeros((2, 4)), requires_grad=True)
        loss = engine.cross_entropy_logits(logits, np.array([0, 1]), np.zeros(2))
        assert loss.item() == 0.0
        loss.backward()
        assert logits.grad is None

    def test_dtype_preserved_through_ops(self, rng):
        x = Tensor(rng.standard_normal((3, 3)).astype(np.float32))
        y = engine.mul(engine.add(x, 1.0), 0.5)
        assert y.data.dtype == np.float32
        assert engine.gelu(y).data.dtype == np.float32

    def test_no_grad_blocks_taping(self, rng):
        x = Tensor(rng.standard_normal(4), requires_grad=True)
        with engine.no_grad():
            y = engine.tanh(x)
        assert y._parents == ()
        assert not y.requires_grad


class TestOpGradients:
    """Every primitive against central finite differences at float64."""

    def test_elementwise_ops(self, rng):
        for op in (engine.tanh, engine.sigmoid, engine.exp, engine.gelu):
            x = t64(rng, 3, 4)
            check_gradients(random_projection_loss(lambda x=x, op=op: op(x), rng), {"x": x})

    def test_log(self, rng):
        x = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
        check_gradients(random_projection_loss(lambda: engine.log(x), rng), {"x": x})

    def test_add_mul_broadcast(self, rng):
        a = t64(rng, 2, 3, 4)
        b = t64(rng, 4)
        check_gradients(random_projection_loss(lambda: engine.mul(engine.add(a, b), b), rng), {"a": a, "b": b})

    def test_div(self, rng):
        a = t64(rng, 3, 4)
        b = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
        check_gradients(random_projection_loss(lambda: engine.div(a, b), rng), {"a": a, "b": b})

    def test_matmul_2d(self, rng):
        a, b = t64(rng, 3, 5), t64(rng, 5, 2)
        check_gradients(random_projection_loss(lambda: engine.matmul(a, b), rng), {"a": a, "b": b})

    def test_matmul_batched(self, rng):
        a, b = t64(rng, 2, 3, 4, 5), t64(rng, 2, 3, 5, 2)
        check_gradients(random_projection_loss(lambda: engine.matmul(a, b), rng), {"a": a, "b": b})

    def test_matmul_broadcast_rhs(self, rng):
        a, b = t64(rng, 2, 3, 5), t64(rng, 5, 4)
        check_gradients(random_projection_loss(lambda: engine.matmul(a, b), rng), {"a": a, "b": b})

    def test_reductions(self, rng):
        x = t64(rng, 3, 4, 5)
        check_gradients(random_projection_loss(lambda: engine.tsum(x, axis=1), rng), {"x": x})
        check_gradients(random_projection_loss(lambda: engine.tmean(x, axis=(0, 2)), rng), {"x": x})

    def test_shape_ops(self, rng):
        x = t64(rng, 2, 3, 4)
        check_gradients(random_projection_loss(lambda: engine.reshape(x, (6, 4)), rng), {"x": x})
        check_gradients(random_projection_loss(lambda: engine.transpose(x, (2, 0, 1)), rng), {"x": x})
        check_gradients(random_projection_loss(lambda: x[:, 1:3, ::2], rng), {"x": x})

    def test_concat_stack(self, rng):
        a, b = t64(rng, 2, 3), t64(rng, 2, 5)
        check_gradients(random_projection_loss(lambda: engine.concat([a, b], axis=-1), rng), {"a": a, "b": b})
        c, d = t64(rng, 2, 3), t64(rng, 2, 3)
        check_gradients(random_projection_loss(lambda: engine.stack([c, d], axis=1), rng), {"c": c, "d": d})

    def test_softmax_grad(self, rng):
        x = t64(rng, 3, 6)
        check_gradients(random_projection_loss(lambda: engine.softmax(x), rng), {"x": x})

    def test_layer_norm_grad(self, rng):
        x, g, b = t64(rng, 2, 3, 8), t64(rng, 8), t64(rng, 8)
        check_gradients(random_projection_loss(lambda: engine.layer_norm(x, g, b), rng), {"x": x, "g": g, "b": b})

    def test_embedding_grad(self, rng):
        table = t64(rng, 10, 6)
        idx = rng.integers(0, 10, size=(2, 5))
        check_gradients(random_projection_loss(lambda: engine.embedding(table, idx), rng), {"table": table})

    def test_cross_entropy_grad(self, rng):
        logits = t64(rng, 7, 5)
        targets = rng.integers(0, 5, size=7)
        weights = rng.uniform(0, 1, size=7)
        check_gradients(lambda: engine.cross_entropy_logits(logits, targets, weights), {"logits": logits})

    def test_gru_sequence_grad(self, rng):
        H, D = 4, 3
        x = t64(rng, 2, 5, D)
        w, u = t64(rng, D, 3 * H), t64(rng, H, 3 * H)
        b = t64(rng, 3 * H)
        for reverse in (False, True):
            check_gradients(
                random_projection_loss(lambda r=reverse: engine.gru_sequence(x, w, u, b, reverse=r), rng),
                {"x": x, "w": w, "u": u, "b": b},
            )

    def test_gru_sequence_masked_grad(self, rng):
        H, D = 3, 2
        x = t64(rng, 3, 4, D)
        w, u, b = t64(rng, D, 3 * H), t64(rng, H, 3 * H), t64(rng, 3 * H)
        mask = (np.arange(4)[None, :] < np.array([[4], [2], [3]])).astype(float).reshape(3, 4)
        check_gradients(
            random_projection_loss(lambda: engine.gru_sequence(x, w, u, b, step_mask=mask), rng),
            {"x": x, "w": w, "u": u, "b": b},
        )

    def test_dropout_grad(self, rng):
        x = t64(rng, 4, 6)
        drop_rng = np.random.default_rng(0)

        def forward():
            return engine.dropout(x, 0.5, np.random.default_rng(0))

        _ = drop_rng
        check_gradients(random_projection_loss(forward, rng), {"x": x})


class TestGruSequence:
    def test_masked_batch_equals_single(self, rng):
        """Padding plus step masks must reproduce per-sequence results."""
        H, D = 4, 2
        w = Tensor(rng.standard_normal((D, 3 * H)))
        u = Tensor(rng.standard_normal((H, 3 * H)))
        b = Tensor(rng.standard_normal(3 * H))
        seqs = [rng.standard_normal((3, D)), rng.standard_normal((5, D))]
        n = 5
        batch = np.zeros((2, n, D))
        for i, s in enumerate(seqs):
            batch[i, : len(s)] = s
        mask = (np.arange(n)[None, :] < np.array([[3], [5]])).astype(float)
        for reverse in (False, True):
            joint = engine.gru_sequence(Tensor(batch), w, u, b, reverse=reverse, step_mask=mask).data
            for i, s in enumerate(seqs):
                solo = engine.gru_sequence(Tensor(s[None]), w, u, b, reverse=reverse).data
                np.testing.assert_allclose(joint[i, : len(s)], solo[0], atol=1e-12)

    def test_reverse_differs_from_forward(self, rng):
        H, D = 4, 2
        w, u, b = (Tensor(rng.standard_normal(s)) for s in ((D, 3 * H), (H, 3 * H), (3 * H,)))
        x = Tensor(rng.standard_normal((1, 6, D)))
        fwd = engine.gru_sequence(x, w, u, b, reverse=False).data
        bwd = engine.gru_sequence(x, w, u, b, reverse=True).data
        assert not np.allclose(fwd, bwd)

    def test_tracked_and_untracked_paths_bitwise_equal(self, rng):
        H, D = 4, 2
        w = Tensor(rng.standard_normal((D, 3 * H)), requires_grad=True)
        u = Tensor(rng.standard_normal((H, 3 * H)), requires_grad=True)
        b = Tensor(rng.standard_normal(3 * H), requires_grad=True)
        x = Tensor(rng.standard_normal((2, 5, D)))
        tracked = engine.gru_sequence(x, w, u, b).data
        with engine.no_grad():
            untracked = engine.gru_sequence(x, w, u, b).data
        assert (tracked == untracked).all()
