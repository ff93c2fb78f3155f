import numpy as np
import pytest
from numpy.testing import assert_allclose

from edgecache.core import ConfigError
from edgecache.kwik import KwikConfig, KwikLearner, accuracy_vectors


class TestKwikConfig:
    def test_defaults(self):
        cfg = KwikConfig()
        assert cfg.order == 4 and cfg.alpha1 == 0.5 and cfg.history_cap == 512

    @pytest.mark.parametrize("kwargs", [
        {"order": 0}, {"alpha1": 0.0}, {"alpha2": -1.0}, {"history_cap": 0},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            KwikConfig(**kwargs)


class TestAccuracyVectors:
    def test_covered_direction(self):
        # one strong row along e1: the e1 query is covered with ||q|| = 1/2
        H = np.array([[2.0, 0.0], [0.0, 0.0]])
        q, v = accuracy_vectors(H, np.array([1.0, 0.0]))
        assert_allclose(q, [0.5, 0.0], atol=1e-12)
        assert_allclose(np.linalg.norm(v), 0.0, atol=1e-12)

    def test_uncovered_direction(self):
        H = np.array([[2.0, 0.0], [0.0, 0.0]])
        q, v = accuracy_vectors(H, np.array([0.0, 1.0]))
        assert_allclose(np.linalg.norm(q), 0.0, atol=1e-12)
        assert_allclose(np.linalg.norm(v), 1.0, atol=1e-12)

    def test_identical_rows_shrink_q(self):
        # m copies of the same row h and the query x = h give ||q|| = 1/sqrt(m)
        h = np.array([2.0, 2.0])
        for m in (1, 2, 4, 9):
            H = np.tile(h, (m, 1))
            q, v = accuracy_vectors(H, h)
            assert_allclose(np.linalg.norm(q), 1.0 / np.sqrt(m), rtol=1e-10)
            assert_allclose(np.linalg.norm(v), 0.0, atol=1e-10)

    def test_zero_history_puts_everything_in_v(self):
        H = np.zeros((3, 2))
        x = np.array([0.3, -0.4])
        q, v = accuracy_vectors(H, x)
        assert_allclose(np.linalg.norm(q), 0.0, atol=1e-15)
        assert_allclose(np.linalg.norm(v), 0.5, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            accuracy_vectors(np.zeros((2, 3)), np.zeros(2))


class TestKwikLearner:
    CFG = KwikConfig(order=2, alpha1=0.51, alpha2=0.51)

    def test_warmup_abstains_without_pending(self):
        kw = KwikLearner(2, self.CFG)
        preds, mask = kw.step(np.array([1.0, 2.0]))
        assert np.isnan(preds).all() and not mask.any()
        # warmup abstentions are logged but create no history pairs
        assert kw.abstentions == [(1, 0), (1, 1)]
        kw.step(np.array([1.0, 2.0]))
        assert len(kw._hist_x[0]) == 0

    def test_constant_stream_covered_after_four_rows(self):
        kw = KwikLearner(1, self.CFG)
        trace = [kw.step(np.array([2.0])) for _ in range(8)]
        masks = [bool(m[0]) for _, m in trace]
        assert masks == [False] * 5 + [True] * 3
        for preds, m in trace[5:]:
            assert_allclose(preds[0], 2.0, atol=1e-9)
        # ||q|| = 1/sqrt(rows) on this stream, so coverage needs 4 rows
        assert kw.history(0).shape == (4, 2)

    def test_history_grows_only_on_abstention(self):
        kw = KwikLearner(1, self.CFG)
        for _ in range(20):
            kw.step(np.array([2.0]))
        assert kw.history(0).shape == (4, 2)
        assert [s for s, _ in kw.abstentions] == [1, 2, 3, 4, 5]

    def test_fifo_cap(self):
        cfg = KwikConfig(order=2, alpha1=1e-9, alpha2=1e-9, history_cap=3)
        kw = KwikLearner(1, cfg)
        vals = np.arange(1.0, 13.0)
        for v in vals:
            kw.step(np.array([v]))
        assert kw.history(0).shape == (3, 2)
        # the retained targets are the three most recent completions
        assert_allclose(kw._hist_y[0], [10.0, 11.0, 12.0])
        assert_allclose(kw.history(0)[-1], [11.0, 10.0])  # lag 1 first

    def test_linear_series_predicted_exactly_once_covered(self):
        # y_t = y_{t-1} + (y_{t-1} - y_{t-2}) is inside the sum-one model
        cfg = KwikConfig(order=2, alpha1=5.0, alpha2=0.5)
        kw = KwikLearner(1, cfg)
        covered = []
        for v in np.arange(1.0, 40.0):
            preds, mask = kw.step(np.array([v]))
            if mask[0]:
                covered.append((v + 1.0, preds[0]))
        assert covered, "series never became covered"
        for expect, got in covered:
            assert_allclose(got, expect, atol=1e-6)

    def test_shape_validation(self):
        kw = KwikLearner(3, self.CFG)
        with pytest.raises(ValueError, match="per-file"):
            kw.step(np.array([1.0, 2.0]))
