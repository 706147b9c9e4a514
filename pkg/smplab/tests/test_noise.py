import numpy as np
from django.test import TestCase
from numpy.testing import assert_allclose, assert_array_equal

from germanium.tools import assert_equal, assert_is_none, assert_raises, assert_true

from smplab.noise import LineageError, NoiseBundle


class TestNoiseBundle(TestCase):

    @classmethod
    def setUpTestData(cls):
        cls.bundle = NoiseBundle(seed=11, paths=np.arange(10), horizon=1.0, n_steps=8, n_modes=4)

    def test_shapes(self):
        assert_equal(self.bundle.boundary(0).shape, (10, 2))
        assert_equal(self.bundle.modal(0).shape, (10, 4))
        assert_equal(self.bundle.step, 0.125)

    def test_increments_have_variance_h(self):
        bundle = NoiseBundle(seed=1, paths=np.arange(20000), horizon=1.0, n_steps=4, n_modes=2)
        increments = bundle.boundary(2)
        assert_allclose(increments.mean(axis=0), 0.0, atol=0.02)
        assert_allclose(increments.var(axis=0), 0.25, rtol=0.05)

    def test_increments_are_reproducible_and_depend_on_the_step(self):
        again = NoiseBundle(seed=11, paths=np.arange(10), horizon=1.0, n_steps=8, n_modes=4)
        assert_array_equal(again.boundary(3), self.bundle.boundary(3))
        assert_true(np.all(self.bundle.boundary(3) != self.bundle.boundary(4)))

    def test_path_subsets_see_the_same_increments(self):
        assert_array_equal(self.bundle.select([2, 5]).boundary(1), self.bundle.boundary(1)[[2, 5]])
        prefix = NoiseBundle(seed=11, paths=np.arange(5), horizon=1.0, n_steps=8, n_modes=4)
        assert_array_equal(prefix.modal(6), self.bundle.modal(6)[:5])

    def test_coarsened_bundle_sums_fine_increments(self):
        coarse = self.bundle.coarsened(2)
        assert_equal(coarse.n_steps, 4)
        assert_allclose(coarse.boundary(1), self.bundle.boundary(2) + self.bundle.boundary(3))
        assert_allclose(coarse.modal(0), self.bundle.modal(0) + self.bundle.modal(1))
        coarse.check_lineage(self.bundle.coarsened(2))

    def test_truncated_bundle_keeps_leading_modes(self):
        assert_array_equal(self.bundle.truncated(2).modal(5), self.bundle.modal(5)[:, :2])
        with assert_raises(LineageError):
            self.bundle.truncated(5)

    def test_without_distributed_noise(self):
        bundle = NoiseBundle(seed=11, paths=np.arange(3), horizon=1.0, n_steps=2, n_modes=4, distributed=False)
        assert_is_none(bundle.modal(0))

    def test_lineage_errors(self):
        with assert_raises(LineageError):
            self.bundle.coarsened(3)
        other = NoiseBundle(seed=12, paths=np.arange(10), horizon=1.0, n_steps=8, n_modes=4)
        with assert_raises(LineageError):
            self.bundle.check_lineage(other)
        with assert_raises(IndexError):
            self.bundle.boundary(8)
        with assert_raises(ValueError):
            NoiseBundle(seed=1, paths=[], horizon=1.0, n_steps=2, n_modes=2)
