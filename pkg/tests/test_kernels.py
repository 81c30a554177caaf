"""The numba kernels and their pure-numpy fallbacks must agree bit-for-bit;
both accumulate floating-point taps in the same order by construction."""
import os
import subprocess
import sys

import numpy as np
import pytest

from hirex import _kernels


requires_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba unavailable")


@requires_numba
class TestPathEquivalence:
    def test_bicubic_bit_identical(self, rng):
        src = rng.random((23, 31))
        a = _kernels._np_bicubic(src, 57, 41)
        b = _kernels._nb_bicubic(src, 57, 41)
        assert np.array_equal(a, b)

    def test_conv2_bit_identical(self, rng):
        img = rng.random((19, 17))
        kernel = rng.random((5, 5))
        kernel /= kernel.sum()
        assert np.array_equal(
            _kernels._np_conv2_replicate(img, kernel), _kernels._nb_conv2_replicate(img, kernel)
        )

    def test_morphology_identical(self, rng):
        grid = (rng.random((30, 28)) > 0.6).astype(np.uint8)
        for radius in (1, 2, 3):
            assert np.array_equal(
                _kernels._np_erode(grid, radius), _kernels._nb_erode(grid, radius)
            )
            assert np.array_equal(
                _kernels._np_dilate(grid, radius), _kernels._nb_dilate(grid, radius)
            )

    def test_nms_identical(self, rng):
        mag = rng.random((25, 25))
        dirs = rng.integers(0, 4, size=(25, 25)).astype(np.uint8)
        assert np.array_equal(_kernels._np_nms(mag, dirs), _kernels._nb_nms(mag, dirs))

    def test_hysteresis_identical(self, rng):
        mag = rng.random((30, 30))
        strong = (mag > 0.9).astype(np.uint8)
        weak = mag > 0.6
        a = _kernels._np_hysteresis(strong, weak)
        b = _kernels._nb_hysteresis(strong, weak.astype(np.uint8))
        assert np.array_equal(a, b)


class TestEnvFlag:
    def test_flag_selects_numpy_path(self):
        code = (
            "import hirex._kernels as k;"
            "print(k.USE_NUMBA, k.bicubic is k._np_bicubic)"
        )
        env = dict(os.environ, ADP2_NO_NUMBA="1")
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
        )
        assert out.stdout.split() == ["False", "True"]

    def test_default_prefers_numba_when_available(self):
        if not _kernels.HAS_NUMBA:
            pytest.skip("numba unavailable")
        env = {k: v for k, v in os.environ.items() if k != "ADP2_NO_NUMBA"}
        code = "import hirex._kernels as k; print(k.USE_NUMBA)"
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
        )
        assert out.stdout.strip() == "True"
