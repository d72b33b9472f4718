import itertools
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from schrochaos import _fallback, backend


def have_compiled():
    try:
        from schrochaos import _kernels  # noqa: F401
        return True
    except ImportError:
        return False


compiled = pytest.mark.skipif(not have_compiled(), reason="compiled backend absent")


def random_scaled(rng, n):
    w = rng.uniform(0.05, 1.0, size=(n, n))
    w /= w.max(axis=1, keepdims=True)
    return w


def brute_permanent(w):
    n = w.shape[0]
    return sum(
        math.prod(w[i, s[i]] for i in range(n))
        for s in itertools.permutations(range(n))
    )


def brute_numerator(w, eta):
    # sum over sigma of weight(sigma) times sum_i eta[i, sigma_i]
    n = w.shape[0]
    total = 0.0
    for s in itertools.permutations(range(n)):
        weight = math.prod(w[i, s[i]] for i in range(n))
        total += weight * sum(eta[i, s[i]] for i in range(n))
    return total


class TestFallback:
    @pytest.mark.parametrize("n", [1, 2, 3, 5, 7])
    def test_permanent_against_enumeration(self, rng, n):
        w = random_scaled(rng, n)
        assert math.isclose(
            _fallback.permanent_scaled(w), brute_permanent(w), rel_tol=1e-11
        )

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_sweep_against_enumeration(self, rng, n):
        w = random_scaled(rng, n)
        eta = rng.normal(size=(n, n))
        per, num = _fallback.value_and_numerator(w, eta * w)
        assert math.isclose(per, brute_permanent(w), rel_tol=1e-11)
        assert math.isclose(num, brute_numerator(w, eta), rel_tol=1e-10, abs_tol=1e-12)

    def test_minors_against_enumeration(self, rng):
        n = 5
        w = random_scaled(rng, n)
        minors = _fallback.minors_matrix(w)
        for i in range(n):
            for j in range(n):
                sub = np.delete(np.delete(w, i, axis=0), j, axis=1)
                assert math.isclose(minors[i, j], brute_permanent(sub), rel_tol=1e-10)

    def test_block_splitting_unchanged(self, rng):
        # a matrix bigger than one subset block exercises the block loop
        n = 15
        w = random_scaled(rng, n)
        ones = np.ones((n, n))
        assert math.isclose(
            _fallback.permanent_scaled(ones), math.factorial(n), rel_tol=1e-9
        )
        per, _ = _fallback.value_and_numerator(w, w)
        assert math.isclose(per, _fallback.permanent_scaled(w), rel_tol=1e-11)


@compiled
class TestCompiledAgreesWithFallback:
    @pytest.mark.parametrize("n", [1, 2, 5, 9, 12])
    def test_permanent(self, rng, n):
        from schrochaos import _kernels

        w = random_scaled(rng, n)
        a = _kernels.permanent_scaled(w)
        b = _fallback.permanent_scaled(w)
        # summation order differs, so rounding drift grows with 2^n terms
        assert math.isclose(a, b, rel_tol=1e-10)

    @pytest.mark.parametrize("n", [2, 6, 10])
    def test_sweep(self, rng, n):
        from schrochaos import _kernels

        w = random_scaled(rng, n)
        eta = rng.normal(size=(n, n))
        pa, na = _kernels.value_and_numerator(w, eta * w)
        pb, nb = _fallback.value_and_numerator(w, eta * w)
        assert math.isclose(pa, pb, rel_tol=1e-12)
        assert math.isclose(na, nb, rel_tol=1e-11, abs_tol=1e-13)

    @pytest.mark.parametrize("n", [2, 5, 8])
    def test_minors(self, rng, n):
        from schrochaos import _kernels

        w = random_scaled(rng, n)
        np.testing.assert_allclose(
            _kernels.minors_matrix(w), _fallback.minors_matrix(w), rtol=1e-11
        )


class TestSelection:
    def test_active_backend_exposes_contract(self):
        assert backend.NAME in ("c", "python")
        assert callable(backend.permanent_scaled)
        assert callable(backend.value_and_numerator)
        assert callable(backend.minors_matrix)

    def test_env_forces_python(self):
        # selection happens at import, so probe it in a fresh interpreter
        code = "import schrochaos.backend as b; print(b.NAME)"
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={**os.environ, "SCHRO_CHAOS_BACKEND": "python"},
            capture_output=True,
            text=True,
            check=True,
        )
        assert out.stdout.strip() == "python"

    def test_env_rejects_unknown(self):
        code = "import schrochaos.backend"
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={**os.environ, "SCHRO_CHAOS_BACKEND": "fortran"},
            capture_output=True,
            text=True,
        )
        assert out.returncode != 0
        assert "SCHRO_CHAOS_BACKEND" in out.stderr

    def test_thread_count(self, monkeypatch):
        monkeypatch.delenv("SCHRO_CHAOS_THREADS", raising=False)
        assert backend.thread_count(4) == 4
        monkeypatch.setenv("SCHRO_CHAOS_THREADS", "2")
        assert backend.thread_count(8) == 2
        monkeypatch.setenv("SCHRO_CHAOS_THREADS", "0")
        assert backend.thread_count(8) == 1
        monkeypatch.setenv("SCHRO_CHAOS_THREADS", "two")
        with pytest.raises(ValueError):
            backend.thread_count(8)
