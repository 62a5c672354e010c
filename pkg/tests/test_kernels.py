"""Both kernel backends agree with each other and with dense linalg."""

import numpy as np
import pytest

from jflowlab import _kernels_numba as knb
from jflowlab import _kernels_numpy as knp
from jflowlab import kernels
from jflowlab.geometry import unpack_sym


def random_packed(rng, n, P, spd=True, shift=0.0):
    m = n * (n + 1) // 2
    out = np.empty((m, P))
    for p in range(P):
        A = rng.standard_normal((n, n))
        S = A @ A.T + shift * np.eye(n) if spd else 0.5 * (A + A.T)
        comp = 0
        for j in range(n):
            for k in range(j, n):
                out[comp, p] = S[j, k]
                comp += 1
    return out


@pytest.mark.parametrize("n", [2, 3])
class TestBackendAgreement:
    def test_speed_fields(self, n, rng):
        gp = random_packed(rng, n, 200, shift=0.5)
        tp = random_packed(rng, n, 200)
        fn_nb = getattr(knb, f"speed_fields_n{n}")
        fn_np = getattr(knp, f"speed_fields_n{n}")
        for a, b in zip(fn_nb(gp, tp, 1.7, 0.4), fn_np(gp, tp, 1.7, 0.4)):
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)

    def test_eig_bounds_match_linalg(self, n, rng):
        sp = random_packed(rng, n, 200, spd=False)
        full = unpack_sym(sp, n)
        eigs = np.linalg.eigvalsh(full)
        for impl in (knb, knp):
            emin, emax = getattr(impl, f"eig_bounds_n{n}")(sp)
            np.testing.assert_allclose(emin, eigs[..., 0], rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(emax, eigs[..., -1], rtol=1e-10, atol=1e-10)

    def test_wedge_fields(self, n, rng):
        gp = random_packed(rng, n, 150, shift=0.5)
        tp = random_packed(rng, n, 150)
        G = unpack_sym(gp, n)
        T = unpack_sym(tp, n)
        expect_trace = np.trace(np.linalg.solve(G, T), axis1=-2, axis2=-1)
        expect_vol = 1.0 / np.linalg.det(G)
        for impl in (knb, knp):
            traceq, volr, det = getattr(impl, f"wedge_fields_n{n}")(gp, tp)
            np.testing.assert_allclose(traceq, expect_trace, rtol=1e-10)
            np.testing.assert_allclose(volr, expect_vol, rtol=1e-10)
            np.testing.assert_allclose(det, np.linalg.det(G), rtol=1e-10)

    def test_gen_eig_stats_match_scipy(self, n, rng):
        from scipy.linalg import eigh
        gp = random_packed(rng, n, 60, shift=0.5)
        tp = random_packed(rng, n, 60)
        G = unpack_sym(gp, n)
        T = unpack_sym(tp, n)
        expect_min = np.array([eigh(T[p], G[p], eigvals_only=True)[0]
                               for p in range(60)])
        expect_sum = np.trace(np.linalg.solve(G, T), axis1=-2, axis2=-1)
        for impl in (knb, knp):
            trsum, mumin = getattr(impl, f"gen_eig_stats_n{n}")(gp, tp)
            np.testing.assert_allclose(trsum, expect_sum, rtol=1e-10)
            np.testing.assert_allclose(mumin, expect_min, rtol=1e-9, atol=1e-10)

    def test_eta_packed(self, n, rng):
        gp = random_packed(rng, n, 80, shift=0.5)
        tp = random_packed(rng, n, 80, shift=0.1)
        w = rng.uniform(0.1, 1.0, 80)
        G = unpack_sym(gp, n)
        T = unpack_sym(tp, n)
        inv = np.linalg.inv(G)
        expect = inv @ T @ inv + w[:, None, None] * inv
        for impl in (knb, knp):
            eta = getattr(impl, f"eta_packed_n{n}")(gp, tp, w)
            np.testing.assert_allclose(unpack_sym(eta, n), expect,
                                       rtol=1e-10, atol=1e-12)

    def test_contract_sym(self, n, rng):
        ep = random_packed(rng, n, 100, spd=False)
        sp = random_packed(rng, n, 100, spd=False)
        expect = np.einsum("pij,pij->p", unpack_sym(ep, n), unpack_sym(sp, n))
        for impl in (knb, knp):
            got = getattr(impl, f"contract_sym_n{n}")(ep, sp)
            np.testing.assert_allclose(got, expect, rtol=1e-12, atol=1e-12)


class TestDispatcher:
    def test_backend_name(self):
        assert kernels.backend_name() in ("numba", "numpy")

    def test_grid_shaped_roundtrip(self, rng):
        gp = random_packed(rng, 2, 64, shift=0.5).reshape(3, 8, 8)
        tp = random_packed(rng, 2, 64).reshape(3, 8, 8)
        speed, mineig, det = kernels.speed_fields(gp, tp, 1.0, 0.2, 2)
        assert speed.shape == (8, 8)
        assert mineig.shape == (8, 8)
        assert det.shape == (8, 8)

    def test_env_selection(self):
        import subprocess
        import sys
        code = ("import jflowlab.kernels as k; print(k.backend_name())")
        out = subprocess.run([sys.executable, "-c", code],
                             env={"PATH": "/usr/bin:/bin", "JFLOWLAB_BACKEND": "numpy"},
                             capture_output=True, text=True, cwd="/root/pkg")
        assert out.stdout.strip() == "numpy"
