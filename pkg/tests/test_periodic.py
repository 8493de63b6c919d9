import numpy as np
import pytest

from onechannel.exceptions import NearBandEdge, NonUnitaryBlock
from onechannel.finite import assemble, eigensystem
from onechannel.mat2core import SWAP, haar_unitary, u11_defect, u11_eigensystem
from onechannel.model import theta_block
from onechannel.periodic import (
    PeriodicZipper,
    band_set,
    diagonalize_monodromy,
    discriminant,
    discriminant_derivative,
    monodromy,
    point_spectrum,
    random_periodic_zipper,
    theta_zipper,
    truncation_eigenangles,
)
from onechannel.transfer import transfer_product


def rot(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def circ_dist(a, b):
    return np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))


def shell_decay(vec, N):
    return np.linalg.norm(vec.reshape(N + 1, 2), axis=1)


def u11_defect_stack(T):
    return np.array([u11_defect(t) for t in T])


class TestZipperType:
    def test_validation(self):
        with pytest.raises(NonUnitaryBlock):
            PeriodicZipper((np.eye(2),), (SWAP,))
        with pytest.raises(NonUnitaryBlock):
            PeriodicZipper((2 * SWAP,), (SWAP,))
        with pytest.raises(ValueError):
            PeriodicZipper((SWAP, SWAP), (SWAP,))

    def test_block_indexing(self, rng):
        z = random_periodic_zipper(3, rng)
        assert z.V_at(0) is z.V[-1]
        assert z.V_at(4) is z.V[0] and z.W_at(6) is z.W[2]
        assert z.epsilon0 >= 0.2

    def test_to_model(self, rng):
        z = random_periodic_zipper(2, rng, u=1j)
        m = z.to_model(5)
        assert m.N == 5 and m.u == 1j
        assert np.allclose(m.shell(3).V, z.V[0]) and np.allclose(m.W(4), z.W[1])


class TestMonodromy:
    def test_theta_closed_form(self):
        th, phi = 0.8, 1.9
        z = np.exp(1j * phi)
        s, c = np.sin(th), np.cos(th) / np.sin(th)
        expected = np.array([[1 / (z * s), -c], [-c, z / s]])
        assert np.allclose(monodromy(theta_zipper(th), z), expected, atol=1e-14)

    def test_u11_on_circle(self, rng):
        zs = np.exp(2j * np.pi * rng.random(500))
        for p in (1, 2, 3):
            T = monodromy(random_periodic_zipper(p, rng), zs)
            scale = np.maximum(1.0, np.linalg.norm(T, axis=(-2, -1)) ** 2)
            assert np.max(u11_defect_stack(T) / scale) < 1e-10

    def test_period_doubling(self, rng):
        z1 = random_periodic_zipper(2, rng)
        z2 = PeriodicZipper(z1.V * 2, z1.W * 2)
        zs = np.exp(1j * np.linspace(0, 6, 7))
        T1 = monodromy(z1, zs)
        assert np.allclose(monodromy(z2, zs), T1 @ T1, atol=1e-10)

    def test_periodicity_identity(self, rng):
        zp = random_periodic_zipper(2, rng, u=np.exp(0.3j))
        z = np.exp(0.77j)
        T = monodromy(zp, z)
        T0 = zp.step_matrices(np.array([z]), 0)[0][0]
        for n in (1, 10, 50):
            lhs = transfer_product(zp.to_model(n * 2), z).matrix
            rhs = np.linalg.matrix_power(T, n) @ T0
            assert np.linalg.norm(lhs - rhs) < 1e-8 * n * max(1, np.linalg.norm(rhs))

    def test_derivative(self, rng):
        zp = random_periodic_zipper(3, rng)
        phi, h = 1.234, 1e-6
        _, dT = monodromy(zp, np.exp(1j * phi), derivative=True)
        fd = (monodromy(zp, np.exp(1j * (phi + h))) - monodromy(zp, np.exp(1j * (phi - h)))) / (2 * h)
        assert np.allclose(dT, fd, atol=1e-6 * max(1, np.abs(dT).max()))
        dD = discriminant_derivative(zp, phi)
        fdD = (discriminant(zp, phi + h) - discriminant(zp, phi - h)) / (2 * h)
        assert dD == pytest.approx(fdD, rel=1e-5, abs=1e-7)


class TestDiscriminant:
    @pytest.mark.parametrize("th", [np.pi / 6, np.pi / 4, 1.0, np.pi / 2])
    def test_theta(self, th):
        phi = np.linspace(0, 2 * np.pi, 101)
        assert np.allclose(discriminant(theta_zipper(th), phi), 4 * np.cos(phi) ** 2 / np.sin(th) ** 2, atol=1e-12)

    def test_real_on_random_zippers(self, rng):
        phi = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        for _ in range(10):
            D = discriminant(random_periodic_zipper(int(rng.integers(1, 4)), rng), phi)
            assert np.all(D >= -1e-9)

    def test_scalar_input(self):
        assert isinstance(discriminant(theta_zipper(0.5), 0.3), float)


class TestBands:
    @pytest.mark.parametrize("th", [np.pi / 6, np.pi / 4, np.pi / 3])
    def test_theta_edges(self, th):
        bs = band_set(theta_zipper(th, u=1j), with_points=False)
        a = np.arccos(np.sin(th))
        b = np.arccos(-np.sin(th))
        expected = np.sort([a, b, 2 * np.pi - b, 2 * np.pi - a])
        assert np.abs(bs.edges - expected).max() < 1e-9
        assert np.allclose(bs.arcs, [(a, b), (2 * np.pi - b, 2 * np.pi - a)], atol=1e-9)

    def test_pi_over_six(self):
        bs = band_set(theta_zipper(np.pi / 6, u=1j), with_points=False)
        assert np.allclose(bs.arcs, [(np.pi / 3, 2 * np.pi / 3), (4 * np.pi / 3, 5 * np.pi / 3)], atol=1e-9)
        assert bs.total_length == pytest.approx(2 * np.pi / 3)
        assert np.allclose(bs.gaps, [(2 * np.pi / 3, 4 * np.pi / 3), (5 * np.pi / 3, 7 * np.pi / 3)], atol=1e-9)

    def test_swap_zipper(self):
        bs = band_set(theta_zipper(np.pi / 2), with_points=False)
        assert np.allclose(bs.arcs, [(0, np.pi), (np.pi, 2 * np.pi)], atol=1e-9)
        assert bs.gaps == []
        assert not bs.contains(np.array([0.0, np.pi]), closed=False).any()
        assert bs.contains(np.array([0.0, np.pi])).all()

    def test_tangent_edges(self):
        # doubling the period folds D into (D - 2)^2, which touches 4 where D = 0
        z1 = theta_zipper(np.pi / 6)
        bs = band_set(PeriodicZipper(z1.V * 2, z1.W * 2), with_points=False)
        assert np.allclose(bs.tangent_edges, [np.pi / 2, 3 * np.pi / 2], atol=1e-7)
        assert len(bs.arcs) == 4

    def test_never_empty(self, rng):
        for _ in range(30):
            zp = random_periodic_zipper(int(rng.integers(1, 4)), rng, u=np.exp(1j * rng.random()))
            bs = band_set(zp, with_points=False)
            assert bs.total_length > 0
            inside = np.concatenate([np.linspace(a, b, 7)[1:-1] for a, b in bs.arcs])
            assert np.all(discriminant(zp, inside) < 4)
            if bs.gaps:
                outside = np.concatenate([np.linspace(a, b, 7)[1:-1] for a, b in bs.gaps])
                assert np.all(discriminant(zp, outside) > 4)

    def test_distance(self):
        bs = band_set(theta_zipper(np.pi / 6), with_points=False)
        d = bs.distance(np.array([np.pi / 2, np.pi / 3 - 0.1, 0.0]))
        assert d == pytest.approx([0.0, 0.1, np.pi / 3])

    def test_small_grid(self):
        with pytest.raises(ValueError):
            band_set(theta_zipper(0.5), grid=100)

    def test_truncation_density_of_states(self):
        zp = theta_zipper(np.pi / 6, u=1j)
        bs = band_set(zp, with_points=False)
        N = 500
        ang = truncation_eigenangles(zp, N)
        for a, b in bs.arcs:
            inside = bs.distance(ang) == 0
            inside &= circ_dist(ang, 0.5 * (a + b)) <= 0.5 * (b - a)
            need = np.floor(N * (b - a) / (2 * np.pi * zp.period) * 0.95)
            assert inside.sum() >= need


class TestPointSpectrum:
    def test_theta_with_imaginary_boundary(self):
        assert point_spectrum(theta_zipper(np.pi / 6, u=1j)) == []

    def test_theta_with_unit_boundary(self):
        zp = theta_zipper(np.pi / 6, u=1.0)
        pts = point_spectrum(zp)
        assert len(pts) == 1
        phi, lam = pts[0]
        assert phi == pytest.approx(0.0, abs=1e-10)
        assert lam == pytest.approx(2 - np.sqrt(3), rel=1e-9)
        # oracle: the truncation has an isolated eigenangle there for every v
        for v in (1.0, 1j, -1.0):
            ang = truncation_eigenangles(zp, 60, v=v)
            assert circ_dist(ang, 0.0).min() < 1e-10

    def test_defect_zipper_matches_truncation(self):
        zp = theta_zipper(np.pi / 6, u=1j, V0=theta_block(np.pi / 6) @ rot(2.0))
        pts = point_spectrum(zp)
        assert len(pts) == 2
        N = 80
        op = assemble(zp.to_model(N), N, 1j, 1.0)
        angles, Z = eigensystem(op)
        for phi, lam in pts:
            k = int(np.argmin(circ_dist(angles, phi)))
            assert circ_dist(angles[k], phi) < 1e-10
            norms = shell_decay(Z[:, k], N)
            ratio = np.exp(np.mean(np.diff(np.log(norms[5:25]))))
            assert ratio == pytest.approx(lam, rel=0.05)

    def test_points_outside_bands(self, rng):
        for _ in range(15):
            zp = random_periodic_zipper(int(rng.integers(1, 4)), rng, u=np.exp(2j * np.pi * rng.random()))
            bs = band_set(zp)
            for phi, lam in bs.point_spectrum:
                assert bs.distance(phi) > 0 and 0 < lam < 1

    def test_stable_under_grid_doubling(self, rng):
        zp = random_periodic_zipper(3, rng, u=np.exp(1j))
        a = point_spectrum(zp, scan_grid=1024)
        b = point_spectrum(zp, scan_grid=4096)
        assert len(a) == len(b)
        assert np.allclose([p for p, _ in a], [p for p, _ in b], atol=1e-10)


class TestEigenvalues:
    def test_unimodular_inside_contracting_outside(self, rng):
        zp = random_periodic_zipper(2, rng)
        bs = band_set(zp, with_points=False)
        for phi in np.linspace(0, 2 * np.pi, 200, endpoint=False):
            if circ_dist(phi, bs.edges).min() < 1e-3:
                continue
            lam = abs(u11_eigensystem(monodromy(zp, np.exp(1j * phi))).lam)
            if bs.contains(phi, closed=False):
                assert abs(lam - 1) < 1e-8
            else:
                assert lam < 1 - 1e-6


class TestDiagonalize:
    def test_swap_zipper(self):
        d = diagonalize_monodromy(theta_zipper(np.pi / 2), np.pi / 2)
        assert np.allclose(d.R, np.diag([-1j, 1j]), atol=1e-12)
        assert np.allclose(np.abs(d.M), np.eye(2), atol=1e-12)
        assert d.cond == pytest.approx(1.0)

    def test_random_band_samples(self, rng):
        worst = 0.0
        for _ in range(100):
            zp = random_periodic_zipper(int(rng.integers(1, 4)), rng)
            bs = band_set(zp, with_points=False)
            a, b = bs.arcs[int(rng.integers(len(bs.arcs)))]
            phi = a + (b - a) * rng.uniform(0.05, 0.95)
            try:
                d = diagonalize_monodromy(zp, phi)
            except NearBandEdge:
                continue
            T = monodromy(zp, np.exp(1j * phi))
            X = np.linalg.inv(d.M) @ T @ d.M
            worst = max(worst, abs(X[0, 1]), abs(X[1, 0]))
            assert np.allclose(np.abs(np.diag(d.R)), 1, atol=1e-9)
        assert worst < 1e-9

    def test_conditioning_grows_near_edge(self):
        zp = theta_zipper(np.pi / 6)
        edge = np.pi / 3
        conds = [diagonalize_monodromy(zp, edge + d).cond for d in (0.3, 0.1, 0.03, 0.01, 0.003)]
        assert all(b > a for a, b in zip(conds, conds[1:]))

    def test_outside_band(self):
        with pytest.raises(NearBandEdge):
            diagonalize_monodromy(theta_zipper(np.pi / 6), 0.0)
        with pytest.raises(NearBandEdge):
            diagonalize_monodromy(theta_zipper(np.pi / 6), np.pi / 3 + 1e-12)


def test_random_zipper_coupling_floor(rng):
    for _ in range(10):
        zp = random_periodic_zipper(2, rng, min_coupling=0.5)
        assert zp.epsilon0 >= 0.5
        for B in zp.V + zp.W:
            assert np.allclose(B.conj().T @ B, np.eye(2))


def test_haar_blocks_accepted(rng):
    V = tuple(haar_unitary(2, rng, size=2))
    W = tuple(haar_unitary(2, rng, size=2))
    assert PeriodicZipper(V, W).period == 2
