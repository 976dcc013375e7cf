import numpy as np
import pytest

from nlrte.wigner import (
    ComplexField,
    RandomMediumSpec,
    TransverseGrid,
    WignerConfig,
    compare_with_transport,
    ensemble_density,
    matched_transport_problem,
    sample_random_slab,
    split_step_propagate,
    wigner_transform,
)


class TestGridAndField:
    def test_even_points_required(self):
        with pytest.raises(ValueError):
            TransverseGrid(8.0, 129)

    def test_norm(self):
        grid = TransverseGrid(8.0, 128)
        f = ComplexField(grid, np.ones(128, dtype=complex))
        assert f.norm_l2() == pytest.approx(np.sqrt(8.0), rel=1e-14)


class TestRandomMedium:
    def test_variance_within_three_standard_errors(self):
        grid = TransverseGrid(64.0, 4096)
        spec = RandomMediumSpec(sigma_v=0.8, decorrelation_step=0.01, seed=5)
        slab = sample_random_slab(spec, grid, 2.56, epsilon=0.1)
        # >= 1e6 samples; slabs are independent, so block means give the SE
        assert slab.values.size >= 1_000_000
        block_means = np.mean(slab.values ** 2, axis=1)
        grand = block_means.mean()
        se = block_means.std(ddof=1) / np.sqrt(len(block_means))
        assert abs(grand - 0.64) <= 3 * se

    def test_autocovariance_shape(self):
        grid = TransverseGrid(64.0, 4096)
        spec = RandomMediumSpec(sigma_v=1.0, decorrelation_step=0.01, seed=9)
        slab = sample_random_slab(spec, grid, 2.0, epsilon=0.1)
        h_fast = grid.spacing / 0.1
        lag = int(round(1.0 / h_fast))
        v = slab.values
        cov = np.mean(v * np.roll(v, -lag, axis=1))
        expected = np.exp(-0.5 * (lag * h_fast) ** 2)
        assert cov == pytest.approx(expected, rel=0.05)

    def test_same_seed_identical(self):
        grid = TransverseGrid(16.0, 256)
        spec = RandomMediumSpec(sigma_v=1.0, seed=3)
        a = sample_random_slab(spec, grid, 1.0, 0.05)
        b = sample_random_slab(spec, grid, 1.0, 0.05)
        assert np.array_equal(a.values, b.values)

    def test_zero_amplitude(self):
        grid = TransverseGrid(16.0, 256)
        spec = RandomMediumSpec(sigma_v=0.0, seed=3)
        slab = sample_random_slab(spec, grid, 1.0, 0.05)
        assert np.all(slab.values == 0.0)


class TestSplitStep:
    def test_free_gaussian_matches_closed_form(self):
        grid = TransverseGrid(32.0, 1024)
        x = grid.coordinates()
        w = 2.0
        eps = 1.0
        psi0 = np.exp(-x ** 2 / (2 * w ** 2)).astype(complex)
        config = WignerConfig(epsilon=eps)
        out = split_step_propagate(ComplexField(grid, psi0), None, config,
                                   dz=0.01, n_steps=100)
        denom = w ** 2 + 1j * eps * 1.0
        exact = np.sqrt(w ** 2 / denom) * np.exp(-x ** 2 / (2 * denom))
        err = np.sqrt(np.sum(np.abs(out.psi - exact) ** 2) * grid.spacing)
        assert err < 1e-8

    def test_plane_wave_absorption_law(self):
        grid = TransverseGrid(8.0, 128)
        psi0 = np.ones(128, dtype=complex)
        config = WignerConfig(epsilon=0.3, absorption=0.7)
        out = split_step_propagate(ComplexField(grid, psi0), None, config,
                                   dz=0.02, n_steps=50)
        expected = 1.0 / (1.0 + 0.7 * 1.0)
        assert np.max(np.abs(out.density() - expected)) < 1e-12

    def test_unitary_with_potential_only(self):
        grid = TransverseGrid(16.0, 512)
        x = grid.coordinates()
        spec = RandomMediumSpec(sigma_v=1.0, seed=21)
        medium = sample_random_slab(spec, grid, 1.0, 0.25)
        psi0 = np.exp(-x ** 2)
        config = WignerConfig(epsilon=0.25)
        field = ComplexField(grid, psi0.astype(complex))
        out = split_step_propagate(field, medium, config, dz=0.005, n_steps=200)
        assert out.norm_l2() == pytest.approx(field.norm_l2(), rel=1e-12)

    def test_absorption_monotone(self):
        grid = TransverseGrid(16.0, 256)
        x = grid.coordinates()
        config = WignerConfig(epsilon=0.2, absorption=0.5)
        field = ComplexField(grid, np.exp(-x ** 2).astype(complex))
        norms = [field.norm_l2()]
        for _ in range(5):
            field = split_step_propagate(field, None, config, dz=0.02,
                                         n_steps=10)
            norms.append(field.norm_l2())
        assert np.all(np.diff(norms) <= 1e-14)

    def test_step_size_warning(self):
        grid = TransverseGrid(16.0, 256)
        spec = RandomMediumSpec(sigma_v=4.0, seed=2)
        medium = sample_random_slab(spec, grid, 1.0, 0.04)
        field = ComplexField(grid, np.ones(256, dtype=complex))
        with pytest.warns(UserWarning, match="shrink dz"):
            split_step_propagate(field, medium, WignerConfig(epsilon=0.04),
                                 dz=0.1, n_steps=1)


class TestWignerTransform:
    def test_gaussian_oracle(self):
        grid = TransverseGrid(16.0, 256)
        x = grid.coordinates()
        field = ComplexField(grid, np.exp(-x ** 2 / 2).astype(complex))
        wig = wigner_transform(field, epsilon=1.0)
        xx, kk = np.meshgrid(wig.x, wig.k, indexing="ij")
        exact = np.exp(-xx ** 2 - kk ** 2) / np.sqrt(np.pi)
        # the periodic transform carries a ghost from x + L/2; compare on
        # the central half where it sits below the tolerance
        central = np.abs(wig.x) <= 4.0
        assert np.max(np.abs(wig.values - exact)[central]) < 1e-6

    def test_marginal_identity_exact(self):
        grid = TransverseGrid(12.0, 128)
        rng = np.random.default_rng(1)
        psi = rng.standard_normal(128) + 1j * rng.standard_normal(128)
        field = ComplexField(grid, psi)
        wig = wigner_transform(field, epsilon=0.37)
        marg = wig.marginal_x()
        assert np.max(np.abs(marg - np.abs(psi) ** 2)) < 1e-12 * np.max(
            np.abs(psi) ** 2)

    def test_real_even_field_symmetric_in_k(self):
        grid = TransverseGrid(16.0, 128)
        x = grid.coordinates()
        field = ComplexField(grid, np.exp(-x ** 2).astype(complex))
        wig = wigner_transform(field, epsilon=0.5)
        # k grid is [-k_max, ..., 0, ..., k_max - dk]; drop the unpaired mode
        vals = wig.values[:, 1:]
        assert np.max(np.abs(vals - vals[:, ::-1])) < 1e-12

    def test_conjugation_flips_k(self):
        grid = TransverseGrid(16.0, 128)
        rng = np.random.default_rng(7)
        psi = rng.standard_normal(128) + 1j * rng.standard_normal(128)
        a = wigner_transform(ComplexField(grid, psi), epsilon=0.4)
        b = wigner_transform(ComplexField(grid, np.conj(psi)), epsilon=0.4)
        assert np.max(np.abs(a.values[:, 1:] - b.values[:, 1:][:, ::-1])) < 1e-12

    def test_smoothing_preserves_mass_roughly(self):
        grid = TransverseGrid(16.0, 128)
        x = grid.coordinates()
        field = ComplexField(grid, np.exp(-x ** 2).astype(complex))
        raw = wigner_transform(field, epsilon=0.5)
        smooth = wigner_transform(field, epsilon=0.5, smoothing=np.sqrt(0.5))
        assert smooth.values.shape == raw.values.shape
        assert np.sum(smooth.values) == pytest.approx(np.sum(raw.values),
                                                      rel=1e-6)


class TestEnsemble:
    def setup_small(self, n=1, seed=13):
        grid = TransverseGrid(16.0, 256)
        spec = RandomMediumSpec(sigma_v=0.5, seed=seed)
        config = WignerConfig(epsilon=0.1, absorption=0.2, ensemble=n)
        x = grid.coordinates()
        psi0 = np.exp(-x ** 2 / 4).astype(complex)
        return grid, spec, config, psi0

    def test_single_realization_reproduces_split_step(self):
        grid, spec, config, psi0 = self.setup_small(1)
        result = ensemble_density(spec, config, grid, psi0, [0.2], dz=0.01)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed,
                                                           spawn_key=(0,)))
        medium = sample_random_slab(spec, grid, 0.2, config.epsilon,
                                    seed=rng.integers(2 ** 63))
        out = split_step_propagate(ComplexField(grid, psi0), medium, config,
                                   0.01, 20)
        assert np.array_equal(result.mean_density[0], out.density())
        assert np.all(result.stderr == 0.0)

    def test_deterministic_across_runs(self):
        grid, spec, config, psi0 = self.setup_small(8)
        a = ensemble_density(spec, config, grid, psi0, [0.1, 0.2], dz=0.01)
        b = ensemble_density(spec, config, grid, psi0, [0.1, 0.2], dz=0.01)
        assert np.array_equal(a.mean_density, b.mean_density)
        assert np.array_equal(a.stderr, b.stderr)

    def test_mass_conserved_without_absorption(self):
        grid = TransverseGrid(16.0, 256)
        spec = RandomMediumSpec(sigma_v=0.8, seed=4)
        config = WignerConfig(epsilon=0.1, absorption=0.0, ensemble=4)
        x = grid.coordinates()
        psi0 = np.exp(-x ** 2 / 4).astype(complex)
        result = ensemble_density(spec, config, grid, psi0, [0.1, 0.2, 0.3],
                                  dz=0.01)
        assert np.max(np.abs(result.mass - result.mass[0])) < 1e-12

    def test_standard_error_scaling(self):
        grid = TransverseGrid(16.0, 256)
        x = grid.coordinates()
        psi0 = np.exp(-x ** 2 / 4).astype(complex)
        levels = []
        for n in (16, 64, 256):
            spec = RandomMediumSpec(sigma_v=1.0, seed=100)
            config = WignerConfig(epsilon=0.1, ensemble=n)
            result = ensemble_density(spec, config, grid, psi0, [0.3], dz=0.01)
            levels.append(np.mean(result.stderr))
        slope = np.polyfit(np.log([16, 64, 256]), np.log(levels), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.15)

    def test_targets_must_align(self):
        grid, spec, config, psi0 = self.setup_small()
        with pytest.raises(ValueError, match="multiples"):
            ensemble_density(spec, config, grid, psi0, [0.015], dz=0.01)

    def test_ensemble_wigner_snapshot(self):
        grid, spec, config, psi0 = self.setup_small(4)
        result = ensemble_density(spec, config, grid, psi0, [0.1], dz=0.01,
                                  wigner_at_end=True, wigner_stride=8)
        assert result.wigner is not None
        assert result.wigner.values.shape == (256 // 8, 256)


class TestTransportComparison:
    def test_free_case_agrees_to_scheme_order(self):
        # no medium, no absorption: both sides drift the two beams apart
        eps = 0.05
        grid = TransverseGrid(32.0, 1024)
        x = grid.coordinates()
        amp = np.exp(-x ** 2 / (2 * 9.0))
        spec = RandomMediumSpec(sigma_v=0.0, seed=1)
        # the random relative beam phase cancels carrier interference only
        # in the ensemble mean, so a handful of realizations is needed
        config = WignerConfig(epsilon=eps, absorption=0.0, ensemble=32)

        def initial(x_, rng):
            phi = rng.uniform(0, 2 * np.pi)
            return amp * (np.exp(1j * x_ / eps)
                          + np.exp(-1j * x_ / eps + 1j * phi)) / np.sqrt(2)

        ens = ensemble_density(spec, config, grid, initial, [0.5, 1.0],
                               dz=0.0125)
        problem = matched_transport_problem(spec, config, grid, amp ** 2,
                                            horizon=1.0, n_steps=80)
        report = compare_with_transport(ens, problem)
        assert np.all(report.l1_shape_discrepancy < 0.05)

    def test_quadratic_decay_constant_matches(self):
        # uniform beams, pure absorption: both densities follow 1/(1 + c z);
        # the wave box is periodic while the transport box leaks at the
        # walls, so the law is compared at the domain center
        eps = 0.1
        grid = TransverseGrid(16.0, 256)
        spec = RandomMediumSpec(sigma_v=0.0, seed=1)
        config = WignerConfig(epsilon=eps, absorption=0.4, ensemble=1)
        psi0 = np.ones(256, dtype=complex)
        ens = ensemble_density(spec, config, grid, psi0, [0.5, 1.0], dz=0.005)
        problem = matched_transport_problem(
            spec, config, grid, np.ones(256), horizon=1.0, n_steps=200)
        report = compare_with_transport(ens, problem)
        assert report.z_targets.shape == (2,)
        from nlrte.transport import solve_semilinear_march
        march = solve_semilinear_march(problem, keep_history=False)
        center = problem.grid.cells[0] // 2
        for z, steps in ((0.5, 100), (1.0, 200)):
            expected = 1.0 / (1.0 + 0.4 * z)
            i = np.argmin(np.abs(ens.z_targets - z))
            assert ens.mean_density[i, 128] == pytest.approx(expected,
                                                             rel=1e-12)
            assert march.density.values[steps, center] == pytest.approx(
                expected, rel=2e-3)

    def test_randomized_comparison_report_always_emits(self):
        eps = 0.05
        grid = TransverseGrid(32.0, 1024)
        x = grid.coordinates()
        amp = np.exp(-x ** 2 / (2 * 9.0))
        spec = RandomMediumSpec(sigma_v=1.0, decorrelation_step=2 * eps,
                                seed=99)
        config = WignerConfig(epsilon=eps, absorption=0.3, ensemble=32)

        def initial(x_, rng):
            phi = rng.uniform(0, 2 * np.pi)
            return amp * (np.exp(1j * x_ / eps)
                          + np.exp(-1j * x_ / eps + 1j * phi)) / np.sqrt(2)

        ens = ensemble_density(spec, config, grid, initial, [1.0], dz=0.0125)
        problem = matched_transport_problem(spec, config, grid, amp ** 2,
                                            horizon=1.0, n_steps=80)
        report = compare_with_transport(ens, problem)
        assert np.all(np.isfinite(report.l1_shape_discrepancy))
        assert report.matching["sigma_s"] > 0
