import numpy as np
import pytest
from scipy.stats import chisquare

from openweyl.integrator import IntegratorConfig, rk8_step
from openweyl.model import ModelParams, PhaseState, SosDomain, energy, sos_discriminant
from openweyl.repeller import (
    RepellerSet,
    SurvivalConfig,
    _record_crossings,
    _refine_crossings,
    _sample_ics_array,
    build_repeller,
    sample_sos_initial_conditions,
    survivors,
)


class TestSampling:
    def test_states_on_section_at_energy(self, params, E18):
        cfg = SurvivalConfig(E=E18, n_samples=500, seed=3)
        states = sample_sos_initial_conditions(cfg, params)
        assert len(states) == 500
        for s in states[:100]:
            assert s.x == 0.0
            assert abs(energy(s, params) - E18) < 1e-12
            assert s.px + params.omega * s.y < 0.0

    def test_deterministic_per_seed(self, params, E18):
        a = _sample_ics_array(SurvivalConfig(E=E18, n_samples=200, seed=9), params)
        b = _sample_ics_array(SurvivalConfig(E=E18, n_samples=200, seed=9), params)
        c = _sample_ics_array(SurvivalConfig(E=E18, n_samples=200, seed=10), params)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_uniform_fill_chi_square(self, params, E18):
        cfg = SurvivalConfig(E=E18, n_samples=20_000, seed=12)
        z = _sample_ics_array(cfg, params)
        dom = SosDomain.for_energy(E18, params)
        u, v = dom.scale(z[:, 1], z[:, 3])
        nbins = 8
        # cell probabilities from a fine deterministic subgrid of the indicator
        fine = 40
        uu = (np.arange(nbins * fine) + 0.5) / (nbins * fine)
        UU, VV = np.meshgrid(uu, uu, indexing="ij")
        yy, pp = dom.unscale(UU, VV)
        inside = (sos_discriminant(yy, pp, E18, params) > 0) & (yy <= dom.y_max)
        cellprob = inside.reshape(nbins, fine, nbins, fine).mean(axis=(1, 3))
        counts, _, _ = np.histogram2d(u, v, bins=nbins, range=[[0, 1], [0, 1]])
        sel = cellprob * cfg.n_samples >= 25
        expected = cellprob[sel] / cellprob[sel].sum() * counts[sel].sum()
        stat, pval = chisquare(counts[sel], expected)
        assert pval > 0.01


class TestSurvivors:
    def test_immediate_escape_not_survivor(self, params, E18, icfg):
        cfg = SurvivalConfig(E=E18, tau0=5.0, n_samples=1, seed=1)
        inside = sample_sos_initial_conditions(cfg, params)
        out = PhaseState(0.0, 21.0, 0.0, 8.0)  # beyond r_escape, heading out
        kept = survivors([out] + inside, "forward", cfg, params, icfg)
        assert out not in kept

    def test_monotone_nesting_in_tau0(self, params, E18, icfg):
        z = _sample_ics_array(SurvivalConfig(E=E18, n_samples=1500, seed=2), params)
        cfg5 = SurvivalConfig(E=E18, tau0=5.0, n_samples=1500, seed=2)
        cfg12 = SurvivalConfig(E=E18, tau0=12.0, n_samples=1500, seed=2)
        s5 = survivors(z, "forward", cfg5, params, icfg)
        s12 = survivors(z, "forward", cfg12, params, icfg)
        assert s12.shape[0] <= s5.shape[0]
        # nested: every tau0=12 survivor is a tau0=5 survivor
        set5 = {tuple(r) for r in s5}
        assert all(tuple(r) in set5 for r in s12)

    def test_survivor_fraction_decays(self, params, E18, icfg):
        z = _sample_ics_array(SurvivalConfig(E=E18, n_samples=1500, seed=4), params)
        fracs = []
        for tau0 in (3.0, 8.0, 16.0):
            cfg = SurvivalConfig(E=E18, tau0=tau0, n_samples=1500, seed=4)
            fracs.append(survivors(z, "forward", cfg, params, icfg).shape[0])
        assert fracs[0] >= fracs[1] >= fracs[2]

    def test_bounded_low_energy_orbit_survives_any_tau0(self, params, icfg):
        # below the saddle energy nothing can escape: survivor for any tau0
        E = 0.5 * params.saddle_energy
        cfg = SurvivalConfig(E=E, tau0=80.0, n_samples=5, seed=6)
        z = _sample_ics_array(cfg, params)
        kept = survivors(z, "forward", cfg, params, icfg)
        assert kept.shape[0] == 5

    def test_kam_island_orbit_if_present(self, params, E18, icfg):
        # oracle search: an above-barrier orbit that never escapes marks a
        # KAM island; at this energy the island measure is below the probe
        # resolution, so absence is a legitimate outcome
        z = _sample_ics_array(SurvivalConfig(E=E18, n_samples=4000, seed=8), params)
        cfg = SurvivalConfig(E=E18, tau0=300.0, n_samples=4000, seed=8)
        cand = survivors(z, "forward", cfg, params, icfg)
        if cand.shape[0] == 0:
            pytest.skip("no island candidate at probe resolution (measure < 3e-4)")
        cfg2 = SurvivalConfig(E=E18, tau0=600.0, n_samples=1, seed=8)
        still = survivors(cand, "forward", cfg2, params, icfg)
        assert still.shape[0] == cand.shape[0]


class TestCrossingRefinement:
    def test_refined_crossings_on_section(self, params, E18, icfg):
        z = _sample_ics_array(SurvivalConfig(E=E18, n_samples=200, seed=5), params)
        # step trajectories until a sign change of x brackets a crossing
        h = icfg.step
        cur = z.copy()
        found = []
        for _ in range(400):
            nxt = rk8_step(cur, h, params.lam, params.omega)
            crossed = cur[:, 0] * nxt[:, 0] < 0
            if crossed.any():
                found.append(cur[crossed])
            cur = nxt
            if len(found) > 5:
                break
        pre = np.vstack(found)
        tau, zc = _refine_crossings(pre, h, params.lam, params.omega)
        assert (np.abs(zc[:, 0]) < 1e-10).all()
        assert (tau > 0).all() and (tau <= h).all()
        # refined points conserve energy
        np.testing.assert_allclose(energy(zc, params), E18, atol=1e-8)

    def test_recorded_crossings_have_negative_xdot(self, params, E18, icfg):
        z = _sample_ics_array(SurvivalConfig(E=E18, n_samples=300, seed=6), params)
        ys, pys, ts, owners, t_esc = _record_crossings(
            z, 30.0, "forward", 20.0, icfg, params.lam, params.omega
        )
        assert ys.size > 0
        # recompute xdot via the discriminant: on-section xdot = -sqrt(disc)
        disc = sos_discriminant(ys, pys, E18, params)
        assert (disc > -1e-9).all()

    def test_backward_crossing_times_negative(self, params, E18, icfg):
        z = _sample_ics_array(SurvivalConfig(E=E18, n_samples=300, seed=7), params)
        ys, pys, ts, owners, t_esc = _record_crossings(
            z, 30.0, "backward", 20.0, icfg, params.lam, params.omega
        )
        assert ys.size > 0
        assert (ts < 0).all()


class TestBuildRepeller:
    @pytest.fixture(scope="class")
    def small_run(self, params, E18, icfg):
        cfg = SurvivalConfig(
            E=E18, tau0=20.0, n_samples=20_000, seed=13, trapped_margin=6.0
        )
        return cfg, build_repeller(cfg, params, icfg)

    def test_points_inside_bounding_curve(self, params, E18, small_run):
        _, rep = small_run
        assert rep.stats["n_points"] > 200
        pts = rep.unscaled_array()
        disc = sos_discriminant(pts[:, 0], pts[:, 1], E18, params)
        assert (disc > -1e-9).all()
        scaled = rep.scaled_array()
        assert scaled.min() >= 0.0 and scaled.max() <= 1.0

    def test_branches_populated_and_balanced(self, small_run):
        cfg, rep = small_run
        branches = {p.branch for p in rep.points}
        assert branches == {"K+", "K-"}
        ratio = rep.stats["survivors_K+"] / rep.stats["survivors_K-"]
        assert 0.2 < ratio < 5.0

    def test_margin_filters_crossing_times(self, small_run):
        cfg, rep = small_run
        t = np.abs(np.array([p.t_cross for p in rep.points]))
        assert (t >= cfg.trapped_margin - 1e-9).all()

    def test_deterministic_rebuild(self, params, E18, icfg):
        cfg = SurvivalConfig(E=E18, tau0=6.0, n_samples=2000, seed=3, trapped_margin=2.0)
        a = build_repeller(cfg, params, icfg).scaled_array()
        b = build_repeller(cfg, params, icfg).scaled_array()
        np.testing.assert_array_equal(a, b)

    def test_degenerate_short_tau0_fills_region(self, params, E18, icfg):
        # tau0 -> 0: every sampled point survives and the survivor set is the
        # uniform sample itself, which fills the window with dimension ~2
        from openweyl.dimension import correlation_sum, fit_dimension
        from openweyl.model import SosDomain

        cfg = SurvivalConfig(E=E18, tau0=0.5, n_samples=8000, seed=14)
        z = _sample_ics_array(cfg, params)
        kept = survivors(z, "forward", cfg, params, icfg)
        assert kept.shape[0] == cfg.n_samples
        dom = SosDomain.for_energy(E18, params)
        u, v = dom.scale(kept[:, 1], kept[:, 3])
        c = correlation_sum(np.column_stack([u, v]), np.geomspace(0.02, 0.3, 12))
        d2, _ = fit_dimension(c, (0.03, 0.2))
        assert 1.85 <= d2 <= 2.05

    def test_empty_result_warns(self, params, E18, icfg):
        cfg = SurvivalConfig(E=E18, tau0=200.0, n_samples=50, seed=1)
        with pytest.warns(UserWarning, match="empty repeller"):
            rep = build_repeller(cfg, params, icfg)
        assert rep.stats["n_points"] == 0

    def test_r_escape_validation(self, params, E18, icfg):
        cfg = SurvivalConfig(E=E18, r_escape=5.0, n_samples=10)
        with pytest.raises(ValueError, match="saddle distance"):
            build_repeller(cfg, params, icfg)


def test_survival_config_validation(E18):
    with pytest.raises(ValueError):
        SurvivalConfig(E=E18, stretch=0.5)
    with pytest.raises(ValueError):
        SurvivalConfig(E=E18, tau0=0.0)
    with pytest.raises(ValueError):
        SurvivalConfig(E=E18, trapped_margin=-1.0)


def test_repeller_roundtrip_arrays(params, E18):
    from openweyl.model import SosPoint

    dom = SosDomain.for_energy(E18, params)
    pts = [SosPoint(0.3, 0.6, 1.0, "K+"), SosPoint(0.5, 0.5, 2.0, "K-")]
    rep = RepellerSet(points=pts, E=E18, provenance=None, domain=dom)
    scaled = rep.scaled_array()
    un = rep.unscaled_array()
    u, v = dom.scale(un[:, 0], un[:, 1])
    np.testing.assert_allclose(np.column_stack([u, v]), scaled, rtol=1e-13)
