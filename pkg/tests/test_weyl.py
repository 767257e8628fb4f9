import numpy as np
import pytest

from openweyl.quantum import BasisSpec, Resonance, SpectrumCatalog
from openweyl.weyl import CountingBoxes, count_box, fit_weyl


def make_catalog(entries, hbar=1.0, E_s=16.17165):
    res = [
        Resonance(E_r=e * E_s, gamma=g * E_s, theta_stability=0.0, hbar=hbar)
        for e, g in entries
    ]
    return SpectrumCatalog(
        resonances=res, basis=BasisSpec(n_max=10, hbar=hbar), theta_grid=[0.1, 0.2, 0.3]
    )


class TestCountBox:
    def test_single_centered_resonance_in_every_box(self):
        cat = make_catalog([(1.8, 1e-6)])
        mean, per = count_box(cat, CountingBoxes(), E_s=16.17165)
        assert mean == 1.0
        assert (per == 1).all()

    def test_offset_coverage_fraction(self):
        # a resonance at the window edge is only covered by some placements
        cat = make_catalog([(1.35, 1e-6)])
        boxes = CountingBoxes()
        mean, per = count_box(cat, boxes, E_s=16.17165)
        covered = sum(
            1 for off in boxes.placement_offsets if abs(1.35 - (1.8 + off)) <= 0.5
        )
        assert mean == pytest.approx(covered / boxes.n_boxes)

    def test_zero_gamma_cap_empties_boxes(self):
        cat = make_catalog([(1.8, 1e-6)])
        mean, per = count_box(cat, CountingBoxes(gamma_cap_factor=0.0), E_s=16.17165)
        assert mean == 0.0

    def test_width_cap_scales_with_hbar(self):
        E_s = 16.17165
        cat = make_catalog([(1.8, 1.0)], hbar=0.9)
        mean, _ = count_box(cat, CountingBoxes(), E_s=E_s)
        assert mean == 1.0  # 1.0 < 1.24*0.9
        cat2 = make_catalog([(1.8, 1.2)], hbar=0.9)
        mean2, _ = count_box(cat2, CountingBoxes(), E_s=E_s)
        assert mean2 == 0.0  # 1.2 > 1.116

    def test_absolute_units_switch(self):
        E_s = 16.17165
        # gamma = 0.1*E_s absolute = 1.617; absolute cap 1.24*hbar = 1.24
        cat = make_catalog([(1.8, 0.1)])
        mean_scaled, _ = count_box(cat, CountingBoxes(), E_s=E_s)
        mean_abs, _ = count_box(cat, CountingBoxes(gamma_cap_absolute=True), E_s=E_s)
        assert mean_scaled == 1.0
        assert mean_abs == 0.0

    def test_count_monotonicity_in_box_size(self):
        rng = np.random.default_rng(0)
        entries = list(zip(rng.uniform(1.0, 2.6, 200), rng.uniform(0, 2.0, 200)))
        cat = make_catalog(entries)
        base, _ = count_box(cat, CountingBoxes(), E_s=16.17165)
        wider, _ = count_box(cat, CountingBoxes(width_E=1.5), E_s=16.17165)
        taller, _ = count_box(cat, CountingBoxes(gamma_cap_factor=2.0), E_s=16.17165)
        assert wider >= base
        assert taller >= base

    def test_empty_catalog_counts_zero(self):
        cat = make_catalog([])
        mean, per = count_box(cat, CountingBoxes(), E_s=16.17165)
        assert mean == 0.0
        assert (per == 0).all()

    def test_box_validation(self):
        with pytest.raises(ValueError):
            CountingBoxes(n_boxes=0)
        with pytest.raises(ValueError):
            CountingBoxes(width_E=0.0)
        with pytest.raises(ValueError):
            CountingBoxes(n_boxes=3, placement_offsets=(0.0,))


class TestFitWeyl:
    def test_exact_power_law(self):
        hbars = np.array([0.90, 0.92, 0.94, 0.96, 0.98, 1.00])
        counts = hbars**-1.5
        fit = fit_weyl(list(zip(hbars, counts)))
        assert fit.d == pytest.approx(1.5, abs=1e-10)
        assert fit.d_err < 1e-12

    def test_scaling_counts_leaves_slope(self):
        hbars = np.array([0.90, 0.94, 0.98, 1.02])
        counts = 7.0 * hbars**-1.23
        f1 = fit_weyl(list(zip(hbars, counts)))
        f2 = fit_weyl(list(zip(hbars, 100.0 * counts)))
        assert f1.d == pytest.approx(f2.d, abs=1e-12)
        assert f1.intercept != pytest.approx(f2.intercept, abs=1e-3)

    def test_requires_four_distinct_hbars(self):
        with pytest.raises(ValueError):
            fit_weyl([(0.9, 10.0), (0.95, 11.0), (1.0, 12.0)])
        with pytest.raises(ValueError):
            fit_weyl([(0.9, 10.0), (0.9, 11.0), (1.0, 12.0), (1.0, 13.0)])

    def test_rejects_nonpositive_counts(self):
        with pytest.raises(ValueError):
            fit_weyl([(0.9, 10.0), (0.94, 0.0), (0.98, 12.0), (1.0, 13.0)])
