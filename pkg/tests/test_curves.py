"""Characteristic curves, priors over rho, family selection and curve files."""

from __future__ import annotations

import math

import numpy as np
import pytest

from smstree.copulas import CopulaFamily, rho_from_theta, theta_from_rho
from smstree.curves import (
    CharacteristicCurve,
    FamilyPrior,
    build_curves,
    build_posterior_curve,
    build_raw_curve,
    default_prior,
    load_curves,
    prior_log_density_in_rho,
    rho_grid,
    save_curves,
    select_family,
)
from smstree.errors import ConfigError, FormatError, RangeError, SelectionError

G, GU, CL = CopulaFamily.GAUSSIAN, CopulaFamily.GUMBEL, CopulaFamily.CLAYTON


def by_family(curves):
    return {c.family: c for c in curves}


class TestGrid:
    def test_gaussian_grid(self):
        g = rho_grid("gaussian")
        assert g[0] == pytest.approx(-0.99) and g[-1] == pytest.approx(0.99)
        assert g.size == 199

    def test_positive_families(self):
        assert rho_grid("gumbel")[0] == 0.0
        assert rho_grid("clayton")[0] == pytest.approx(0.01)
        assert rho_grid("fgm")[-1] <= 1 / 3
        assert rho_grid("gumbel_barnett")[-1] < 0

    def test_step_bounds(self):
        with pytest.raises(ConfigError):
            rho_grid("gaussian", 0.2)


class TestRawCurves:
    def test_gaussian_oracles(self, default_curves):
        g = by_family(default_curves)[G]
        assert g.raw_at(0.0) == pytest.approx(0.0, abs=1e-3)
        rho = 6 / math.pi * math.asin(0.25)
        assert rho == pytest.approx(0.4826, abs=1e-4)
        assert g.raw_at(rho) == pytest.approx(-0.5 * math.log(0.75), abs=1e-3)

    def test_clayton_dominates_gaussian_at_half(self, default_curves):
        c = by_family(default_curves)
        assert c[CL].raw_at(0.5) > c[G].raw_at(0.5)

    def test_invariants(self, default_curves):
        for c in default_curves:
            assert np.all(c.raw_values >= -1e-3)
            for sign in (-1, 1):
                branch = sign * c.rho_grid >= 0
                if branch.sum() < 2:
                    continue
                order = np.argsort(np.abs(c.rho_grid[branch]))
                assert np.all(np.diff(c.raw_values[branch][order]) >= -1e-3)
            assert np.all(np.abs(c.rho_grid) <= 0.99 + 1e-12)

    def test_small_build_matches_bundled(self, default_curves):
        raw = build_raw_curve("gumbel", grid_step=0.1)
        bundled = by_family(default_curves)[GU]
        for r, v in zip(raw.rho_grid, raw.raw_values):
            assert bundled.raw_at(r) == pytest.approx(v, abs=1e-12)

    def test_thread_count_does_not_change_values(self):
        a = build_raw_curve("clayton", grid_step=0.1, threads=1)
        b = build_raw_curve("clayton", grid_step=0.1, threads=3)
        np.testing.assert_array_equal(a.raw_values, b.raw_values)


class TestPriors:
    @pytest.mark.parametrize("family", list(CopulaFamily))
    def test_prior_integrates_to_one(self, family):
        from scipy import integrate

        p = default_prior(family)
        s = family.theta_support
        upper = s.upper if math.isfinite(s.upper) else s.lower + 200.0
        mass, _ = integrate.quad(lambda t: math.exp(p.log_density_theta(t)), s.lower, upper,
                                 limit=200, points=[0.0] if s.lower < 0 < upper else None)
        assert mass == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("family", ["gaussian", "gumbel", "clayton", "amh"])
    def test_prior_peaks_at_independence(self, family):
        p = default_prior(family)
        f = CopulaFamily.from_token(family)
        lo, hi = f.theta_support.lower, min(f.theta_support.upper, f.theta_support.lower + 5)
        grid = np.linspace(lo + 1e-6, hi - 1e-6, 401)
        dens = [p.log_density_theta(t) for t in grid]
        peak = grid[int(np.argmax(dens))]
        independence = f.independence_theta if f.independence_theta is not None else lo
        assert peak == pytest.approx(independence, abs=0.02)

    def test_gaussian_change_of_variables(self):
        p = default_prior("gaussian")
        theta_density_at_0 = 0.5 / (1 - math.exp(-1))
        assert math.exp(p.log_density_theta(0.0)) == pytest.approx(theta_density_at_0, rel=1e-12)
        for rho in np.linspace(-0.9, 0.9, 10):
            theta = 2 * math.sin(math.pi * rho / 6)
            jac = math.pi / 3 * math.cos(math.pi * rho / 6)
            ref = p.log_density_theta(theta) + math.log(jac)
            assert prior_log_density_in_rho(p, rho) == pytest.approx(ref, abs=1e-7)

    def test_gaussian_symmetric(self):
        p = default_prior("gaussian")
        for rho in (0.1, 0.45, 0.8):
            assert prior_log_density_in_rho(p, rho) == pytest.approx(
                prior_log_density_in_rho(p, -rho), abs=1e-9)

    def test_clayton_decreasing(self):
        p = default_prior("clayton")
        values = [prior_log_density_in_rho(p, r) for r in np.linspace(0.2, 0.9, 15)]
        assert np.all(np.diff(values) < 0)

    def test_clayton_against_independent_jacobian(self):
        p = default_prior("clayton")
        rho, h = 0.4, 1e-3
        jac = (theta_from_rho("clayton", rho + h) - theta_from_rho("clayton", rho - h)) / (2 * h)
        ref = math.log(4) - 4 * theta_from_rho("clayton", rho) + math.log(jac)
        assert prior_log_density_in_rho(p, rho) == pytest.approx(ref, abs=1e-5)

    def test_jacobian_switch(self):
        p = default_prior("gumbel")
        q = FamilyPrior(p.family, p.form, p.params, jacobian=False)
        theta = theta_from_rho("gumbel", 0.5)
        assert prior_log_density_in_rho(q, 0.5) == pytest.approx(p.log_density_theta(theta))

    def test_unattainable_rho(self):
        with pytest.raises(RangeError):
            prior_log_density_in_rho(default_prior("gumbel"), -0.2)

    def test_spec_round_trip(self):
        for family in CopulaFamily:
            p = default_prior(family)
            assert FamilyPrior.parse(family, p.spec()) == p

    @pytest.mark.parametrize("text", ["laplace:scale=1", "exponential_on_theta:rate=-1",
                                      "exponential_on_theta:rate", "exponential_on_theta:lam=2"])
    def test_invalid_spec(self, text):
        with pytest.raises(ConfigError):
            FamilyPrior.parse("clayton", text)


class TestPosterior:
    def test_definition(self, default_curves):
        for c in default_curves:
            diffs = c.posterior_values - c.raw_values
            expected = [prior_log_density_in_rho(c.prior, r) for r in c.rho_grid[::20]]
            np.testing.assert_allclose(diffs[::20], expected, rtol=0, atol=1e-12)

    def test_family_mismatch(self, default_curves):
        with pytest.raises(ConfigError):
            build_posterior_curve(by_family(default_curves)[G], default_prior("clayton"))

    def test_flat_prior_recovers_raw_argmax(self, default_curves):
        flat = [build_posterior_curve(c, FamilyPrior(c.family, "flat")) for c in default_curves]
        for rho in np.linspace(0.05, 0.95, 19):
            assert select_family(flat, rho)[0] is select_family(default_curves, rho, posterior=False)[0]

    def test_each_family_wins_somewhere(self, default_curves):
        winners = {select_family(default_curves, r)[0] for c in default_curves for r in c.rho_grid}
        assert winners == {G, GU, CL}

    def test_naive_and_posterior_rules_disagree(self, default_curves):
        grid = np.linspace(0.1, 0.9, 81)
        assert any(select_family(default_curves, r)[0] is not select_family(
            default_curves, r, posterior=False)[0] for r in grid)


class TestSelection:
    def test_singleton(self, default_curves):
        only = [by_family(default_curves)[G]]
        for rho in (-0.7, 0.0, 0.6):
            assert select_family(only, rho)[0] is G

    def test_negative_rho_selects_gaussian(self, default_curves):
        assert select_family(default_curves, -0.4)[0] is G

    def test_sweep_changes_family(self, default_curves):
        picks = [select_family(default_curves, r)[0] for r in np.linspace(0.0, 0.95, 96)]
        assert len(set(picks)) >= 2

    def test_no_cover(self, default_curves):
        with pytest.raises(SelectionError):
            select_family([by_family(default_curves)[GU]], -0.5)

    def test_constant_shift_invariance(self, default_curves):
        shifted = [CharacteristicCurve(c.family, c.rho_grid, c.raw_values, c.step, c.prior,
                                       c.posterior_values + 17.0) for c in default_curves]
        for rho in np.linspace(-0.9, 0.95, 40):
            assert select_family(shifted, rho)[0] is select_family(default_curves, rho)[0]

    def test_grid_point_equals_direct_argmax(self, default_curves):
        c = by_family(default_curves)
        for k in range(5, 95, 7):
            rho = c[CL].rho_grid[k]
            direct = max((cur.posterior_values[np.argmin(np.abs(cur.rho_grid - rho))], cur.family)
                          for cur in default_curves if cur.covers(rho))
            assert select_family(default_curves, rho)[0] is direct[1]


class TestCurveFiles:
    def test_round_trip(self, tmp_path, default_curves):
        path = tmp_path / "c.txt"
        save_curves(default_curves, path, comments=["seed=0"])
        loaded = load_curves(path)
        assert loaded == default_curves
        for a, b in zip(loaded, default_curves):
            assert a.prior.spec() == b.prior.spec()

    def test_truncated(self, tmp_path, default_curves):
        path = tmp_path / "c.txt"
        save_curves(default_curves, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-30]) + "\n")
        with pytest.raises(FormatError, match="truncated"):
            load_curves(path)

    def test_shuffled_rows(self, tmp_path, default_curves):
        path = tmp_path / "c.txt"
        save_curves(default_curves, path)
        lines = path.read_text().splitlines()
        k = next(i for i, ln in enumerate(lines) if ln.startswith("family=")) + 5
        lines[k], lines[k + 1] = lines[k + 1], lines[k]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match=f"line {k + 2}"):
            load_curves(path)

    def test_wrong_version(self, tmp_path, default_curves):
        path = tmp_path / "c.txt"
        save_curves(default_curves, path)
        path.write_text(path.read_text().replace("SMSCURVES v1", "SMSCURVES v2", 1))
        with pytest.raises(FormatError, match="line 1"):
            load_curves(path)

    def test_unwritable_leaves_nothing(self, tmp_path, default_curves):
        with pytest.raises(OSError):
            save_curves(default_curves, tmp_path / "missing" / "c.txt")
        assert not (tmp_path / "missing").exists()


class TestBuild:
    def test_build_curves_small(self):
        curves = build_curves(["gaussian", "frank"], grid_step=0.1, resolution=80)
        assert [c.family for c in curves] == [G, CopulaFamily.FRANK]
        assert all(c.posterior_values is not None for c in curves)
        frank = curves[1]
        assert frank.rho_grid[0] > 0
        for r, t in zip(frank.rho_grid[:3], frank.thetas[:3]):
            assert rho_from_theta("frank", t, 80) == pytest.approx(r, abs=1e-9)
