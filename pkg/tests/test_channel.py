"""Channel geometry, path loss, and fading draws."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from airvote import analysis
from airvote.channel import (
    CellConfig,
    ChannelDraw,
    draw_user_channels,
    path_loss,
    sample_distance,
    sample_rayleigh_amplitude,
)
from airvote.rng import substream


@pytest.fixture
def cfg():
    return CellConfig(R_m=300.0, r0_m=10.0, alpha=3.0, P_dBW=-20.0, M=1000, N0_dBm=-80.0)


class TestCellConfig:
    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            CellConfig(R_m=5.0, r0_m=10.0)
        with pytest.raises(ValueError):
            CellConfig(R_m=100.0, r0_m=0.0)
        with pytest.raises(ValueError):
            CellConfig(M=0)

    def test_alpha_flag(self):
        assert not CellConfig(alpha=3.0).alpha_flagged
        assert CellConfig(alpha=4.5).alpha_flagged
        assert CellConfig(alpha=2.0).alpha_flagged

    def test_linear_conversions(self):
        cfg = CellConfig(P_dBW=-20.0, M=1000, N0_dBm=-80.0)
        assert cfg.symbol_power_w == pytest.approx(1e-5)
        assert cfg.symbol_power_dbw == pytest.approx(-50.0)
        assert cfg.noise_power_w == pytest.approx(1e-11)
        assert cfg.noise_var == pytest.approx(5e-7)

    def test_with_symbol_power(self):
        cfg = CellConfig(M=1000).with_symbol_power_dbw(-60.0)
        assert cfg.symbol_power_dbw == pytest.approx(-60.0)
        assert cfg.M == 1000


class TestPathLoss:
    def test_reference_boundary(self, cfg):
        assert path_loss(cfg.r0_m, cfg) == 1.0

    def test_two_reference_distances(self, cfg):
        assert path_loss(2.0 * cfg.r0_m, cfg) == pytest.approx(0.125)

    def test_inside_reference(self, cfg):
        assert path_loss(0.0, cfg) == 1.0

    def test_negative_distance_rejected(self, cfg):
        with pytest.raises(ValueError):
            path_loss(-1.0, cfg)

    def test_non_increasing_and_flat_inside(self, cfg):
        grid = np.linspace(0.0, cfg.R_m, 2000)
        vals = path_loss(grid, cfg)
        assert np.all(np.diff(vals) <= 0.0)
        assert np.all(vals[grid <= cfg.r0_m] == 1.0)
        # continuity across the reference distance
        eps = 1e-9
        assert path_loss(cfg.r0_m + eps, cfg) == pytest.approx(1.0, abs=1e-6)


class _FixedUniform:
    """Minimal stand-in generator returning a fixed uniform value."""

    def __init__(self, value):
        self.value = value

    def random(self, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)


class TestSampleDistance:
    def test_inverse_transform_quartile(self, cfg):
        assert sample_distance(_FixedUniform(0.25), cfg) == pytest.approx(0.5 * cfg.R_m)

    def test_boundary(self, cfg):
        assert sample_distance(_FixedUniform(1.0 - 1e-12), cfg) <= cfg.R_m

    def test_mean_matches_two_thirds_radius(self, cfg):
        # E[r] = int r * 2r/R^2 dr = 2R/3, Var[r] = R^2/18.
        n = 1_000_000
        draws = sample_distance(substream(5, 1), cfg, n)
        se = cfg.R_m / math.sqrt(18.0 * n)
        assert abs(draws.mean() - 2.0 * cfg.R_m / 3.0) <= 3.0 * se

    def test_kolmogorov_smirnov(self, cfg):
        n = 100_000
        draws = sample_distance(substream(6, 1), cfg, n)
        stat = kstest(draws, lambda r: np.clip(r / cfg.R_m, 0.0, 1.0) ** 2).statistic
        assert stat < 1.628 / math.sqrt(n)  # 1% critical value


class TestRayleighAmplitude:
    def test_mean(self):
        n = 1_000_000
        draws = sample_rayleigh_amplitude(substream(7, 1), n)
        target = math.sqrt(math.pi) / 2.0
        se = math.sqrt((1.0 - math.pi / 4.0) / n)
        assert abs(draws.mean() - target) <= 3.0 * se

    def test_mean_square(self):
        n = 1_000_000
        draws = sample_rayleigh_amplitude(substream(8, 1), n)
        # Var[|h|^2] = E|h|^4 - 1 = 1 for unit-power Rayleigh.
        assert abs((draws**2).mean() - 1.0) <= 3.0 / math.sqrt(n)

    def test_nonnegative(self):
        assert np.all(sample_rayleigh_amplitude(substream(9, 1), 10_000) >= 0.0)


class TestDrawUserChannels:
    def test_mean_gain_matches_closed_form(self, cfg):
        n = 1_000_000
        draw = draw_user_channels(substream(10, 1), n, cfg)
        target = analysis.e_sqrt_path_loss(cfg) * math.sqrt(math.pi) / 2.0
        var = analysis.e_path_loss(cfg) - target**2
        assert abs(draw.gains.mean() - target) <= 3.0 * math.sqrt(var / n)

    def test_mean_square_gain_matches_closed_form(self, cfg):
        n = 1_000_000
        draw = draw_user_channels(substream(11, 1), n, cfg)
        target = analysis.e_path_loss(cfg)
        # E[PL^2] by quadrature; Var[PL |h|^2] = 2 E[PL^2] - E[PL]^2.
        e_pl2 = quad(
            lambda r: path_loss(r, cfg) ** 2 * 2.0 * r / cfg.R_m**2,
            0.0,
            cfg.R_m,
            points=[cfg.r0_m],
        )[0]
        var = 2.0 * e_pl2 - target**2
        assert abs((draw.gains**2).mean() - target) <= 3.0 * math.sqrt(var / n)

    def test_deterministic_given_seed(self, cfg):
        a = draw_user_channels(substream(12, 1), 100, cfg)
        b = draw_user_channels(substream(12, 1), 100, cfg)
        assert np.array_equal(a.gains, b.gains)
        assert np.array_equal(a.distances, b.distances)

    def test_shapes_and_validation(self, cfg):
        draw = draw_user_channels(substream(13, 1), 5, cfg)
        assert draw.gains.shape == (5,)
        assert draw.distances.shape == (5,)
        assert draw.noise_var == cfg.noise_var
        with pytest.raises(ValueError):
            draw_user_channels(substream(13, 1), 0, cfg)

    def test_gains_bounded_by_path_loss_times_amplitude(self, cfg):
        # Phase correction removes phase, never amplitude: the stored gain
        # divided by sqrt(path_loss(r)) recovers a nonnegative amplitude.
        draw = draw_user_channels(substream(14, 1), 1000, cfg)
        implied = draw.gains / np.sqrt(path_loss(draw.distances, cfg))
        assert np.all(implied >= 0.0)

    def test_draw_is_immutable(self, cfg):
        draw = draw_user_channels(substream(15, 1), 3, cfg)
        with pytest.raises(ValueError):
            draw.gains[0] = 5.0


class TestChannelDrawInvariants:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ChannelDraw(gains=np.ones(3), distances=np.ones(4), noise_var=0.0)

    def test_negative_gain(self):
        with pytest.raises(ValueError):
            ChannelDraw(gains=np.array([-0.1]), distances=np.array([1.0]), noise_var=0.0)

    def test_negative_noise(self):
        with pytest.raises(ValueError):
            ChannelDraw(gains=np.ones(1), distances=np.ones(1), noise_var=-1.0)
