import numpy as np
import pytest
from scipy import stats

from topolab.initial import (
    InitialLaw,
    InitialLawError,
    PositionLaw,
    VelocityLaw,
    initial_law_from_json,
    sample_initial,
)


def all_position_laws():
    return [
        PositionLaw.uniform(),
        PositionLaw.cosine(0.3),
        PositionLaw.cosine(0.5, frequency=2),
        PositionLaw.two_mode(0.25, 0.15),
        PositionLaw.bump(),
    ]


def test_pdf_nonnegative_and_normalized():
    x = np.linspace(0.0, 1.0, 20001)
    for law in all_position_laws():
        pdf = law.pdf(x)
        assert np.all(pdf >= -1e-12)
        assert np.trapezoid(pdf, x) == pytest.approx(1.0, abs=1e-6)


def test_cdf_matches_pdf_and_boundaries():
    x = np.linspace(0.0, 1.0, 2001)
    for law in all_position_laws():
        cdf = law.cdf(x)
        assert cdf[0] == pytest.approx(0.0, abs=1e-14)
        assert cdf[-1] == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(cdf) >= -1e-12)
        # derivative check away from endpoints
        num = np.gradient(cdf, x)
        assert np.max(np.abs(num[5:-5] - law.pdf(x[5:-5]))) < 5e-4


def test_sampling_ks_statistic_below_critical():
    # 1% critical value of the one-sample KS statistic is ~1.63/sqrt(n)
    n = 10_000
    rng = np.random.default_rng(42)
    for law in all_position_laws():
        xs = law.sample(n, rng)
        res = stats.kstest(xs, law.cdf)
        assert res.statistic < 1.63 / np.sqrt(n)
        assert res.pvalue > 0.01


def test_cell_masses_sum_to_one():
    edges = np.linspace(0.0, 1.0, 65)
    for law in all_position_laws():
        masses = law.cell_masses(edges)
        assert masses.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(masses >= -1e-15)


def test_velocity_two_point_mean_and_support():
    law = VelocityLaw.two_point(1.0)
    rng = np.random.default_rng(0)
    v = law.sample(10_000, rng)
    assert set(np.unique(v)) == {-1.0, 1.0}
    # CLT sanity: mean within 3/sqrt(n)
    assert abs(v.mean()) < 3.0 / np.sqrt(10_000)


def test_velocity_cell_masses():
    law = VelocityLaw.discrete([[-1.0], [0.0], [1.0]], [0.25, 0.5, 0.25])
    edges = np.linspace(-1.25, 1.25, 6)  # cells centered at -1,-0.5,0,0.5,1
    masses = law.cell_masses(edges)
    np.testing.assert_allclose(masses, [0.25, 0.0, 0.5, 0.0, 0.25])
    with pytest.raises(InitialLawError):
        law.cell_masses(np.linspace(-0.5, 0.5, 3))


def test_sample_initial_deterministic():
    law = InitialLaw((PositionLaw.cosine(0.3),), VelocityLaw.two_point())
    a = sample_initial(law, 500, 123)
    b = sample_initial(law, 500, 123)
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.velocities, b.velocities)
    c = sample_initial(law, 500, 124)
    assert not np.array_equal(a.positions, c.positions)


def test_two_dimensional_law():
    law = InitialLaw(
        (PositionLaw.uniform(), PositionLaw.cosine(0.2)), VelocityLaw.four_point()
    )
    config = sample_initial(law, 100, 7)
    assert config.d == 2
    assert config.positions.shape == (100, 2)
    speeds = np.linalg.norm(config.velocities, axis=1)
    np.testing.assert_allclose(speeds, 1.0)


def test_json_round_trip():
    law = initial_law_from_json(
        {
            "position": {"form": "cosine", "amplitude": 0.3},
            "velocity": {"form": "two_point", "speed": 1.0},
        }
    )
    assert law.d == 1
    assert law.positions[0].amplitude == 0.3
    law2 = initial_law_from_json(
        {
            "position": [{"form": "uniform"}, {"form": "bump"}],
            "velocity": {"form": "four_point"},
        }
    )
    assert law2.d == 2
    with pytest.raises(InitialLawError):
        initial_law_from_json({"position": {"form": "nope"}, "velocity": {"form": "two_point"}})


def test_mismatched_dimensions_rejected():
    with pytest.raises(InitialLawError):
        InitialLaw((PositionLaw.uniform(),), VelocityLaw.four_point())
