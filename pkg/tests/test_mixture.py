import mpmath
import numpy as np
import pytest
from scipy import integrate

from gammaflow.mixture import (GaussianMixture, default_dataset, default_dataset_2d,
                               diffuse, evaluation_interval, gaussian_prior)
from gammaflow.processes import make_process


def std_normal_1d():
    return GaussianMixture(np.array([1.0]), np.array([[0.0]]), np.array([1.0]))


def mp_log_density(p, x, dps=60):
    """Oracle: direct high-precision summation of the mixture density."""
    with mpmath.workdps(dps):
        total = mpmath.mpf(0)
        for w, mu, sd in zip(p.weights, p.means[:, 0], p.stddevs):
            w, mu, sd, xx = map(mpmath.mpf, (float(w), float(mu), float(sd), float(x)))
            total += w * mpmath.exp(-((xx - mu) ** 2) / (2 * sd**2)) / (
                mpmath.sqrt(2 * mpmath.pi) * sd
            )
        return float(mpmath.log(total))


def mp_score(p, x, dps=200):
    """Oracle: responsibility-weighted score by high-precision summation."""
    with mpmath.workdps(dps):
        num = mpmath.mpf(0)
        den = mpmath.mpf(0)
        for w, mu, sd in zip(p.weights, p.means[:, 0], p.stddevs):
            w, mu, sd, xx = map(mpmath.mpf, (float(w), float(mu), float(sd), float(x)))
            dens = w * mpmath.exp(-((xx - mu) ** 2) / (2 * sd**2)) / (
                mpmath.sqrt(2 * mpmath.pi) * sd
            )
            num += dens * (mu - xx) / sd**2
            den += dens
        return float(num / den)


def test_default_dataset_parameters():
    p = default_dataset()
    assert np.allclose(p.weights, [0.1, 0.9])
    assert np.allclose(p.means[:, 0], [-1.0, 0.1])
    assert np.allclose(p.stddevs, [0.2, 0.1])
    assert float(p.mean()[0]) == pytest.approx(-0.01, abs=1e-15)


def test_default_dataset_density_normalized():
    p = default_dataset()
    val, _ = integrate.quad(lambda x: float(p.density(np.array([x]))), -3, 3,
                            limit=300, points=[-1.0, 0.1])
    assert val == pytest.approx(1.0, abs=1e-9)


def test_log_density_values():
    assert float(std_normal_1d().log_density(np.array([0.0]))) == pytest.approx(
        -0.5 * np.log(2 * np.pi), abs=1e-14
    )
    p = default_dataset()
    x = 0.1
    assert float(p.log_density(np.array([x]))) == pytest.approx(
        mp_log_density(p, x), rel=1e-12
    )
    far = float(p.log_density(np.array([10.0])))
    assert np.isfinite(far)


def test_score_values():
    assert float(std_normal_1d().score(np.array([0.7]))) == pytest.approx(-0.7, abs=1e-14)
    p = default_dataset()
    # central finite difference of log-density
    h = 1e-5
    x = -0.5
    fd = (float(p.log_density(np.array([x + h]))) -
          float(p.log_density(np.array([x - h])))) / (2 * h)
    assert float(p.score(np.array([x]))) == pytest.approx(fd, rel=1e-6)
    # deep tail: matches the high-precision oracle, stays finite
    tail = float(p.score(np.array([50.0])))
    assert np.isfinite(tail)
    assert tail == pytest.approx(mp_score(p, 50.0), rel=1e-10)


def test_score_matches_log_density_gradient_randomized():
    p = default_dataset()
    lo = float(np.min(p.means) - 6 * np.max(p.stddevs))
    hi = float(np.max(p.means) + 6 * np.max(p.stddevs))
    xs = np.random.default_rng(3).uniform(lo, hi, size=(1000, 1))
    h = 1e-5
    fd = (p.log_density(xs + h) - p.log_density(xs - h)) / (2 * h)
    sc = p.score(xs)[:, 0]
    rel = np.abs(sc - fd) / np.maximum(np.abs(fd), 1e-2)
    assert rel.max() < 1e-5


@pytest.mark.parametrize("t", [0.0, 0.1, 0.75])
def test_score_derivative_bounded(t):
    # spot check of global Lipschitz continuity: no finite-difference blow-up
    p0 = default_dataset()
    p = diffuse(p0, make_process("edm"), t)
    xs = np.linspace(-4, 4, 4001)[:, None]
    h = 1e-6
    deriv = (p.score(xs + h) - p.score(xs - h))[:, 0] / (2 * h)
    assert np.all(np.isfinite(deriv))
    assert np.max(np.abs(deriv)) < 1e3


def test_sampling_moments_and_determinism():
    p = default_dataset()
    pop = p.sample(100_000, seed=5)
    pop_std = np.sqrt(p.covariance_trace())
    assert abs(pop.positions.mean() - (-0.01)) < 3 * pop_std / np.sqrt(100_000)

    g = std_normal_1d()
    var = g.sample(100_000, seed=6).positions.var()
    assert 0.98 < var < 1.02

    again = p.sample(100_000, seed=5)
    assert np.array_equal(pop.positions, again.positions)


def test_diffuse_transform():
    p0 = default_dataset()
    proc = make_process("edm")
    same = diffuse(p0, proc, 0.0)
    assert np.allclose(same.means, p0.means) and np.allclose(same.stddevs, p0.stddevs)

    pt = diffuse(p0, proc, 0.75)
    assert np.allclose(pt.stddevs, [np.sqrt(0.04 + 0.5625), np.sqrt(0.01 + 0.5625)])

    single = GaussianMixture(np.array([1.0]), np.array([[2.0]]), np.array([1.0]))
    out = diffuse(single, proc, 0.6)
    assert float(out.means[0, 0]) == 2.0
    assert float(out.stddevs[0]) ** 2 == pytest.approx(1.0 + 0.36, abs=1e-14)


def test_diffuse_matches_forward_simulation():
    # Euler-Maruyama forward integration oracle for the diffused marginal
    p0 = default_dataset()
    proc = make_process("edm")
    t_end, n_steps, count = 0.5, 400, 100_000
    rng = np.random.default_rng(8)
    x = p0.sample(count, seed=8).positions[:, 0]
    dt = t_end / n_steps
    for i in range(n_steps):
        t = i * dt
        x = x + float(proc.diffusion(t)) * np.sqrt(dt) * rng.standard_normal(count)
    pt = diffuse(p0, proc, t_end)
    mean_exact = float(pt.mean()[0])
    var_exact = pt.covariance_trace()
    assert abs(x.mean() - mean_exact) < 4 * np.sqrt(var_exact / count)
    # EM variance carries an O(dt) bias of g^2*dt/2 per unit time; allow for it
    assert abs(x.var() - var_exact) < 4 * var_exact * np.sqrt(2 / count) + 2.0 * t_end * dt


def test_validation_errors():
    with pytest.raises(ValueError):
        GaussianMixture(np.array([0.5, 0.6]), np.array([[0.0], [1.0]]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        GaussianMixture(np.array([-0.1, 1.1]), np.array([[0.0], [1.0]]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        GaussianMixture(np.array([1.0]), np.array([[0.0]]), np.array([0.0]))
    with pytest.raises(ValueError):
        GaussianMixture(np.array([1.0]), np.array([[np.inf]]), np.array([1.0]))
    with pytest.raises(ValueError):
        default_dataset().score(np.zeros((3, 2)))  # wrong dimension


def test_2d_preset_and_interval():
    p = default_dataset_2d()
    assert p.dim == 2 and p.n_components == 2
    xs = p.sample(20_000, seed=1).positions
    assert np.all(np.isfinite(p.score(xs)))
    lo, hi = evaluation_interval(default_dataset(), n_std=10)
    assert lo < -1 and hi > 0.1


def test_gaussian_prior_matches_marginal_std():
    proc = make_process("edm")
    q = gaussian_prior(proc, 0.75)
    assert float(q.stddevs[0]) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        gaussian_prior(proc, 0.0)
