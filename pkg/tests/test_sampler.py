import numpy as np
import pytest

from gammaflow.entropy import kl_histogram
from gammaflow.mixture import GaussianMixture, default_dataset, diffuse
from gammaflow.population import ParticlePopulation
from gammaflow.processes import make_process
from gammaflow.sampler import (GammaSchedule, MixtureScore, NonFiniteStateError,
                               ParametricGaussianScore, PerturbedScore, TimeGrid,
                               constant_gamma, effective_step_size, integrate,
                               interval_gamma, karras_grid, reverse_step, step_noise,
                               time_grid_for_process)


def single_gaussian(mu=0.0, sd=1.0):
    return GaussianMixture(np.array([1.0]), np.array([[mu]]), np.array([sd]))


# --- schedules ---------------------------------------------------------------

def test_constant_schedule():
    s = constant_gamma(2.5)
    assert s.evaluate(0.0) == 2.5 and s.evaluate(0.7) == 2.5


def test_interval_schedule_boundaries_and_degenerate():
    s = interval_gamma(2.0, 0.2, 0.5)
    assert s.evaluate(0.19) == 0.0
    assert s.evaluate(0.2) == 2.0
    assert s.evaluate(0.5) == 2.0
    assert s.evaluate(0.51) == 0.0
    # a measure-zero window carries no stochasticity
    degenerate = interval_gamma(2.0, 0.3, 0.3)
    assert degenerate.evaluate(0.3) == 0.0


def test_schedule_validation():
    with pytest.raises(ValueError):
        constant_gamma(-1.0)
    with pytest.raises(ValueError):
        interval_gamma(1.0, 0.5, 0.2)
    with pytest.raises(ValueError):
        GammaSchedule("sometimes", 1.0)


# --- grids -------------------------------------------------------------------

def test_karras_grid_endpoints():
    g = karras_grid(0.75, 2, sigma_min=0.002, rho=7.0)
    assert np.allclose(g.nodes, [0.75, 0.002, 0.0])


def test_karras_grid_shape_and_monotonicity():
    g = karras_grid(0.75, 500, sigma_min=0.002, rho=7.0)
    assert len(g.nodes) == 501
    assert g.nodes[-1] == 0.0
    assert np.all(np.diff(g.nodes) < 0)
    assert g.n_steps == 500


def test_karras_grid_midpoint_formula():
    g = karras_grid(0.75, 3, sigma_min=0.002, rho=7.0)
    expected = ((0.75 ** (1 / 7) + 0.002 ** (1 / 7)) / 2) ** 7
    assert float(g.nodes[1]) == pytest.approx(expected, rel=1e-14)


def test_karras_grid_validation():
    with pytest.raises(ValueError):
        karras_grid(0.001, 10)  # t_end <= sigma_min
    with pytest.raises(ValueError):
        karras_grid(0.75, 1)
    with pytest.raises(ValueError):
        karras_grid(0.75, 10, rho=0.0)
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.5, 0.5, 0.0]))


@pytest.mark.parametrize("kind", ["edm", "ve", "vp"])
def test_grid_for_process_lands_on_sigma_levels(kind):
    proc = make_process(kind)
    t_end = {"edm": 0.75, "ve": 0.56, "vp": 0.20}[kind]
    g = time_grid_for_process(proc, t_end, 50)
    assert float(g.nodes[0]) == pytest.approx(t_end, rel=1e-12)
    assert g.nodes[-1] == 0.0
    # interior nodes sit on the power-law schedule in noise-level space
    sig = np.asarray(proc.noise_level(g.nodes[:-1]))
    ref = karras_grid(float(proc.noise_level(t_end)), 50).nodes[:-1]
    assert np.allclose(sig, ref, rtol=1e-10)


# --- single steps ------------------------------------------------------------

def test_reverse_step_is_exact_linear_map_for_ode():
    # gamma=0, single-Gaussian data, EDM: the Euler step is an exact affine
    # map x -> (1 - t dt/(1+t^2)) x; oracle is the closed-form flow solution
    proc = make_process("edm")
    p0 = single_gaussian()
    score = MixtureScore(p0, proc)
    t_from, t_to = 0.6, 0.55
    pop = diffuse(p0, proc, t_from).sample(20_000, seed=3, forward_time=t_from)
    out = reverse_step(pop, proc, score, constant_gamma(0.0), t_from, t_to)
    factor = 1.0 - t_from * (t_from - t_to) / (1.0 + t_from**2)
    assert np.allclose(out.positions, factor * pop.positions, rtol=1e-12)
    # Euler factor approximates the exact flow factor to O(dt^2)
    exact = np.sqrt((1 + t_to**2) / (1 + t_from**2))
    assert abs(factor - exact) < 2.0 * (t_from - t_to) ** 2


def test_reverse_step_euler_consistency():
    # drift part matches the reverse-equation integrand at the left node
    proc = make_process("vp")
    p0 = default_dataset()
    score = MixtureScore(p0, proc)
    t_from, dt, gamma = 0.2, 1e-6, 3.0
    pop = diffuse(p0, proc, t_from).sample(500, seed=1, forward_time=t_from)
    out = reverse_step(pop, proc, score, constant_gamma(gamma), t_from, t_from - dt,
                       step_index=9)
    a = float(proc.drift_coeff(t_from))
    g = float(proc.diffusion(t_from))
    drift = -a * pop.positions + 0.5 * g**2 * (1 + gamma) * score.evaluate(
        pop.positions, t_from
    )
    noise = np.sqrt(gamma) * g * np.sqrt(dt) * step_noise(pop.seed, 9, pop.positions.shape)
    assert np.allclose(out.positions, pop.positions + drift * dt + noise, atol=1e-15)


def test_reverse_step_determinism_and_validation():
    proc = make_process("edm")
    p0 = default_dataset()
    score = MixtureScore(p0, proc)
    pop = diffuse(p0, proc, 0.5).sample(1000, seed=11, forward_time=0.5)
    a = reverse_step(pop, proc, score, constant_gamma(1.0), 0.5, 0.45, step_index=4)
    b = reverse_step(pop, proc, score, constant_gamma(1.0), 0.5, 0.45, step_index=4)
    assert np.array_equal(a.positions, b.positions)
    c = reverse_step(pop, proc, score, constant_gamma(1.0), 0.5, 0.45, step_index=5)
    assert not np.array_equal(a.positions, c.positions)
    with pytest.raises(ValueError):
        reverse_step(pop, proc, score, constant_gamma(1.0), 0.45, 0.5)


def test_non_finite_state_reports_step():
    proc = make_process("edm")
    p0 = default_dataset()
    bad = PerturbedScore(MixtureScore(p0, proc),
                         lambda x, t: np.full_like(x, np.inf))
    grid = karras_grid(0.75, 10)
    start = diffuse(p0, proc, 0.75).sample(100, seed=0, forward_time=0.75)
    with pytest.raises(NonFiniteStateError) as err:
        integrate(start, proc, bad, constant_gamma(1.0), grid)
    assert err.value.step_index == 0
    assert err.value.gamma == 1.0
    assert err.value.dt > 0


# --- full integration ----------------------------------------------------------

def test_integrate_exact_prior_recovers_data():
    proc = make_process("edm")
    p0 = default_dataset()
    score = MixtureScore(p0, proc)
    grid = karras_grid(0.75, 300)
    start = diffuse(p0, proc, 0.75).sample(50_000, seed=21, forward_time=0.75)
    ref = p0.sample(100_000, seed=1234)
    for gamma in (0.0, 1.0):
        final = integrate(start, proc, score, constant_gamma(gamma), grid)[-1]
        assert final.forward_time == 0.0
        est = kl_histogram(final, ref)
        assert est.value < 5e-3


def test_marginal_gamma_invariance():
    # same target for gamma in {0, 1, 2}; histogram KLs agree within
    # estimator precision plus discretization tolerance
    proc = make_process("edm")
    p0 = default_dataset()
    score = MixtureScore(p0, proc)
    grid = karras_grid(0.75, 300)
    start = diffuse(p0, proc, 0.75).sample(50_000, seed=33, forward_time=0.75)
    ref = p0.sample(100_000, seed=4321)
    kls = [kl_histogram(integrate(start, proc, score, constant_gamma(g), grid)[-1],
                        ref).value
           for g in (0.0, 1.0, 2.0)]
    assert max(kls) - min(kls) < 1e-2
    assert max(kls) < 1e-2


def test_integrate_bit_reproducible():
    proc = make_process("edm")
    p0 = default_dataset()
    score = MixtureScore(p0, proc)
    grid = karras_grid(0.75, 50)
    start = diffuse(p0, proc, 0.75).sample(2_000, seed=7, forward_time=0.75)
    a = integrate(start, proc, score, constant_gamma(2.0), grid)[-1]
    b = integrate(start, proc, score, constant_gamma(2.0), grid)[-1]
    assert np.array_equal(a.positions, b.positions)


def test_integrate_recording_and_interior_start():
    proc = make_process("edm")
    p0 = default_dataset()
    score = MixtureScore(p0, proc)
    grid = karras_grid(0.75, 40)
    start = diffuse(p0, proc, 0.75).sample(500, seed=2, forward_time=0.75)
    recs = integrate(start, proc, score, constant_gamma(0.0), grid,
                     record_at=[0.75, 0.4, 0.0])
    assert len(recs) == 3
    assert recs[0].forward_time == 0.75
    assert recs[-1].forward_time == 0.0
    # requested times snap to the nearest node
    assert any(abs(r.forward_time - 0.4) < 0.05 for r in recs)

    # start from an interior node
    t_mid = float(grid.nodes[17])
    mid_start = diffuse(p0, proc, t_mid).sample(500, seed=2, forward_time=t_mid)
    out = integrate(mid_start, proc, score, constant_gamma(0.0), grid)[-1]
    assert out.forward_time == 0.0

    # zero steps: already at the terminal node
    done = ParticlePopulation(np.zeros((5, 1)), 0.0, 0)
    same = integrate(done, proc, score, constant_gamma(0.0), grid)
    assert len(same) == 1 and same[0] is done

    with pytest.raises(ValueError):
        off = ParticlePopulation(np.zeros((5, 1)), 0.3999, 0)
        integrate(off, proc, score, constant_gamma(0.0), karras_grid(0.75, 4))


def test_step_noise_counter_addressing():
    a = step_noise(123, 0, (100, 1))
    b = step_noise(123, 0, (100, 1))
    c = step_noise(123, 1, (100, 1))
    d = step_noise(124, 0, (100, 1))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_effective_step_size():
    grid_uniform = TimeGrid(np.linspace(0.75, 0.0, 11))
    eff, dt = effective_step_size(constant_gamma(0.0), grid_uniform)
    assert np.all(eff == 0.0)
    eff, dt = effective_step_size(constant_gamma(20.0), grid_uniform)
    assert np.allclose(eff, 20.0 * 0.075)
    assert np.allclose(dt, 0.075)

    kg = karras_grid(0.75, 30)
    sched = interval_gamma(2.0, 0.1, 0.5)
    eff, dt = effective_step_size(sched, kg)
    gam = np.asarray(sched.evaluate(kg.nodes[:-1]))
    assert np.allclose(eff, gam * -np.diff(kg.nodes))


def test_parametric_score_matches_exact_for_gaussian():
    proc = make_process("ve")
    field = ParametricGaussianScore(proc, mu_theta=2.0, alpha_theta=1.0, sigma0=1.0)
    p0 = single_gaussian(2.0, 1.0)
    xs = np.linspace(-1, 5, 50)[:, None]
    t = 3.0
    assert np.allclose(field.evaluate(xs, t), diffuse(p0, proc, t).score(xs), rtol=1e-12)
