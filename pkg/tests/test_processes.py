import numpy as np
import pytest
from scipy import integrate

from gammaflow.processes import ForwardProcess, eval_coeffs, make_process


def quad_sigma_sq(process, t):
    """Oracle: sigma(t)^2 = int_0^t g^2/s^2 by quadrature."""
    val, _ = integrate.quad(
        lambda r: float(process.diffusion(r)) ** 2 / float(process.scale(r)) ** 2,
        0.0, t, limit=200,
    )
    return val


def quad_scale(process, t):
    """Oracle: s(t) = exp(int_0^t a)."""
    val, _ = integrate.quad(lambda r: float(process.drift_coeff(r)), 0.0, t, limit=200)
    return np.exp(val)


def test_edm_closed_forms():
    p = make_process("edm")
    assert float(p.noise_level(0.75)) == pytest.approx(0.75, abs=0)
    assert float(p.scale(0.75)) == 1.0


def test_ve_closed_forms():
    p = make_process("ve")
    assert float(p.noise_level(0.25)) == pytest.approx(0.5, abs=0)
    assert float(p.scale(0.25)) == 1.0


def test_vp_closed_forms_match_quadrature():
    p = make_process("vp", beta1=19.9, beta2=0.1)
    for t in (0.1, 0.2):
        sig2 = float(p.noise_level(t)) ** 2
        assert sig2 == pytest.approx(quad_sigma_sq(p, t), rel=1e-8)
        assert float(p.scale(t)) == pytest.approx(quad_scale(p, t), rel=1e-8)


def test_eval_coeffs_values():
    a, g, s, sig = eval_coeffs(make_process("edm"), 0.0)
    assert (float(a), float(g), float(s), float(sig)) == (0.0, 0.0, 1.0, 0.0)
    a, g, s, sig = eval_coeffs(make_process("ve"), 1.0)
    assert (float(a), float(g), float(s), float(sig)) == (0.0, 1.0, 1.0, 1.0)
    p = make_process("vp")
    a, g, s, sig = eval_coeffs(p, 0.1)
    assert float(a) == pytest.approx(-0.5 * (19.9 * 0.1 + 0.1))
    assert float(g) == pytest.approx(np.sqrt(19.9 * 0.1 + 0.1))
    assert float(sig) ** 2 == pytest.approx(quad_sigma_sq(p, 0.1), rel=1e-8)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        make_process("vp", beta1=-1.0)
    with pytest.raises(ValueError):
        make_process("vp", beta2=0.0)
    with pytest.raises(ValueError):
        make_process("edm", beta1=1.0)
    with pytest.raises(ValueError):
        make_process("heat")
    with pytest.raises(ValueError):
        make_process("edm").noise_level(-0.1)
    with pytest.raises(ValueError):
        make_process("edm").diffusion(100.0)  # beyond t_max


@pytest.mark.parametrize("kind", ["edm", "ve", "vp"])
def test_quadrature_consistency_random_times(kind):
    p = make_process(kind)
    rng = np.random.default_rng(11)
    for t in rng.uniform(1e-3, 1.0, size=100):
        sig2 = float(p.noise_level(t)) ** 2
        assert abs(sig2 - quad_sigma_sq(p, t)) / sig2 < 1e-8


@pytest.mark.parametrize("kind", ["edm", "ve", "vp"])
def test_noise_level_strictly_increasing(kind):
    p = make_process(kind)
    ts = np.linspace(1e-4, 2.0, 400)
    sig = np.asarray(p.noise_level(ts))
    assert np.all(np.diff(sig) > 0)


@pytest.mark.parametrize("kind", ["edm", "ve", "vp"])
def test_time_of_noise_inverts_noise_level(kind):
    p = make_process(kind)
    ts = np.linspace(0.01, 2.0, 25)
    back = np.asarray(p.time_of_noise(p.noise_level(ts)))
    assert np.allclose(back, ts, rtol=1e-12, atol=1e-12)


def test_frozen_dataclass():
    p = make_process("edm")
    with pytest.raises(Exception):
        p.kind = "ve"
    assert isinstance(p, ForwardProcess)
