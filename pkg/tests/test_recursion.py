import numpy as np
import pytest

from pdnac.errors import ConfigError
from pdnac.recursion import (
    NoiseModel,
    RecursionSpec,
    exact_noise,
    gaussian_noise,
    run_recursion,
    theorem_bound,
    verify_theorem6_bound,
)


def spd_system(n=5, seed=0, lam_lo=0.5, lam_hi=1.5):
    rng = np.random.default_rng(seed)
    q_mat, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eigs = np.linspace(lam_lo, lam_hi, n)
    p = q_mat @ np.diag(eigs) @ q_mat.T
    q = rng.normal(size=n)
    q *= 1.0 / np.linalg.norm(q)
    return p, q


def test_noiseless_identity_geometric_series():
    p = np.eye(1)
    q = np.array([1.0])
    spec = RecursionSpec(P=p, q=q, noise=exact_noise(p, q), step=0.5,
                         horizon=20, theorem_mode=False)
    traj = run_recursion(spec, np.zeros(1), seed=0)
    expected = 1.0 - 0.5 ** np.arange(21)
    assert np.allclose(traj[:, 0], expected, atol=1e-14)


def test_noiseless_contraction_bound_general_spd():
    p, q = spd_system(seed=1)
    spec = RecursionSpec(P=p, q=q, noise=exact_noise(p, q), step=0.3,
                         horizon=60, theorem_mode=False)
    x0 = np.zeros(5)
    traj = run_recursion(spec, x0, seed=0)
    x_star = spec.x_star
    err = np.linalg.norm(traj[-1] - x_star)
    assert err <= (1 - spec.step * spec.lambda_p) ** 60 * np.linalg.norm(x0 - x_star) + 1e-12


def test_variance_only_plateau_scales_with_step():
    p, q = spd_system(seed=2)
    x0 = np.zeros(5)
    plateaus = {}
    for step in (0.02, 0.01):
        noise = gaussian_noise(p, q, sigma_q=1.0)
        spec = RecursionSpec(P=p, q=q, noise=noise, step=step,
                             horizon=3000, theorem_mode=False)
        errs = []
        for rep in range(1000):
            traj = run_recursion(spec, x0, seed=rep)
            errs.append(np.linalg.norm(traj[-1] - spec.x_star) ** 2)
        plateaus[step] = np.mean(errs)
    ratio = plateaus[0.01] / plateaus[0.02]
    assert 0.4 <= ratio <= 0.6


def four_regimes(p, q, lam):
    sigma = 0.4
    bias_vec = np.full(q.shape, lam / 10 / np.sqrt(q.size))
    return {
        "noiseless": exact_noise(p, q),
        "variance_only": gaussian_noise(p, q, sigma_p=sigma, sigma_q=sigma),
        "bias_only": gaussian_noise(p, q, bias_q=bias_vec),
        "both": gaussian_noise(p, q, sigma_p=sigma, sigma_q=sigma, bias_q=bias_vec),
    }


def test_theorem6_bound_across_noise_regimes():
    p, q = spd_system(seed=3)
    lam = float(np.linalg.eigvalsh(0.5 * (p + p.T)).min())
    x0 = np.zeros(5)
    for name, noise in four_regimes(p, q, lam).items():
        step_cap = lam / (4 * (6 * noise.sigma_p**2 + 2 * np.linalg.norm(p, 2) ** 2))
        spec = RecursionSpec(P=p, q=q, noise=noise, step=step_cap,
                             horizon=400, theorem_mode=True)
        report = verify_theorem6_bound(spec, x0, replicas=300, seed=5)
        assert report["passed"], (name, report)
        assert report["ratio"] <= 1.0 + 1e-9, (name, report)


def test_biased_p_floor_respected():
    p, q = spd_system(seed=4)
    lam = float(np.linalg.eigvalsh(0.5 * (p + p.T)).min())
    bias_p = (lam / 8) * np.eye(5) / np.linalg.norm(np.eye(5), 2)
    noise = gaussian_noise(p, q, bias_p=bias_p)
    step = lam / (4 * (6 * noise.sigma_p**2 + 2 * np.linalg.norm(p, 2) ** 2))
    spec = RecursionSpec(P=p, q=q, noise=noise, step=step, horizon=2000,
                         theorem_mode=True)
    report = verify_theorem6_bound(spec, np.zeros(5), replicas=50, seed=6)
    assert report["passed"]
    assert report["measured"] > 0  # bias leaves a nonzero floor


def test_bias_only_floor_independent_of_horizon():
    p, q = spd_system(seed=5)
    bias = np.full(5, 0.02 / np.sqrt(5))
    noise = gaussian_noise(p, q, bias_q=bias)
    floors = []
    for horizon in (800, 1600):
        spec = RecursionSpec(P=p, q=q, noise=noise, step=0.05,
                             horizon=horizon, theorem_mode=False)
        traj = run_recursion(spec, np.zeros(5), seed=0)
        floors.append(np.linalg.norm(traj[-1] - spec.x_star) ** 2)
    # Shifted fixed point: x_bar = P^{-1}(q + bias); floor = |x_bar - x*|^2.
    expected = np.linalg.norm(np.linalg.solve(p, bias)) ** 2
    for floor in floors:
        assert abs(floor - expected) < 0.05 * expected + 1e-12


def test_bias_variance_separability():
    # The mean iterate is insensitive to variance at zero bias.
    p, q = spd_system(seed=6)
    x0 = np.zeros(5)
    spec_clean = RecursionSpec(P=p, q=q, noise=exact_noise(p, q), step=0.05,
                               horizon=300, theorem_mode=False)
    clean = run_recursion(spec_clean, x0, seed=0)[-1]

    noise = gaussian_noise(p, q, sigma_p=0.3, sigma_q=0.3)
    spec_noisy = RecursionSpec(P=p, q=q, noise=noise, step=0.05,
                               horizon=300, theorem_mode=False)
    reps = 3000
    acc = np.zeros(5)
    for rep in range(reps):
        acc += run_recursion(spec_noisy, x0, seed=rep)[-1]
    mean_noisy = acc / reps
    # Monte Carlo CI on the mean (componentwise, generous).
    assert np.linalg.norm(mean_noisy - clean) < 0.05


def test_theorem_mode_validates_step_and_bias():
    p, q = spd_system(seed=7)
    lam = float(np.linalg.eigvalsh(0.5 * (p + p.T)).min())
    with pytest.raises(ConfigError):
        RecursionSpec(P=p, q=q, noise=exact_noise(p, q), step=0.5,
                      horizon=10, theorem_mode=True)
    big_bias = np.eye(5) * lam  # delta_p = lam > lam/8
    noise = gaussian_noise(p, q, bias_p=big_bias)
    cap = lam / (4 * (6 * noise.sigma_p**2 + 2 * np.linalg.norm(p, 2) ** 2))
    with pytest.raises(ConfigError):
        RecursionSpec(P=p, q=q, noise=noise, step=cap, horizon=10, theorem_mode=True)


def test_non_spd_p_rejected():
    p = np.array([[0.0, 1.0], [-1.0, 0.0]])  # skew: sym part is zero
    with pytest.raises(ConfigError):
        RecursionSpec(P=p, q=np.ones(2), noise=exact_noise(p, np.ones(2)),
                      step=0.1, horizon=5, theorem_mode=False)
