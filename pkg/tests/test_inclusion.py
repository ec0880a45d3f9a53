import math

import numpy as np
import pytest

from slyap.analysis.example import example_system
from slyap.analysis.inclusion import (
    hat_lower_greedy,
    hat_upper_bound,
    kset_attraction_check,
    kset_estimate,
    kset_homogeneity_check,
    kset_lipschitz_constant,
    sphere_atlas,
    sphere_mesh,
)
from slyap.analysis.lyapunov import Side
from slyap.analysis.matkit import hausdorff
from slyap.analysis.model import BlockMode, BlockSystem, DecayEstimate
from slyap.config import HatConfig, KSetConfig
from slyap.errors import AssumptionError, DimensionError

INTERVAL = np.linspace(0.0, 20.0, 20001)[:, None]


@pytest.fixture(scope="module")
def example_cloud():
    return kset_estimate(example_system(), [1.0], KSetConfig(tolerance=0.05))


# ---------------------------------------------------------------------------
# K(x)
# ---------------------------------------------------------------------------

def test_example_cloud_matches_interval(example_cloud):
    assert example_cloud.points.shape[1] == 1
    assert hausdorff(example_cloud.points, INTERVAL) <= 0.1
    assert example_cloud.decay.delta == pytest.approx(0.1)
    assert example_cloud.burn_in > 0.0


def test_cloud_is_seeded(example_sys):
    cfg = KSetConfig(signals=4, horizon=100.0, seed=11)
    a = kset_estimate(example_sys, [1.0], cfg)
    b = kset_estimate(example_sys, [1.0], cfg)
    assert np.array_equal(a.points, b.points)


def test_homogeneity(example_sys):
    assert kset_homogeneity_check(example_sys, [1.0], 2.0, KSetConfig(tolerance=0.05)) <= 0.1


@pytest.mark.parametrize("scale", [0.5, -1.0])
def test_homogeneity_other_scales(example_sys, scale):
    assert kset_homogeneity_check(example_sys, [1.0], scale, KSetConfig(tolerance=0.05)) <= 0.1


def test_longer_runs_keep_the_cloud(example_sys):
    short = kset_estimate(example_sys, [1.0], KSetConfig(signals=16, horizon=1000.0, tolerance=0.05))
    long = kset_estimate(example_sys, [1.0], KSetConfig(signals=32, horizon=2000.0, tolerance=0.05))
    assert short.burn_in == long.burn_in
    assert hausdorff(short.points, long.points) <= 2 * 0.05


def test_clouds_are_lipschitz_in_x(example_sys, rng):
    cfg = KSetConfig(signals=16, horizon=1000.0, tolerance=0.05)
    decay = example_sys.assumption().decay
    bound = kset_lipschitz_constant(example_sys, decay)
    ratios = []
    for _ in range(6):
        x1 = rng.uniform(-3.0, 3.0)
        x2 = x1 + rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0)
        gap = hausdorff(kset_estimate(example_sys, [x1], cfg, decay).points,
                        kset_estimate(example_sys, [x2], cfg, decay).points)
        assert gap <= bound * abs(x1 - x2) + 4 * cfg.tolerance
        ratios.append(gap / abs(x1 - x2))
    # K(x) = x·[0, 20]: the fitted constant lies between 10 and 20
    fitted = max(ratios)
    assert 9.0 <= fitted <= bound + 8 * cfg.tolerance


def test_negative_direction_mirrors(example_sys, example_cloud):
    mirrored = kset_estimate(example_sys, [-1.0], KSetConfig(tolerance=0.05))
    assert hausdorff(mirrored.points, -example_cloud.points) <= 0.1


def test_cloud_attracts_restarted_runs(example_sys, example_cloud):
    assert kset_attraction_check(example_sys, example_cloud, KSetConfig(tolerance=0.05)) <= 0.1


def test_cloud_of_origin_is_a_point(example_sys):
    cloud = kset_estimate(example_sys, [0.0])
    assert np.array_equal(cloud.points, np.zeros((1, 1)))


def test_cloud_checks_dimension(example_sys):
    with pytest.raises(DimensionError):
        kset_estimate(example_sys, [1.0, 2.0])


def test_cloud_requires_stable_fast_dynamics():
    sys = BlockSystem(n=1, m=1, modes=(BlockMode(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=[[0.5]]),))
    with pytest.raises(AssumptionError):
        kset_estimate(sys, [1.0])


def test_lipschitz_constant(example_sys):
    assert kset_lipschitz_constant(example_sys, DecayEstimate(c=1.0, delta=0.1)) == pytest.approx(20.0)


# ---------------------------------------------------------------------------
# Sphere atlas
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n, samples", [(1, None), (2, 8), (3, 64)])
def test_atlas_is_antipodal_and_unit(n, samples):
    atlas = sphere_atlas(n, samples)
    assert atlas.shape[1] == n
    assert np.allclose(np.linalg.norm(atlas, axis=1), 1.0)
    assert np.allclose(atlas[0::2], -atlas[1::2])


def test_circle_mesh_is_exact():
    atlas = sphere_atlas(2, 8)
    assert sphere_mesh(atlas) == pytest.approx(2.0 * math.sin(math.pi / 16.0))
    assert sphere_mesh(sphere_atlas(1)) == 0.0


def test_mesh_shrinks_with_samples():
    assert sphere_mesh(sphere_atlas(3, 512)) < sphere_mesh(sphere_atlas(3, 32))


# ---------------------------------------------------------------------------
# Σ̂ bounds
# ---------------------------------------------------------------------------

def test_hat_upper_bound_of_example(example_sys):
    bound = hat_upper_bound(example_sys, config=KSetConfig(tolerance=0.05))
    assert bound.side is Side.UPPER
    assert bound.value == pytest.approx(19.0, abs=0.3)
    assert bound.certificate.method == "hat-sphere"
    assert bound.certificate.data["argmax"]["mode"] == 0


def test_hat_greedy_of_example(example_sys):
    greedy = hat_lower_greedy(example_sys, config=KSetConfig(tolerance=0.05))
    upper = hat_upper_bound(example_sys, config=KSetConfig(tolerance=0.05))
    assert greedy.heuristic
    assert greedy.side is Side.LOWER
    assert greedy.value == pytest.approx(19.0, abs=0.3)
    assert greedy.value <= upper.value + 0.05


def test_hat_bounds_of_decoupled_system():
    modes = (
        BlockMode(A=[[-0.5, 0.0], [0.0, -1.0]], B=np.zeros((2, 1)), C=np.zeros((1, 2)), D=[[-1.0]]),
        BlockMode(A=[[-2.0, 0.0], [0.0, -0.25]], B=np.zeros((2, 1)), C=np.zeros((1, 2)), D=[[-1.0]]),
    )
    sys = BlockSystem(n=2, m=1, modes=modes)
    hat = HatConfig(sphere_samples=64, greedy_horizon=0.5, greedy_step=1e-3)
    upper = hat_upper_bound(sys, hat)
    # max over the circle of xᵀAx is the largest diagonal entry; the sampled
    # atlas contains both axes, the Lipschitz slack covers the rest
    assert upper.certificate.data["sampled_max"] == pytest.approx(-0.25)
    assert upper.value >= -0.25
    greedy = hat_lower_greedy(sys, [1.0, 1.0], hat)
    assert greedy.value <= upper.value


def test_greedy_stays_below_upper_on_random_systems(rng):
    hat = HatConfig(sphere_samples=32, greedy_horizon=0.5, greedy_step=1e-3)
    cfg = KSetConfig(signals=8, horizon=200.0, tolerance=0.05)
    for _ in range(3):
        modes = tuple(
            BlockMode(A=0.5 * rng.normal(size=(2, 2)), B=0.5 * rng.normal(size=(2, 1)),
                      C=0.5 * rng.normal(size=(1, 2)), D=[[-rng.uniform(0.5, 2.0)]])
            for _ in range(2)
        )
        sys = BlockSystem(n=2, m=1, modes=modes)
        upper = hat_upper_bound(sys, hat, cfg)
        greedy = hat_lower_greedy(sys, [1.0, 0.0], hat, cfg)
        assert greedy.value <= upper.value + 0.05
