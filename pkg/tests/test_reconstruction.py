import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_scene_arrays
from metricpose.camera import Pose2D, Pose3D
from metricpose.errors import BehindCameraError, ContractError, DegenerateGeometryError, UnderdeterminedError
from metricpose.reconstruction import (ReconstructionInput, RootSolution, border_mask,
                                       build_full_perspective_system, compose_absolute, depth_ratio,
                                       solve_root_full, solve_root_full_with_jacobian, solve_root_weak)
from metricpose.skeleton import DEFAULT_BONES
from metricpose.synth import make_rng, random_pose


def lstsq_root(xy, rel, mask=None):
    """Independent oracle: perspective equations solved by numpy's SVD least squares."""
    xy, rel = np.asarray(xy, float), np.asarray(rel, float)
    if mask is not None:
        xy, rel = xy[mask], rel[mask]
    rows, rhs = [], []
    for (x, y), (dx, dy, dz) in zip(xy, rel):
        rows += [[1.0, 0.0, -x], [0.0, 1.0, -y]]
        rhs += [x * dz - dx, y * dz - dy]
    return np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]


def test_system_rows_follow_projection():
    p2d = Pose2D([[0.1, -0.2], [0.3, 0.05]], "normalized")
    rel = Pose3D([[0, 0, 0], [100.0, -50.0, 200.0]], "root_relative", 0)
    A, b = build_full_perspective_system(ReconstructionInput(p2d, rel))
    np.testing.assert_allclose(A, [[1, 0, -0.1], [0, 1, 0.2], [1, 0, -0.3], [0, 1, -0.05]])
    np.testing.assert_allclose(b, [0, 0, 0.3 * 200 - 100, 0.05 * 200 + 50])


def test_recovers_known_offset(rng):
    rel = random_pose(DEFAULT_BONES, rng)
    offset = np.array([100.0, -50.0, 3000.0])
    absolute = rel.joints + offset
    p2d = Pose2D(absolute[:, :2] / absolute[:, 2:], "normalized")
    sol = solve_root_full(ReconstructionInput(p2d, rel))
    assert np.max(np.abs(sol.offset - offset)) <= 1e-6 * np.linalg.norm(offset)
    assert sol.residual_rms <= 1e-9


def test_exact_on_random_scenes(rng):
    for _ in range(300):
        n = int(rng.integers(2, 18))
        p2d, rel, offset = random_scene_arrays(rng, n)
        sol = solve_root_full(ReconstructionInput(p2d, rel))
        assert np.linalg.norm(sol.offset - offset) <= 1e-6 * np.linalg.norm(offset)


def test_matches_lstsq_oracle_on_noisy_input(rng):
    for _ in range(100):
        p2d, rel, _ = random_scene_arrays(rng)
        noisy = Pose2D(p2d.joints + rng.normal(0, 0.01, p2d.joints.shape), "normalized")
        mask = rng.random(17) < 0.7
        mask[:2] = True
        sol = solve_root_full(ReconstructionInput(noisy, rel, mask))
        np.testing.assert_allclose(sol.offset, lstsq_root(noisy.joints, rel.joints, mask), rtol=1e-8)


def test_residual_positive_when_inconsistent(rng):
    p2d, rel, _ = random_scene_arrays(rng)
    noisy = Pose2D(p2d.joints + rng.normal(0, 1e-3, p2d.joints.shape), "normalized")
    assert solve_root_full(ReconstructionInput(noisy, rel)).residual_rms > 1e-3


def test_degenerate_configurations():
    rel = Pose3D(np.zeros((5, 3)), "root_relative", 0)
    coincident = Pose2D(np.full((5, 2), 0.2), "normalized")
    for solver in (solve_root_full, solve_root_weak, solve_root_full_with_jacobian):
        with pytest.raises(DegenerateGeometryError):
            solver(ReconstructionInput(coincident, rel))
    two = ReconstructionInput(Pose2D([[0.1, 0.2], [0.3, 0.1]], "normalized"),
                              Pose3D(np.zeros((2, 3)), "root_relative", 0), [True, False])
    with pytest.raises(UnderdeterminedError):
        solve_root_full(two)


def test_mask_combines_with_validity(rng):
    p2d, rel, _ = random_scene_arrays(rng, 4)
    invalid = Pose2D(p2d.joints, "normalized", [True, True, False, True])
    inp = ReconstructionInput(invalid, rel, [True, False, True, True])
    assert inp.mask.tolist() == [True, False, False, True]


def test_input_contracts(rng):
    p2d, rel, _ = random_scene_arrays(rng, 4)
    with pytest.raises(ContractError):
        ReconstructionInput(Pose2D(p2d.joints, "pixel"), rel)
    with pytest.raises(ContractError):
        ReconstructionInput(p2d, Pose3D(rel.joints + 5000.0, "absolute"))


def test_weak_matches_lstsq_oracle(rng):
    for _ in range(100):
        p2d, rel, _ = random_scene_arrays(rng)
        xy = p2d.joints + rng.normal(0, 0.005, (17, 2))
        sol = solve_root_weak(ReconstructionInput(Pose2D(xy, "normalized"), rel))
        flat = rel.joints.copy()
        flat[:, 2] = 0.0
        np.testing.assert_allclose(sol.offset, lstsq_root(xy, flat), rtol=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 17))
def test_weak_equals_full_on_planar_people(seed, n):
    rng = np.random.default_rng(seed)
    rel = rng.uniform(-800, 800, (n, 3))
    rel[0] = 0.0
    rel[:, 2] = 0.0
    offset = np.array([rng.uniform(-1000, 1000), rng.uniform(-1000, 1000), rng.uniform(1500, 20000)])
    absolute = rel + offset
    xy = absolute[:, :2] / absolute[:, 2:] + rng.normal(0, 1e-3, (n, 2))
    inp = ReconstructionInput(Pose2D(xy, "normalized"), Pose3D(rel, "root_relative", 0))
    weak, full = solve_root_weak(inp).offset, solve_root_full(inp).offset
    assert np.all(np.abs(weak - full) <= 1e-9 * np.linalg.norm(full))


def test_weak_exact_on_planar_input(rng):
    p2d, rel, offset = random_scene_arrays(rng)
    flat = rel.joints.copy()
    flat[:, 2] = 0.0
    absolute = flat + offset
    inp = ReconstructionInput(Pose2D(absolute[:, :2] / absolute[:, 2:], "normalized"),
                              Pose3D(flat, "root_relative", 0))
    np.testing.assert_allclose(solve_root_weak(inp).offset, offset, rtol=1e-9)


def _fd_oracle(xy, rel, mask, h_xy=1e-5, h_rel=1e-2):
    """Central differences of the lstsq oracle w.r.t. every input entry."""
    n = len(xy)
    d_x, d_y, d_rel = np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3, 3))
    for j in range(n):
        for c, out in enumerate((d_x, d_y)):
            plus, minus = xy.copy(), xy.copy()
            plus[j, c] += h_xy
            minus[j, c] -= h_xy
            out[j] = (lstsq_root(plus, rel, mask) - lstsq_root(minus, rel, mask)) / (2 * h_xy)
        for c in range(3):
            plus, minus = rel.copy(), rel.copy()
            plus[j, c] += h_rel
            minus[j, c] -= h_rel
            d_rel[j, c] = (lstsq_root(xy, plus, mask) - lstsq_root(xy, minus, mask)) / (2 * h_rel)
    return d_x, d_y, d_rel


def assert_jacobian_close(analytic, numeric, rtol=1e-4):
    scale = np.max(np.abs(numeric))
    assert np.max(np.abs(analytic - numeric)) <= rtol * scale, (analytic, numeric)


def test_jacobian_matches_finite_differences(rng):
    for _ in range(20):
        p2d, rel, _ = random_scene_arrays(rng, 12)
        xy = p2d.joints + rng.normal(0, 2e-3, (12, 2))
        mask = rng.random(12) < 0.8
        mask[:3] = True
        jac = solve_root_full_with_jacobian(ReconstructionInput(Pose2D(xy, "normalized"), rel, mask))
        d_x, d_y, d_rel = _fd_oracle(xy, rel.joints, mask)
        assert_jacobian_close(jac.d_x, d_x)
        assert_jacobian_close(jac.d_y, d_y)
        assert_jacobian_close(jac.d_rel, d_rel)
        np.testing.assert_allclose(jac.solution.offset, solve_root_full(
            ReconstructionInput(Pose2D(xy, "normalized"), rel, mask)).offset, rtol=1e-12)


def test_masked_joints_have_exactly_zero_gradient(rng):
    p2d, rel, _ = random_scene_arrays(rng, 10)
    mask = np.ones(10, bool)
    mask[[2, 7]] = False
    valid = np.ones(10, bool)
    valid[5] = False
    jac = solve_root_full_with_jacobian(ReconstructionInput(Pose2D(p2d.joints, "normalized", valid), rel, mask))
    for j in (2, 5, 7):
        assert np.all(jac.d_x[j] == 0) and np.all(jac.d_y[j] == 0) and np.all(jac.d_rel[j] == 0)


def test_uniform_depth_shift_moves_root_depth_oppositely(rng):
    for _ in range(50):
        p2d, rel, _ = random_scene_arrays(rng)
        xy = p2d.joints + rng.normal(0, 1e-3, (17, 2))
        jac = solve_root_full_with_jacobian(ReconstructionInput(Pose2D(xy, "normalized"), rel))
        shift = jac.d_rel[:, 2, :].sum(axis=0)
        assert abs(shift[2] + 1.0) <= 1e-6
        assert np.all(np.abs(shift[:2]) <= 1e-6)
        # finite-difference view: shifting every relative depth by h
        h = 1.0
        moved = lstsq_root(xy, rel.joints + [0, 0, h])
        assert abs((moved[2] - jac.solution.offset[2]) / h + 1.0) <= 1e-6


def test_more_joints_reduce_noise_error():
    rng = make_rng(7)
    counts = [4, 6, 9, 13, 17]
    errors = {k: [] for k in counts}
    for _ in range(500):
        rel = random_pose(DEFAULT_BONES, rng)
        offset = np.array([rng.uniform(-500, 500), rng.uniform(-300, 300), rng.uniform(3000, 6000)])
        absolute = rel.joints + offset
        xy = absolute[:, :2] / absolute[:, 2:] + rng.normal(0, 1e-3, (17, 2))
        order = rng.permutation(17)
        for k in counts:
            mask = np.zeros(17, bool)
            mask[order[:k]] = True
            try:
                sol = solve_root_full(ReconstructionInput(Pose2D(xy, "normalized"), rel, mask))
            except DegenerateGeometryError:
                continue
            errors[k].append(abs(sol.offset[2] - offset[2]))
    means = [np.mean(errors[k]) for k in counts]
    assert all(a > b for a, b in zip(means, means[1:])), means


def test_border_mask_examples():
    p = Pose2D([[128, 128], [31, 128], [32, 32], [224, 224], [224.5, 100], [100, np.nan]], "pixel",
               [True, True, True, True, True, False])
    assert border_mask(p, 256, 256, 32).tolist() == [True, False, True, True, False, False]
    with pytest.raises(ContractError):
        border_mask(Pose2D([[0.0, 0.0]], "normalized"), 256, 256, 32)


def test_compose_absolute_branches_agree(rng):
    p2d, rel, offset = random_scene_arrays(rng)
    root = RootSolution(offset, 0.0)
    inside = compose_absolute(p2d, rel, root, np.ones(17, bool))
    outside = compose_absolute(p2d, rel, root, np.zeros(17, bool))
    np.testing.assert_allclose(inside.joints, outside.joints, atol=1e-6)
    np.testing.assert_array_equal(outside.joints, rel.joints + offset)
    assert inside.frame == "absolute"


def test_compose_absolute_axis_ray_and_behind_camera():
    p2d = Pose2D([[0.0, 0.0], [0.1, 0.0]], "normalized")
    rel = Pose3D([[0, 0, 0], [10.0, 0, -3500.0]], "root_relative", 0)
    out = compose_absolute(p2d, rel, RootSolution(np.array([0, 0, 3000.0]), 0.0), [True, False])
    np.testing.assert_array_equal(out.joints[0], [0, 0, 3000])
    with pytest.raises(BehindCameraError):
        compose_absolute(p2d, rel, RootSolution(np.array([0, 0, 3000.0]), 0.0), [True, True])


def test_depth_ratio_examples():
    z = np.linspace(2000, 2440, 9)
    assert depth_ratio(np.column_stack([np.zeros((9, 2)), z])) == pytest.approx(1.22, abs=1e-12)
    assert depth_ratio([[0, 0, 3000.0], [5, 5, 3000.0]]) == 1.0
    assert depth_ratio([[0, 0, 1000.0], [0, 0, 1410.0]]) == pytest.approx(1.41, abs=1e-12)
    with pytest.raises(BehindCameraError):
        depth_ratio([[0, 0, 1000.0], [0, 0, 0.0]])
