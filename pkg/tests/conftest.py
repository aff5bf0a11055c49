import numpy as np
import pytest

from metricpose.camera import CameraIntrinsics, Pose2D, Pose3D
from metricpose.skeleton import DEFAULT_BONES
from metricpose.synth import make_rng, random_pose

_criteria = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _criteria.append((props["criterion"], report.outcome, props.get("runtime_s"), props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, runtime, detail in sorted(_criteria):
        status = "PASS" if outcome == "passed" else "FAIL"
        timing = f" ({runtime:.2f} s)" if runtime is not None else ""
        terminalreporter.write_line(f"{status}  {name}{timing}  {detail}".rstrip())


@pytest.fixture
def rng():
    return make_rng(20240613)


@pytest.fixture
def K():
    return CameraIntrinsics(1500.0, 1400.0, 960.0, 540.0)


def random_scene_arrays(rng, n_joints=17, offset=None):
    """Root-relative pose (root 0) and its exact normalized projection at a random offset."""
    rel = rng.uniform(-600, 600, (n_joints, 3))
    rel[0] = 0.0
    if offset is None:
        offset = np.array([rng.uniform(-800, 800), rng.uniform(-500, 500), rng.uniform(2500, 9000)])
    absolute = rel + offset
    xy = absolute[:, :2] / absolute[:, 2:]
    return Pose2D(xy, "normalized"), Pose3D(rel, "root_relative", 0), np.asarray(offset, float)


def skeleton(rng):
    return random_pose(DEFAULT_BONES, rng)
