import numpy as np
import pytest

from gcmdisp.dataio import Layer, SynthSpec, cross_hair_baselines, synth_scene, two_plane_spec
from gcmdisp.grids import ViewSet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def two_plane_small():
    """64x64 two-plane scene, 9-view cross-hair."""
    return synth_scene(two_plane_spec(64))


@pytest.fixture(scope="session")
def constant_scene():
    spec = SynthSpec(64, 64, [Layer(0.7, 3)], cross_hair_baselines(2), min_freq=0.2, max_freq=2.0)
    return synth_scene(spec)


@pytest.fixture
def identical_views(rng):
    ref = rng.uniform(0.2, 0.8, (32, 32))
    return ViewSet.build(ref, [("a", ref, (1, 0)), ("b", ref, (0, 1)), ("c", ref, (-2, 0))])


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import lines

    out = lines()
    if out:
        terminalreporter.section("acceptance criteria")
        for line in out:
            terminalreporter.write_line(line)
