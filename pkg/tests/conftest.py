import numpy as np
import pytest

from curveret.curvelet import DIVISION_CHOICES, OUTER_MODES, TilingConfig, max_scales
from curveret.imageio import Image, _class_params, synth_texture, synth_texture_corpus


def random_boundaries(rng, J, upper):
    """J strictly increasing integers in [4, upper] with gaps >= 2."""
    slack = upper - 4 - 2 * (J - 1)
    cuts = np.sort(rng.integers(0, slack + 1, size=J))
    return tuple(int(4 + 2 * i + c) for i, c in enumerate(cuts))


def random_tiling(rng, n1, n2, J=None, mode=None) -> TilingConfig:
    if J is None:
        J = int(rng.integers(2, max_scales(n1, n2) + 1))
    V = random_boundaries(rng, J, (n1 + 1) // 2)
    H = random_boundaries(rng, J, (n2 + 1) // 2)
    A = tuple((int(rng.choice(DIVISION_CHOICES)), int(rng.choice(DIVISION_CHOICES)))
              for _ in range(J - 1))
    mode = mode or OUTER_MODES[int(rng.integers(2))]
    return TilingConfig((n1, n2), V, H, A, mode)


def texture(cls, n, seed) -> Image:
    """n x n crop-sized texture of synthetic class ``cls``."""
    angle, radius = _class_params(cls + 1)[cls]
    return Image(synth_texture(angle, radius, (n, n), np.random.default_rng(seed)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noise_image(rng):
    return Image(rng.random((64, 64)))


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return synth_texture_corpus(8, 3, 128, 42, root)


# --------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion-marked test
# --------------------------------------------------------------------------

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        number, name = marker.args
        _CRITERIA.append((number, name, rep.passed, getattr(item, "detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_CRITERIA):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status}  {number:2d}. {name}  {detail}".rstrip())
