import numpy as np
import pytest

from hcam.dataio import SyntheticSpec, generate_synthetic, load_manifest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small regime-b dataset shared by pipeline and CLI tests (read-only)."""
    out = tmp_path_factory.mktemp("tiny_b")
    spec = SyntheticSpec(regime="b", num_conversations=16, length=[3, 6], d_audio=6, d_text=5,
                         frames=(2, 4), tokens=(2, 4), seed=3)
    path = generate_synthetic(spec, out)
    return out, load_manifest(path)


def write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
