import pytest


@pytest.fixture(autouse=True)
def isolated_artifacts(settings, tmp_path):
    """Keep every artifact a test writes inside its own temporary directory."""
    settings.ESTIMATION = {**settings.ESTIMATION, 'OUTPUT_DIR': str(tmp_path / 'artifacts')}
