import json
import subprocess
import sys
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def fixture_store_dir(tmp_path_factory):
    """Grayscale training volumes produced by the analysis toolkit's CLI.

    The trainer consumes the primary toolkit only through its external
    interfaces: the `triphase synth` subcommand and the .mvol container.
    """
    tmp = tmp_path_factory.mktemp("fixtures")
    cfg = {
        "seed": 3,
        "out_dir": str(tmp / "fx"),
        "synth": {"count": 4, "dims": [48, 48, 48], "render": {"noise_std": 8.0}},
    }
    cfg_path = tmp / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    result = subprocess.run(
        [sys.executable, "-m", "triphase.cli", "synth", "--config", str(cfg_path)],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr
    return tmp / "fx" / "synth_gray"
