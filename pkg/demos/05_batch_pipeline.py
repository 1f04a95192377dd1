"""The batch CLI end to end: one config file drives a full campaign.

Creates a grayscale fixture, writes a pipeline config, and runs
ingest -> subvolumes -> segment -> metrics -> synth -> metrics -> compare,
leaving a manifest that fingerprints every output.
"""

import json
import tempfile
from pathlib import Path

from triphase.cli import main
from triphase.synthgen import SynthConfig, generate, grayscale_render
from triphase.volume import save_volume

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    seg = generate(SynthConfig(dims=(32, 32, 32), seed=8))
    save_volume(grayscale_render(seg, noise_std=0.0), tmp / "scan.mvol")

    config = {
        "seed": 5,
        "out_dir": str(tmp / "campaign"),
        "ingest": {"volumes": [str(tmp / "scan.mvol")]},
        "subvolume": {"edge": 16, "count": 6},
        "segment": {"bounds": {
            "1": {"intensity": [0, 70], "gradient": [0.0, 1e9]},
            "2": {"intensity": [90, 180], "gradient": [0.0, 1e9]},
            "3": {"intensity": [200, 255], "gradient": [0.0, 1e9]},
        }},
        "synth": {"count": 6, "dims": [16, 16, 16]},
    }
    cfg_path = tmp / "campaign.json"
    cfg_path.write_text(json.dumps(config, indent=2))

    code = main(["pipeline", "--config", str(cfg_path)])
    print(f"\npipeline exit code: {code}")

    run_dir = next((tmp / "campaign").iterdir())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    print(f"run directory: {run_dir.name} (config hash prefix)")
    for stage in manifest["stages"]:
        print(f"  {stage['name']:>18}: {stage['status']:>7} "
              f"({len(stage['outputs'])} outputs)")
