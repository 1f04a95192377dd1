"""Acceptance suite for the trainer: architecture conformance, spectral
normalization, and a smoke-training run validated end to end through the
analysis toolkit's CLI.

Run with `pytest -s tests/test_acceptance.py` for the PASS/FAIL lines.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
import torch

from gantrain.data import VolumeStore
from gantrain.generate import generate_batch
from gantrain.models import (
    build_critic,
    build_generator,
    normalized_modules,
    top_singular_value,
)
from gantrain.train import TrainConfig, train


def _criterion(name: str, ok: bool, detail: str = ""):
    state = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[ACCEPTANCE] {name}: {state}{suffix}")
    assert ok, f"{name}{suffix}"


def test_architecture_shape_conformance():
    gen = build_generator(96)
    critic = build_critic(96)
    gen.eval(), critic.eval()
    with torch.no_grad():
        z = torch.randn(1, 100)
        x = gen.project(z).view(1, 512, 6, 6, 6)
        gen_chain = [tuple(x.shape[1:])]
        for stage in gen.stages:
            x = stage(x)
            gen_chain.append(tuple(x.shape[1:]))
        out = gen.head(x)
        gen_chain.append(tuple(out.shape[1:]))

        y = out
        critic_chain = []
        for stage in critic.stages:
            y = stage(y)
            critic_chain.append(tuple(y.shape[1:]))
        y = critic.widen(y)
        critic_chain.append(tuple(y.shape[1:]))
        score = critic.head(y.flatten(1)).squeeze(1)

    gen_expected = [
        (512, 6, 6, 6), (256, 12, 12, 12), (128, 24, 24, 24),
        (64, 48, 48, 48), (32, 96, 96, 96), (1, 96, 96, 96),
    ]
    critic_expected = [
        (32, 48, 48, 48), (64, 24, 24, 24), (128, 12, 12, 12),
        (256, 6, 6, 6), (512, 6, 6, 6),
    ]
    _criterion("generator per-stage shapes at scale 96", gen_chain == gen_expected)
    _criterion("critic per-stage shapes at scale 96", critic_chain == critic_expected)
    _criterion(
        "generator output strictly inside (-1, 1)",
        float(out.max()) < 1.0 and float(out.min()) > -1.0,
    )
    _criterion("critic output is a scalar per volume", score.shape == (1,))


def test_spectral_normalization():
    torch.manual_seed(0)
    critic = build_critic(32)  # same layers as scale 96, cheaper forward
    critic.train()
    x = torch.randn(2, 1, 32, 32, 32)
    with torch.no_grad():
        for _ in range(50):  # one power iteration per forward pass
            critic(x)
    critic.eval()
    sigmas = [top_singular_value(m) for m in normalized_modules(critic)]
    _criterion(
        "top singular value in [0.9, 1.1] for every normalized layer",
        all(0.9 <= s <= 1.1 for s in sigmas),
        f"range [{min(sigmas):.4f}, {max(sigmas):.4f}] over {len(sigmas)} layers",
    )


@pytest.fixture(scope="module")
def smoke_run(fixture_store_dir):
    store = VolumeStore(str(fixture_store_dir / "*.mvol"))
    # smoke recipe: hot initial rate so the critic's gap spikes within the
    # first iterations, then a 20x step down (after 0.006 epochs = 75
    # iterations at batch 8) freezes the generator-led collapse
    cfg = TrainConfig(
        scale=32,
        width=0.25,
        batch=8,
        iterations=200,
        seed=2,
        log_spectral_every=100,
        lr_schedule=((0, 4e-3), (0.006, 2e-4)),
    )
    t0 = time.time()
    generator, critic, state = train(cfg, store)
    return generator, state, time.time() - t0


def test_smoke_training_gap_decreases(smoke_run):
    _, state, elapsed = smoke_run
    gaps = np.array(state.wasserstein_gap)
    early = float(gaps[:10].mean())
    final = float(gaps[-10:].mean())
    _criterion(
        "200-iteration smoke: Wasserstein gap decreases (iter-10 avg -> final-10 avg)",
        final < early,
        f"{early:.2f} -> {final:.2f}",
    )
    _criterion(
        "smoke run fits the CPU budget (< 2 h)",
        elapsed < 7200.0,
        f"{elapsed / 60:.1f} min",
    )


def test_smoke_exports_validate_in_primary_toolkit(smoke_run, tmp_path):
    generator, _, _ = smoke_run
    out_dir = tmp_path / "generated"
    paths = generate_batch(generator, count=3, seed=9, out_dir=out_dir, spacing=0.065)
    assert len(paths) == 3

    def run_cli(*args):
        return subprocess.run(
            [sys.executable, "-m", "triphase.cli", *args],
            capture_output=True,
            text=True,
        )

    # header/payload validation via the toolkit's ingest command
    ingest_cfg = tmp_path / "ingest.json"
    ingest_cfg.write_text(json.dumps({
        "out_dir": str(tmp_path / "val"),
        "ingest": {"volumes": [str(p) for p in paths]},
    }))
    ingest = run_cli("ingest", "--config", str(ingest_cfg))
    _criterion(
        "exported volumes pass primary-toolkit validation",
        ingest.returncode == 0,
        f"ingest exit {ingest.returncode}",
    )

    # partition each volume at its own intensity terciles so all three
    # phases are seeded no matter how narrow the smoke generator's output
    from gantrain.mvol import read_mvol

    seg_exits = []
    for k, path in enumerate(sorted((tmp_path / "val" / "ingested").iterdir())):
        data, _, _ = read_mvol(path)
        values = np.unique(data)
        assert len(values) >= 3, "generated volume has fewer than 3 intensities"
        i1 = max(0, len(values) // 3 - 1)
        i2 = min(max(i1 + 1, (2 * len(values)) // 3 - 1), len(values) - 2)
        t1, t2 = int(values[i1]), int(values[i2])
        seg_cfg = tmp_path / f"segment_{k}.json"
        seg_cfg.write_text(json.dumps({
            "out_dir": str(tmp_path / "val"),
            "segment": {
                "inputs": [str(path)],
                "bounds": {
                    "1": {"intensity": [0, t1], "gradient": [0.0, 1e9]},
                    "2": {"intensity": [t1 + 1, t2], "gradient": [0.0, 1e9]},
                    "3": {"intensity": [t2 + 1, 255], "gradient": [0.0, 1e9]},
                },
            },
        }))
        seg_exits.append(run_cli("segment", "--config", str(seg_cfg)).returncode)
    segment_ok = all(code == 0 for code in seg_exits)

    metrics_cfg = tmp_path / "metrics.json"
    metrics_cfg.write_text(json.dumps({
        "out_dir": str(tmp_path / "val"),
        "metrics": {"inputs": [str(tmp_path / "val" / "segmented" / "*.mvol")]},
    }))
    metrics = run_cli("metrics", "--config", str(metrics_cfg))
    finite = segment_ok and metrics.returncode == 0
    if finite:
        csv_text = (tmp_path / "val" / "metrics" / "metrics.csv").read_text()
        lines = csv_text.strip().split("\n")
        records = [l for l in lines[1:] if not l.startswith(("MEAN", "STD"))]
        finite = len(records) == 3
        for line in records:
            for cell in line.split(",")[5:]:
                if cell:
                    finite &= np.isfinite(float(cell))
    _criterion(
        "exported volumes produce finite metric records",
        finite,
        f"segment exits {seg_exits}, metrics exit {metrics.returncode}",
    )
