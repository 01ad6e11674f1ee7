"""Protocol harness and fixture generation for the provider tests.

Fixtures come from the metalseg CLI invoked as a subprocess: the provider
package touches the segmentation toolkit only through its external
interfaces.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

METALSEG = [sys.executable, "-m", "metalseg.cli"]
PROVIDER = [sys.executable, "-m", "maskprovider.server"]


class ProtocolClient:
    """Drives one provider subprocess over the JSON-lines protocol."""

    def __init__(self, args, env=None, timeout=60.0):
        import os

        full_env = dict(os.environ)
        if env:
            full_env.update(env)
        self.proc = subprocess.Popen(
            PROVIDER + args,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
            env=full_env,
        )
        self.timeout = timeout

    def send_line(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        out = self.proc.stdout.readline()
        assert out, "provider closed its stdout"
        return json.loads(out)

    def request(self, request_id: int, image, scale: str, points=()) -> dict:
        return self.send_line(
            json.dumps(
                {"id": request_id, "image": str(image), "points": [list(p) for p in points], "scale": scale}
            )
        )

    def close(self) -> int:
        self.proc.stdin.close()
        return self.proc.wait(timeout=self.timeout)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self.proc.poll() is None:
            try:
                self.close()
            except Exception:
                self.proc.kill()


def synth_fixtures(tmp_path: Path, count: int, seed: int = 0, noiseless: bool = True, size: int = 128):
    """Generate image/gt pairs through the metalseg CLI; returns manifest entries."""
    out_dir = tmp_path / f"synth_{seed}"
    cfg = tmp_path / f"synth_{seed}.cfg"
    noise = "0.0" if noiseless else "5.0"
    blur = "0.0" if noiseless else "1.0"
    cfg.write_text(
        f"width = {size}\nheight = {size}\nnoise_sigma = {noise}\nblur_sigma = {blur}\n"
        "line_count_range = 4, 7\nline_width_range = 3, 6\n"
    )
    subprocess.run(
        [*METALSEG, "synth", str(out_dir), "--count", str(count), "--seed", str(seed),
         "--config", str(cfg)],
        check=True,
        capture_output=True,
    )
    manifest = json.loads((out_dir / "manifest.json").read_text())
    return out_dir, manifest["images"]


@pytest.fixture
def fixture_pair(tmp_path):
    out_dir, entries = synth_fixtures(tmp_path, count=1, seed=3)
    entry = entries[0]
    return out_dir / entry["image"], out_dir / entry["gt"]
