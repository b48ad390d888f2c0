"""Run every config in configs/ through the CLI and tabulate exit codes."""
import json
import sys
import time
from pathlib import Path

from corona_lab.cli import main

root = Path(__file__).resolve().parent.parent
out = root / "out"
status = 0
for cfg in sorted((root / "configs").glob("*.json")):
    kind = json.loads(cfg.read_text())["experiment"]
    t0 = time.perf_counter()
    code = main([kind, "--config", str(cfg), "--out", str(out / cfg.stem)])
    print(f"{cfg.stem:24s} {kind:18s} exit={code} {time.perf_counter() - t0:6.1f}s")
    # map_constant and smooth_square_wave are adversarial: the constant map must fail
    expected = 1 if cfg.stem == "map_constant" else 0
    status |= code != expected
sys.exit(status)
