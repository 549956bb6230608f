"""Synthetic salted floorplan -> building JSON, with a heatmap of one step.

    python scripts/ingest_demo.py --out /tmp/ingest_demo
"""

import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image

from sbsim.env import BuildingEnv, run_episode
from sbsim.ingest import build_from_image
from sbsim.policies import default_schedule
from sbsim.render import render_heatmap, zone_field
from sbsim.synth import synthetic_floorplan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="ingest_demo")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--salt", type=float, default=0.01)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    img, n_rooms = synthetic_floorplan(200, 2, 3, salt=args.salt,
                                       rng=np.random.default_rng(args.seed))
    Image.fromarray((img * 255).astype(np.uint8)).save(out / "plan.png")
    anchors = [(x, y) for y in (72, 127) for x in (63, 100, 137)]
    devices = {"devices": [{"device_id": f"vav_{i}", "device_type": "VAV", "anchor": list(a)}
                           for i, a in enumerate(anchors)]
               + [{"device_id": d, "device_type": t}
                  for d, t in (("ahu", "AHU"), ("boiler", "Boiler"), ("chiller", "Chiller"))]}
    (out / "devices.json").write_text(json.dumps(devices, indent=1))
    b = build_from_image(out / "plan.png", devices, cv_size=0.5, scale=0.05, name="demo")
    b.save(out / "building.json")
    print(f"{n_rooms} rooms drawn, {len(b.zones)} zones, grid {b.floors[0].cells.shape}")

    ep = run_episode(BuildingEnv(b, seed=args.seed), default_schedule(b), 96)
    field, cells = zone_field(ep, ep.n_steps - 1)
    stats = render_heatmap(field, cells, out / "zones.png", mask=np.isfinite(field), diff=False,
                           pixels_per_cv=8)
    print(f"zone temperatures after 8 h: {stats['min']:.2f} .. {stats['max']:.2f} C")


if __name__ == "__main__":
    main()
