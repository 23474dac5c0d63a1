"""Two-detector secure-fraction curves over channel length for several low-gate efficiencies.

Writes plot-ready CSV (with the reproducibility header) and prints the
100-120 km summary.

    python scripts/two_spad_curve.py --out results/two_spad.csv
"""
import argparse
import csv
from pathlib import Path

from dbaleak import cli

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "two_spad.toml"))
    ap.add_argument("--out", default="results/two_spad.csv")
    args = ap.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    rc = cli.main(["curve", "--config", args.config, "--out", args.out])
    if rc:
        raise SystemExit(rc)
    with open(args.out) as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    print(f"{'eta_low':>8} {'S(100)':>8} {'S(110)':>8} {'S(120)':>8}")
    for value in dict.fromkeys(r["sweep_value"] for r in rows):
        s = {float(r["L_km"]): float(r["s_key"]) for r in rows if r["sweep_value"] == value}
        print(f"{float(value):8.3f} {s.get(100.0, float('nan')):8.3f} {s.get(110.0, float('nan')):8.3f} {s.get(120.0, float('nan')):8.3f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
