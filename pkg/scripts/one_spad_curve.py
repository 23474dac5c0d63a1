"""One-detector secure-fraction curves for several optical transmittances, next to the
two-detector curve at the same parameters.

    python scripts/one_spad_curve.py --out results/one_spad.csv
"""
import argparse
from dataclasses import replace
from pathlib import Path

from dbaleak import cli
from dbaleak.config import load_scenario
from dbaleak.estimator import secure_fraction_curve
from dbaleak.model import ReceiverMode

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "one_spad.toml"))
    ap.add_argument("--out", default="results/one_spad.csv")
    args = ap.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    rc = cli.main(["curve", "--config", args.config, "--out", args.out])
    if rc:
        raise SystemExit(rc)

    sc = load_scenario(args.config)
    lengths = [float(x) for x in range(0, 151, 10)]
    print(f"{'T':>7} {'L_km':>6} {'S_one':>7} {'S_two':>7}")
    for t in sc.run.sweep_values():
        det = replace(sc.detector, transmittance=t)
        one = secure_fraction_curve(sc.protocol, det, sc.channel, ReceiverMode.ONE_SPAD, [t], lengths, "transmittance")
        two = secure_fraction_curve(sc.protocol, det, sc.channel, ReceiverMode.TWO_SPAD, [sc.detector.eta_low], lengths)
        for a, b in zip(one, two):
            print(f"{t:7.4f} {a.length_km:6.0f} {a.secure_fraction:7.3f} {b.secure_fraction:7.3f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
