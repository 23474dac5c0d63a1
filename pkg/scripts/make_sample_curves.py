"""Regenerate the bundled synthetic detection-probability curves.

The curves are logistic in dB. They are not measurements: they are shaped so
that the pulsed-blinding gap between the low-gate E_never and the default-gate
E_always grows with repetition rate, while under CW blinding the two ranges
overlap.
"""
import argparse
import math
from pathlib import Path

WIDTH_DB = 0.5
EPS = 0.01
# half-width of the [eps, 1-eps] transition of a logistic curve
HALF = WIDTH_DB * math.log((1 - EPS) / EPS)

# (mode, rate MHz, average blinding power (relative), low-gate gap in dB)
SETTINGS = [
    ("pulsed", 2, 1.00, 24.0),
    ("pulsed", 4, 0.78, 25.0),
    ("pulsed", 6, 0.61, 26.0),
    ("pulsed", 8, 0.50, 27.0),
    ("pulsed", 10, 0.42, 28.0),
    ("cw", None, 1.60, -3.0),
]


def logistic(x, x50):
    return 1.0 / (1.0 + math.exp(-(x - x50) / WIDTH_DB))


def write_curve(path, mode, rate, power, gate, x50):
    lines = [
        "# synthetic sample, not a measurement",
        f"# gate_label: {gate}",
        f"# blinding_mode: {mode}",
        f"# repetition_rate_mhz: {'' if rate is None else rate}",
        f"# avg_blinding_power: {power}",
        "energy_db,p_det",
    ]
    x = -10.0
    while x <= 45.0 + 1e-9:
        lines.append(f"{x:.1f},{logistic(x, x50):.6f}")
        x += 0.5
    path.write_text("\n".join(lines) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/dbaleak/data/curves"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for mode, rate, power, gap in SETTINGS:
        stem = "cw" if mode == "cw" else f"pulsed_{rate:02d}mhz"
        # default gate: E_always at HALF dB; low gate: E_never = E_always + gap
        write_curve(out / f"{stem}_default.csv", mode, rate, power, "default", 0.0)
        write_curve(out / f"{stem}_low.csv", mode, rate, power, "low", 2 * HALF + gap)


if __name__ == "__main__":
    main()
