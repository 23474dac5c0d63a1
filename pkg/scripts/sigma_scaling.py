"""Empirical spread of the inferred beta against the number of fake states.

For each n_sent the attack is simulated over many seeds; the sample standard
deviation of beta_hat is compared with the binomial sigma and with
1/sqrt(n_sent) scaling.

    python scripts/sigma_scaling.py --seeds 200
"""
import argparse
from dataclasses import replace

import numpy as np

from dbaleak.attack import infer_beta
from dbaleak.gains import eve_gain
from dbaleak.model import EveStrategy, ReceiverMode
from dbaleak.simulator import SimConfig, simulate_attack


def spread(n_sent: float, seeds: int, mode: ReceiverMode, alpha: float, beta: float) -> tuple[float, float, float]:
    base = SimConfig(eve=EveStrategy(active=True, beta=beta), receiver_mode=mode)
    base = replace(base, detectors=replace(base.detectors, alpha=alpha))
    n_pulses = int(round(n_sent / eve_gain(base.protocol)))
    keys = np.random.SeedSequence(12345).generate_state(seeds, np.uint64)
    est, sig = [], []
    for k in keys:
        cfg = replace(base, n_pulses=n_pulses, seed=int(k))
        b = infer_beta(mode, simulate_attack(cfg).counts, alpha)
        est.append(b.beta)
        sig.append(b.sigma)
    est = np.asarray(est)
    return float(est.mean()), float(est.std(ddof=1)), float(np.mean(sig))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--mode", choices=[m.value for m in ReceiverMode], default="two_spad")
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=0.3)
    ap.add_argument("--n-sent", default="25000,100000,400000")
    args = ap.parse_args()
    mode = ReceiverMode(args.mode)
    prev = None
    print(f"{'n_sent':>9} {'mean':>8} {'sd_emp':>9} {'sd_binom':>9} {'ratio':>6}")
    for n in (float(x) for x in args.n_sent.split(",")):
        mean, sd, sd_model = spread(n, args.seeds, mode, args.alpha, args.beta)
        ratio = "" if prev is None else f"{prev / sd:6.3f}"
        print(f"{n:9.0f} {mean:8.5f} {sd:9.6f} {sd_model:9.6f} {ratio}")
        prev = sd


if __name__ == "__main__":
    main()
