"""Score estimators on replicated benchmark panels.

Each replication draws a fresh panel from the linear-factor generator,
fits every requested method, and accumulates two mean squared errors:
per-period effects (MSE_TE) and the averaged effect (MSE_ATE). Replication
count, method set, and worker count are flags, so the same script serves a
quick smoke run and a long scoring session.
"""

import argparse
import time

from bayesscm import RngStream, SimConfig
from bayesscm.simlab import run_replications


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=20, help="replications")
    parser.add_argument("--methods", default="adh,psconv,bayes",
                        help="comma-separated method tags")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    parser.add_argument("--theta0", type=float, default=1.0, help="effect scale")
    parser.add_argument("--seed", type=int, default=7, help="replication seed")
    args = parser.parse_args()

    cfg = SimConfig(theta0=args.theta0, reps=args.reps, seed=args.seed)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())

    start = time.monotonic()
    res = run_replications(cfg, methods=methods, rng=RngStream(args.seed, 0),
                           jobs=args.jobs)
    elapsed = time.monotonic() - start

    print(f"{args.reps} replications, effect scale {args.theta0}, "
          f"true ATE {res.true_ate:.3f}, {elapsed:.0f}s")
    print(f"{'method':>8} {'MSE_TE':>10} {'(se)':>9} {'MSE_ATE':>10} {'(se)':>9}")
    for m in res.methods:
        print(f"{m:>8} {res.mse_te[m]:>10.4f} {res.mse_te_se[m]:>9.4f} "
              f"{res.mse_ate[m]:>10.4f} {res.mse_ate_se[m]:>9.4f}")


if __name__ == "__main__":
    main()
