"""Reference external policy speaking the stdio protocol.

    python -m steam_mapf.stub_policy fixed 1,0,0,0,0
    python -m steam_mapf.stub_policy greedy

The ``--exit-after``, ``--sleep`` and ``--bad-arity`` switches simulate broken
policies for testing the error paths.
"""

import argparse
import json
import sys
import time

from .policy import Observation, PolicyConfig, greedy_logits


def main(argv=None):
    ap = argparse.ArgumentParser(prog="steam_mapf.stub_policy")
    ap.add_argument("mode", choices=["fixed", "greedy"])
    ap.add_argument("logits", nargs="?", default="1,0,0,0,0")
    ap.add_argument("--exit-after", type=int, default=None, help="exit after N replies")
    ap.add_argument("--sleep", type=float, default=0.0)
    ap.add_argument("--bad-arity", action="store_true")
    args = ap.parse_args(argv)

    fixed = [float(x) for x in args.logits.split(",")]
    cfg = PolicyConfig()
    served = 0
    for line in sys.stdin:
        if args.exit_after is not None and served >= args.exit_after:
            return 1
        req = json.loads(line)
        obs = req["observations"]
        if args.mode == "fixed":
            rows = [fixed for _ in obs]
        else:
            rows = [greedy_logits(Observation.from_message(o), cfg).tolist() for o in obs]
        if args.bad_arity:
            rows = rows[:-1]
        if args.sleep:
            time.sleep(args.sleep)
        sys.stdout.write(json.dumps({"logits": rows}) + "\n")
        sys.stdout.flush()
        served += 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
