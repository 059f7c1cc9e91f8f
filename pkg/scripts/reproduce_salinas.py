"""Salinas A experiment: M-SRDL against the non-spatial baseline.

Expects ``cube.json`` and ``gt.csv`` in DIR (see docs/salinas.md). Each
variant runs through the CLI with default parameters and writes its
outputs to OUT/spatial and OUT/baseline; a comparison table follows.

    python scripts/reproduce_salinas.py data/salinas_a --out runs/salinas
"""

import argparse
import json
import sys
from pathlib import Path

from msrdl.cli import main as cli

PUBLISHED = {"spatial": (0.3016, 3), "baseline": (0.2836, 2)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("data_dir", type=Path)
    ap.add_argument("--out", type=Path, default=Path("runs/salinas"))
    ap.add_argument("--threads", type=int)
    ap.add_argument("--normalize", default="none",
                    help="preprocessing passed to the CLI (see docs/salinas.md)")
    args = ap.parse_args()

    rows = []
    for name, extra in (("spatial", []), ("baseline", ["--no-spatial"])):
        out = args.out / name
        argv = ["msrdl", "--data", str(args.data_dir / "cube.json"),
                "--labels", str(args.data_dir / "gt.csv"), "--out", str(out), "--normalize", args.normalize] + extra
        if args.threads:
            argv += ["--threads", str(args.threads)]
        code = cli(argv)
        rep = json.loads((out / "report.json").read_text())
        if code:
            print(f"{name}: failed ({rep['error']})", file=sys.stderr)
            return code
        bary = next(s for s in rep["scales"] if s["t"] == rep["t_star"])
        rows.append((name, rep["t_star"], rep["K_star"], rep["metrics"]["barycenter"]["nmi"],
                     bary["boundary_disagreement"], rep["timing"]["total_ms"] / 1e3))

    print(f"{'variant':>9} {'t*':>5} {'K*':>3} {'pub. K*':>7} {'NMI':>7} {'pub. NMI':>8} "
          f"{'boundary':>8} {'secs':>6}")
    for name, t, K, score, smooth, secs in rows:
        pub, pub_k = PUBLISHED[name]
        print(f"{name:>9} {t:>5} {K:>3} {pub_k:>7} {score:7.4f} {pub:8.4f} {smooth:8.4f} {secs:6.1f}")
    (args.out / "summary.json").write_text(json.dumps(
        [dict(zip(("variant", "t_star", "K_star", "nmi", "boundary_disagreement", "seconds"), r))
         for r in rows], indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
