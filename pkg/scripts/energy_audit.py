"""Energy-law residuals at dt and dt/2 for eps = 1e-3; writes results/audit/.

Pass ``--config`` with ``{"audit_dynamics": "nonlinear"}`` to audit the full
system instead of the linearization.
"""
import sys

from pnplayer.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--epsilon" not in argv and "--config" not in argv:
        argv += ["--epsilon", "1e-3"]
    sys.exit(main(["audit", "--out", "results/audit", *argv]))
