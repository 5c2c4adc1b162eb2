"""Linearized decay at eps = 1e-2, 1e-3, 1e-4 with fitted rates; writes results/linear/."""
import sys

from pnplayer.cli import main

if __name__ == "__main__":
    sys.exit(main(["linear", "--out", "results/linear", *sys.argv[1:]]))
