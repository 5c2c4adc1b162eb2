"""Boundary-gradient scan over eps = 1e-2 .. 1e-5; writes results/blowup/."""
import sys

from pnplayer.cli import main

if __name__ == "__main__":
    sys.exit(main(["sweep", "--out", "results/blowup", *sys.argv[1:]]))
