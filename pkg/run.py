"""
Semilab - Command Line Entry

Runs one solver from the command line:

    python run.py <module> <subcommand> [flags]

for example `python run.py chains jc-distance --p 0.3` or
`python run.py structured cellcycle --out runs/cc`. Outputs, the resolved
config.json and manifest.json are written under --out when it is given; the
one-line JSON summary always goes to stdout.
"""

from src.semilab.cli import main

if __name__ == "__main__":
    main()
