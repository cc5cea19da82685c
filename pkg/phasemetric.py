"""
Phase Metric - command line entry point.

Usage:
    python phasemetric.py catalogue list
    python phasemetric.py scan --entry example7 --k 2 --m 3 --method certificate
"""
from modules.cli import main

if __name__ == "__main__":
    main()
