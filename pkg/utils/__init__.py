# Phase Metric - Utilities
