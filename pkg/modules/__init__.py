# Phase Metric - Core Modules
