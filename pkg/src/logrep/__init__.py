"""Benchmark harness for log representation techniques in anomaly detection.

The package turns raw log files into labelled session datasets, parses them
into event templates, builds feature matrices under several representation
schemes, trains small supervised detectors, and scores/ranks the results.
"""

__version__ = "0.1.0"
