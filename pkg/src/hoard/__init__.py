"""Hoard: a desk-scale distributed dataset cache for training workloads.

The package is organized around one module per subsystem:

- ``topology``   cluster model (racks, nodes, remote stores, link budgets)
- ``registry``   dataset/job catalog with a crash-safe on-disk state file
- ``cachemgr``   stripe placement and dataset-granularity admission/eviction
- ``scheduler``  locality-aware job placement (node-local > rack-local)
- ``dataplane``  chunk servers, wire protocol, read-through client
- ``simengine``  deterministic flow-level simulator of training I/O
- ``cli``        the ``hoard`` command-line entry point
"""

__version__ = "0.1.0"
