"""beeflow: behavior-tree workflows, contention-aware partitioning and placement, and a cluster simulator."""
__version__ = '0.1.0'
