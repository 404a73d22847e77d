"""Model-free interactive instance segmentation from rigid-body motion.

Pushes objects on a tabletop, groups sampled body frames by their spatial
twist, and grows per-object masks from the groups while the push runs.
"""

__version__ = "0.1.0"
