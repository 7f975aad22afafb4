"""graspworld: a desk-scale lab for studying how image disentanglement
levels affect off-policy actor-critic grasp learning in 2D clutter."""

__version__ = "0.1.0"
