"""Bimanual transform-locking toolkit.

Library plus CLI for synthesizing constraint-locked bimanual pick-and-place
demonstrations in a rule-based kinematic world, degrading them with
temporally correlated (OU) end-effector noise, measuring kinematic
constraint violations and task outcomes, and analyzing the curvature of
the constraint manifold the demonstrations live on.
"""

__version__ = "0.1.0"
