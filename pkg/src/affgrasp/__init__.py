"""Affordance-guided grasping at desk scale: self-supervised labels from
play logs, a voting affordance predictor, and a mixed approach/RL policy in
a kinematic tabletop simulator."""

__version__ = "0.1.0"
