"""driveclone: a highway imitation-learning workbench.

Replays HighD-schema traffic with an inserted ego agent and trains/evaluates
five control policies (BC, MDN-BC, conditional GAN, GAIL, collision-penalized
GAIL) with a shared metric suite per track.
"""

__version__ = "0.1.0"
