"""Symmetry-guided multi-agent adversarial inverse reinforcement learning.

Subpackages cover exact dihedral-group algebra (`group`), a tabular Markov
game theory workbench (`tabular`), three continuous swarm tasks (`envs`),
demonstration storage and augmentation (`demos`), a small float64 network
substrate (`approx`), discriminator losses (`adversarial`), the PPO-based
generator (`marl`), and the experiment harness / CLI (`harness`).
"""

__version__ = "0.1.0"
