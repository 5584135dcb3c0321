"""Cooperative multi-agent RL with causal-influence intrinsic rewards.

Everything is plain numpy in float64. Subpackages:

* :mod:`cimarl.nets` dense networks over flat parameter vectors
* :mod:`cimarl.env` particle-world tasks and synthetic causal chains
* :mod:`cimarl.dynamics` per-pair Gaussian next-state models
* :mod:`cimarl.influence` Donsker-Varadhan influence scores and rewards
* :mod:`cimarl.learner` centralized-critic actor-critic machinery
* :mod:`cimarl.training` experiment harness (runs, ablations, sweeps)
"""

__version__ = "0.1.0"
