"""Context-aware design of cyber-physical human systems at desk scale.

The package fuses an existing occupant-behavior model with stated-choice
experiment data through adversarial training against a performance target,
then checks the result with a causal feedback loop.
"""

__version__ = "0.1.0"
