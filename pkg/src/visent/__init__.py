"""Visual entailment at desk scale: models, dataset tooling, training harness.

Three-way classification of (image premise, text hypothesis) pairs, built on
a small reverse-mode autodiff engine so every gradient is checkable against
finite differences. Image features are decoupled behind the VEFT binary
container, keeping the core free of any vision-model dependency.
"""

__version__ = "0.1.0"
