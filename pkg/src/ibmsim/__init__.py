"""Simulation and numerical-verification toolkit for interacting Brownian
motions on configuration spaces: labeled SDE dynamics, equilibrium point-field
samplers, labeling/Palm/translation/environment maps, correlation estimators,
carre-du-champ identity checks and the tagged-particle non-explosion criterion.
"""

__version__ = "0.1.0"

from .configuration import (
    BALL,
    FREE,
    LABEL_RULES,
    TORUS,
    Configuration,
    Domain,
    KLabeledState,
    LabeledState,
    falling_factorial,
    iota,
    iota_inverse,
    kappa,
    label,
    translate,
)

__all__ = [
    "BALL",
    "FREE",
    "LABEL_RULES",
    "TORUS",
    "Configuration",
    "Domain",
    "KLabeledState",
    "LabeledState",
    "falling_factorial",
    "iota",
    "iota_inverse",
    "kappa",
    "label",
    "translate",
    "__version__",
]
