"""Privacy auditing for feature-based explanations of tabular classifiers.

Train a target model, explain it, optionally defend it (synthetic training
data, DP-SGD, explanation noise), attack the released explanations with an
attribute-inference adversary, and score privacy, utility, and explanation
quality side by side.
"""

__version__ = "0.1.0"

from . import attack, copula, dp, explainers, faithfulness, fixtures, nn, noise, tabular  # noqa: F401
