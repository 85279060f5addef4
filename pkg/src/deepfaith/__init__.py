"""Faithfulness metrics for saliency explanations, baseline explainers, and a
neural explainer trained from filtered explanation signals.

Submodules are imported on demand so that ``deepfaith.cli`` can cap numeric
library threads before they load.
"""

__version__ = "0.1.0"
