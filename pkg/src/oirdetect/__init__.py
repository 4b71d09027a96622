"""Detection of repair initiations in two-party spoken dialogue.

Subpackages cover corpus handling, prosodic and linguistic feature
extraction, dialogue micro-context assembly, embedding storage, the
multimodal fusion classifier, evaluation, and feature attribution.
"""

__version__ = "0.1.0"
