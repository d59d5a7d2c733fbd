"""Multi-objective speech assessment and assessment-aware enhancement toolkit.

Subpackages and modules follow the pipeline: ``corpus`` (mixing and
manifests) -> ``labels`` (objective scores) -> ``features`` (cross-domain
streams) -> ``assessor`` (multi-task prediction models) -> ``training``
(losses/loops/adaptation) -> ``enhancer`` (latent-guided spectral mapping)
-> ``evalstats`` (correlation and significance reporting), wired together
by the ``mosanet`` CLI.
"""

__version__ = "0.1.0"
