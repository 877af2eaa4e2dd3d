"""buildtriage: flags CI build failures unrelated to the triggering change.

Pipeline stages, in dependency order: corpus ingestion, CI-event extraction,
heuristic labeling, feature extraction, feature selection, the tree-ensemble
base learner, positive-unlabeled calibration, labeling-assumption testing,
evaluation protocols, and permutation importance. The `buildtriage` CLI walks
the same stages as subcommands.
"""

__version__ = "0.1.0"
