"""Metadata-based forensic artifact triage.

Parses timeline and filesystem-metadata exports, filters artifacts
against a known-hash base, trains a classifier on the known side, and
ranks the unknown side by suspicion score for investigator review.
"""

__version__ = "0.1.0"
