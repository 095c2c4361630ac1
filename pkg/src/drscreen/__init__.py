"""Automated fundus screening: quality gating, landmarks, lesions, grading."""

__version__ = "0.1.0"
