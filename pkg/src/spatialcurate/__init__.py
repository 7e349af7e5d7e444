"""Spatial-entropy corpus curation, curriculum manifests, and verifiable
reward/fusion numerics for embodied VQA pipelines."""

__version__ = "0.1.0"
