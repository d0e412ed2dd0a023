"""Curriculum training for knowledge graph embeddings ordered by Z-count difficulty."""
