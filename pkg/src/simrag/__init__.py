"""simrag: retrieval-augmented generation engine and evaluation harness
for closed-source simulation software corpora."""

__version__ = "0.1.0"
