"""Joint role classification and explanation generation for meme entities,
with a complete NLG metric engine and an ablation harness."""

__version__ = "0.1.0"
