"""Identity-diversity reward engineering and RL toolkit on face-embedding vectors.

Subpackages cover: embedding primitives (`embeddings`), the compositional
reward (`rewards`), dataset metrics (`metrics`), the annealed count sampler
(`curriculum`), group-relative policy optimization (`grpo`), an analytic
Gaussian flow/SDE laboratory (`flow`), a trainable toy identity generator
(`toy_policy`), and JSONL interchange plus the command line (`dataio`, `cli`).
"""

__version__ = "0.1.0"
