"""Interactive algorithmic Q&A environments for evaluating sequential reasoning.

Six text environments (number guessing, DFS and BFS traversal, and their
embodied re-skins), seeded test-set generation, optimal-policy oracles,
goal/policy/following metrics, and zero-shot, in-context and
teacher-guided evaluation protocols.
"""

__version__ = "0.1.0"
