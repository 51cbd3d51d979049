"""Problem definitions: oracles, box sets, sparsity and bound constants."""
