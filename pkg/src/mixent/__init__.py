"""Entropy of finite mixtures: bounds on the concavity deficit, skew divergences and oracles."""
