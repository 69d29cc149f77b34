"""DualMask-Core: one transformer for recognition and generation."""
