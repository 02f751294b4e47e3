"""HTTP service exposing the audit pipeline."""
