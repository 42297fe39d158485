"""Estimators, marking, the adaptive loop and its diagnostics."""
