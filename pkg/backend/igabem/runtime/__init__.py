"""Run models, telemetry and output files."""
