"""Pipeline stages, one per sev-forge subcommand."""
