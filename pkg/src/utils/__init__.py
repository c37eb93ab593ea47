"""Environment configuration and the error taxonomy."""
