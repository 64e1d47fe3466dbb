"""Curiosity with homeostatic regulation and approximated empowerment."""
