"""Tests for the pairconf package."""
