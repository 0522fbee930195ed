"""Shared fixtures and helpers for the lab test suite."""
