"""Robust position and force control of SEA-driven robots."""
