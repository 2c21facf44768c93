"""Tilt, power and cell-partition optimization for cellular networks serving UAV corridors."""
