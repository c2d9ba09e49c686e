"""Pooled-anchor angular kernel and per-coordinate split statistics"""
