"""Sample matrix and report I/O"""
