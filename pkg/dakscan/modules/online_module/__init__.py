"""Fixed-window sequential monitoring"""
