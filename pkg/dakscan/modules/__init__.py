"""DAKScan analysis modules"""
