"""Scenario generators and experiment drivers"""
