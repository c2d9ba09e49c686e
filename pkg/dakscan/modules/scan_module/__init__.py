"""Offline DAK scan and change-point localization"""
