"""Closed-form shape, covariance template and signal factors"""
