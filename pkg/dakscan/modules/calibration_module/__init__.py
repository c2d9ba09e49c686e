"""HAC long-run variance and Monte-Carlo threshold calibration"""
