"""Tabular data, importance ranking, resampling, metrics, reporting and config"""
