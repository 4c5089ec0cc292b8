"""Experiment orchestration, evaluation and reporting"""
