"""Perception: synthetic detector, semantic voxel map and reconciliation"""
