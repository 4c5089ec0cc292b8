"""Synthetic voxel world: scenes, raycasting and locomotion"""
