"""Exploration: disagreement maps, goal policies and path planning"""
