"""Domain module containing shared value types, constants and errors"""
