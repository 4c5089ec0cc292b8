"""Events module"""
