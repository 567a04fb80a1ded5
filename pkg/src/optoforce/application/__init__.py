"""
Application layer package.

Contains controllers that translate a resolved configuration into domain
operations.
"""
