"""
Infrastructure layer package.

Hosts configuration, logging, data-product files, dependency injection
wiring and the command-line entry point.
"""
