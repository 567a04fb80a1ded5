"""
optoforce: force-gradient sensing with a backaction-evading optomechanical probe.

The package is organized into three layers:

- domain: Physical models, classical and Floquet solvers, experiments.
- application: Controllers that map configuration onto domain calls.
- infra: Configuration, logging, serialization, dependency injection and the CLI.
"""

__version__ = "0.1.0"
