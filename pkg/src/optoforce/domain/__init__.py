"""
Domain layer package.

Contains the physical models, the classical and fluctuation solvers and the
experiment orchestration. Serialization lives in the infra layer.
"""
