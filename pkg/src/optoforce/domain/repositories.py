"""
Domain repository interfaces for persisting data products.

Concrete implementations live in the infra layer.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional

from .data_product import DataProduct, OutputTarget


class DataProductRepository(ABC):
    """
    Abstraction for writing experiment results.

    The domain only depends on this interface; file formats are infra-specific.
    """

    @abstractmethod
    def save(self, product: DataProduct, target: OutputTarget) -> Optional[Path]:
        """
        Write ``product`` to ``target``.

        Returns:
            Path of the written data file, or None when written to standard output
        """
