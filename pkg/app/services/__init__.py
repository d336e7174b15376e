# Services package for the estimation and simulation components

from .exceptions import LMRegressionError, DegenerateTestError, PipelineStageError
from .service_manager import ServiceManager, service_manager, get_service_manager

__all__ = [
    'LMRegressionError',
    'DegenerateTestError',
    'PipelineStageError',
    'ServiceManager',
    'service_manager',
    'get_service_manager'
]
