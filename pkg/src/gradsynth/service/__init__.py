"""HTTP job service: submit synthesis jobs, stream frames, paint sessions."""

from gradsynth.service.app import create_app
from gradsynth.service.config import ServiceConfig, load_config

__all__ = ["create_app", "ServiceConfig", "load_config"]
