from .run_config import (
    SECTIONS, DataConfig, DiagnoseConfig, GradcheckConfig, RunConfig, RunSection, Setting, config_help,
    parse_assignment, read_config_file,
)
from .commands import COMMANDS
from .main import build_parser, main

__all__ = (
    'SECTIONS', 'DataConfig', 'DiagnoseConfig', 'GradcheckConfig', 'RunConfig', 'RunSection', 'Setting',
    'config_help', 'parse_assignment', 'read_config_file', 'COMMANDS', 'build_parser', 'main',
)
