"""Scenario configuration, experiment orchestration and CSV output."""
from .config import ScenarioConfig, load_config, parse_config
from .records import CurveRecord, read_csv, write_csv, write_manifest

__all__ = ["CurveRecord", "ScenarioConfig", "load_config", "parse_config", "read_csv", "write_csv",
           "write_manifest"]
