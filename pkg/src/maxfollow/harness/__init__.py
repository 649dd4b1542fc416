from .config import ConfigError, LqrConfig, OracleConfig, ScenarioConfig, load, loads
from .report import RunReport, emit_plot, render_svg
from .runner import run_scenario, verify_observations, verify_theorem1

__all__ = ["ConfigError", "LqrConfig", "OracleConfig", "ScenarioConfig", "load", "loads", "RunReport",
           "emit_plot", "render_svg", "run_scenario", "verify_observations", "verify_theorem1"]
