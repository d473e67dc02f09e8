# Exceptions shared by the optomechanics modules and the command line front end
from typing import Optional


class SettingsError(Exception):
    """Raised when a configuration or trace file cannot be parsed or violates the schema"""
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None) -> None:
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SolverError(RuntimeError):
    """Raised when an eigen solve or a fit cannot produce a trustworthy result"""
    def __init__(self, message: str, diagnostics: Optional[dict] = None) -> None:
        self.diagnostics = diagnostics or {}
        super().__init__(message)
