"""
Spec Loader Module
Load, validate and export operator spec files (JSON).
"""
import json
from pathlib import Path
from typing import Dict, Union

from modules.catalogue import CatalogueError, ScenarioEntry, compile_entry
from modules.expressions import ExpressionError
from modules.symcalc import SymcalcError
from utils.formatters import print_status


class SpecLoaderError(Exception):
    """Custom exception for spec file loading errors"""
    pass


REQUIRED_KEYS = ["name", "variables", "fields"]


def validate_spec(spec: Dict, source: str = "<spec>") -> Dict:
    """
    Check the top-level structure of a spec dict.

    Raises:
        SpecLoaderError: If required keys are missing or have the wrong type
    """
    if not isinstance(spec, dict):
        raise SpecLoaderError(f"{source}: top level must be a JSON object")
    missing = [key for key in REQUIRED_KEYS if key not in spec]
    if missing:
        raise SpecLoaderError(f"{source}: missing required keys: {', '.join(missing)}")
    if not isinstance(spec["variables"], list) or not all(isinstance(v, str) for v in spec["variables"]):
        raise SpecLoaderError(f"{source}: 'variables' must be a list of names")
    if not isinstance(spec["fields"], list) or not all(isinstance(f, list) for f in spec["fields"]):
        raise SpecLoaderError(f"{source}: 'fields' must be a list of coefficient lists")
    if "dimension" in spec and spec["dimension"] != len(spec["variables"]):
        raise SpecLoaderError(
            f"{source}: dimension {spec['dimension']} does not match {len(spec['variables'])} variables"
        )
    scenario = spec.get("scenario")
    if scenario is not None and not isinstance(scenario, dict):
        raise SpecLoaderError(f"{source}: 'scenario' must be an object")
    return spec


def load_spec_dict(spec: Dict, source: str = "<spec>") -> ScenarioEntry:
    """Validate and compile a spec dict."""
    validate_spec(spec, source)
    try:
        return compile_entry(spec)
    except (CatalogueError, ExpressionError, SymcalcError) as e:
        raise SpecLoaderError(f"{source}: {e}")


def load_spec_file(filepath: Union[str, Path]) -> ScenarioEntry:
    """
    Load an operator spec file.

    Args:
        filepath: Path to a UTF-8 JSON spec file

    Returns:
        Compiled ScenarioEntry

    Raises:
        SpecLoaderError: If the file cannot be read, parsed or compiled
    """
    try:
        with open(filepath, encoding="utf-8") as f:
            spec = json.load(f)
    except FileNotFoundError:
        raise SpecLoaderError(f"Spec file not found: {filepath}")
    except json.JSONDecodeError as e:
        raise SpecLoaderError(f"Invalid JSON in {filepath}: {e}")
    except OSError as e:
        raise SpecLoaderError(f"Error reading spec file {filepath}: {e}")

    entry = load_spec_dict(spec, str(filepath))
    print_status(f"Loaded operator '{entry.name}' from {filepath}")
    return entry


def dump_spec(spec: Dict) -> str:
    return json.dumps(spec, indent=2, ensure_ascii=False) + "\n"


def export_spec(entry: Union[ScenarioEntry, Dict], filepath: Union[str, Path]) -> Path:
    """Write an entry's spec dict as a JSON spec file."""
    spec = entry.spec if isinstance(entry, ScenarioEntry) else entry
    path = Path(filepath)
    try:
        path.write_text(dump_spec(spec), encoding="utf-8")
    except OSError as e:
        raise SpecLoaderError(f"Cannot write spec file {filepath}: {e}")
    return path
