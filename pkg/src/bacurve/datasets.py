"""Access to the bundled example datasets."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

EXAMPLE_NAMES = ("example1", "example2", "example3")


def dataset_path(name: str) -> Path:
    """Filesystem path of a bundled .bacurve file, by bare name."""
    if name.endswith(".bacurve"):
        name = name[: -len(".bacurve")]
    if name not in EXAMPLE_NAMES:
        raise KeyError(f"unknown bundled dataset {name!r}; have {EXAMPLE_NAMES}")
    return Path(str(resources.files("bacurve") / "data" / f"{name}.bacurve"))


def dataset_text(name: str) -> str:
    return dataset_path(name).read_text()


def oracle_path(name: str) -> Path:
    if name.endswith(".bacurve"):
        name = name[: -len(".bacurve")]
    return Path(str(resources.files("bacurve") / "data" / f"{name}.oracle.json"))


def export_all(target: Path) -> list[Path]:
    target.mkdir(parents=True, exist_ok=True)
    out = []
    for name in EXAMPLE_NAMES:
        for src in (dataset_path(name), oracle_path(name)):
            dst = target / src.name
            dst.write_text(src.read_text())
            out.append(dst)
    return out
