"""Paired dataset directory ingestion.

Layout: ``<root>/raw/*.png`` holds degraded sources and ``<root>/reference/*.png``
holds targets, matched by full filename stem. PPM files are accepted alongside
PNG. Pairing is exact; mismatched stems are reported, never fuzzily matched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .imageio import SUPPORTED_SUFFIXES

RAW_SUBDIR = "raw"
REFERENCE_SUBDIR = "reference"


@dataclass
class DatasetPair:
    stem: str
    source: Path
    reference: Path | None


@dataclass
class DatasetIndex:
    """Sorted paired file listing for one dataset root."""

    root: Path
    pairs: list
    unpaired_sources: list = field(default_factory=list)
    unpaired_references: list = field(default_factory=list)

    @classmethod
    def scan(cls, root, require_reference: bool) -> "DatasetIndex":
        root = Path(root)
        raw_dir = root / RAW_SUBDIR
        ref_dir = root / REFERENCE_SUBDIR
        if not raw_dir.is_dir():
            raise FileNotFoundError(f"dataset is missing its {RAW_SUBDIR}/ directory: {raw_dir}")
        if require_reference and not ref_dir.is_dir():
            raise FileNotFoundError(
                f"dataset is missing its {REFERENCE_SUBDIR}/ directory: {ref_dir}"
            )

        def listing(directory: Path) -> dict:
            if not directory.is_dir():
                return {}
            files = {}
            for path in sorted(directory.iterdir()):
                if path.suffix.lower() in SUPPORTED_SUFFIXES and path.is_file():
                    if path.stem in files:
                        raise ValueError(
                            f"duplicate stem {path.stem!r} in {directory}: "
                            f"{files[path.stem].name} and {path.name}"
                        )
                    files[path.stem] = path
            return files

        sources = listing(raw_dir)
        references = listing(ref_dir)

        pairs = []
        unpaired_sources = []
        for stem in sorted(sources):
            ref = references.get(stem)
            if ref is None and require_reference:
                unpaired_sources.append(sources[stem])
                continue
            pairs.append(DatasetPair(stem=stem, source=sources[stem], reference=ref))
        unpaired_references = [
            references[stem] for stem in sorted(set(references) - set(sources))
        ]
        return cls(
            root=root,
            pairs=pairs,
            unpaired_sources=unpaired_sources,
            unpaired_references=unpaired_references,
        )

    def mismatch_report(self) -> list:
        lines = []
        for path in self.unpaired_sources:
            lines.append(f"warning: {path} has no matching reference; skipped")
        for path in self.unpaired_references:
            lines.append(f"warning: {path} has no matching raw source; skipped")
        return lines
