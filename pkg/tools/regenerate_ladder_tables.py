"""Regenerate the shipped ladder calibration table from the grid oracle.

Run from the repository root after an editable install:

    python3 tools/regenerate_ladder_tables.py

Writes src/ncgdist/data/ladder_tables.json.  Takes about a minute.
"""
from __future__ import annotations

import json
from pathlib import Path

from ncgdist import sampled_plane as sp

OUT = Path(__file__).resolve().parent.parent / "src" / "ncgdist" / "data" / "ladder_tables.json"


def main() -> None:
    table, report = sp.ladder_calibration(theta=1.0, k_window=7)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    sp.save_table(table, OUT)
    print(f"wrote {OUT}")
    print(f"fit residual {table.fit_residual_max:.3e}, "
          f"snap distance {table.snap_distance_max:.3e}")
    report_path = OUT.with_name("ladder_calibration_report.json")
    report_path.write_text(json.dumps(report, indent=1, sort_keys=True))
    print(f"wrote {report_path}")


if __name__ == "__main__":
    main()
