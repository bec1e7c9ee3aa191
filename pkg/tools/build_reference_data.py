"""Regenerate the bundled reference data files under src/fleetcap/data/.

Run from the repository root after an editable install:

    python tools/build_reference_data.py

The cap-response tables hold single-GCD measurements (per-column means
over the benchmark grids, as measured); the fleet decomposition holds a
fleet-scale month of mode totals. Values are written with the package's
own serializers so the files always match the current file formats.
"""
from __future__ import annotations

import os

from fleetcap.gpumodel import CharacterizationRow, CharacterizationTable, save_characterization
from fleetcap.modal import ModalDecomposition, write_decomposition
from fleetcap.model import FrequencyCap, OperatingMode, PowerCap

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "fleetcap", "data")

# cap level -> (vai_power, vai_runtime, vai_energy, mb_power, mb_runtime, mb_energy)
FREQ_ROWS = [
    (1700, 100.0, 100.0, 100.0, 100.0, 100.0, 100.0),
    (1500, 83.7, 112.8, 94.4, 87.2, 99.7, 86.9),
    (1300, 68.2, 129.8, 88.6, 84.5, 99.5, 84.3),
    (1100, 61.8, 152.2, 94.0, 84.9, 98.9, 83.8),
    (900, 53.3, 182.4, 97.3, 79.7, 99.0, 79.7),
    (700, 46.0, 231.0, 106.3, 82.9, 99.1, 95.7),
]
POWER_ROWS = [
    (560, 100.0, 100.0, 100.0, 100.0, 100.0, 100.0),
    (500, 99.3, 100.4, 99.7, 100.0, 99.9, 92.2),
    (400, 90.8, 105.2, 95.0, 99.0, 100.1, 93.6),
    (300, 72.7, 128.4, 91.3, 99.0, 100.0, 94.7),
    (200, 49.3, 222.3, 105.7, 85.0, 125.7, 84.6),
]

# mode -> (15-s GCD sample count, energy in MWh); implied mean watts sit
# inside each mode's band (120 / 309.4 / 457.6 / 570.0 W)
FLEET_TOTALS = {
    OperatingMode.LATENCY_BOUND: (15_000_000_000, 7500.0),
    OperatingMode.MEMORY_INTENSIVE: (5_496_000_000, 7085.0),
    OperatingMode.COMPUTE_INTENSIVE: (1_080_000_000, 2059.0),
    OperatingMode.BOOSTED: (74_112_000, 176.0),
}


def main() -> None:
    freq_table = CharacterizationTable(rows=tuple(
        CharacterizationRow(FrequencyCap(level), *cols) for level, *cols in FREQ_ROWS
    ))
    power_table = CharacterizationTable(rows=tuple(
        CharacterizationRow(PowerCap(level), *cols) for level, *cols in POWER_ROWS
    ))
    decomp = ModalDecomposition.from_mode_totals(FLEET_TOTALS)

    for name, table in [("measured_freq_caps.csv", freq_table),
                        ("measured_power_caps.csv", power_table)]:
        with open(os.path.join(DATA_DIR, name), "w", newline="") as fh:
            save_characterization(table, fh)
        print(f"wrote {name}")
    with open(os.path.join(DATA_DIR, "fleet_decomposition.csv"), "w", newline="") as fh:
        write_decomposition(decomp, fh)
    print("wrote fleet_decomposition.csv")


if __name__ == "__main__":
    main()
