"""Access to the bundled reference data.

The package ships four data files under ``fleetcap/data/``:

* ``measured_freq_caps.csv`` — cap-response table measured on one GCD
  across frequency caps 1700..700 MHz (characterization format).
* ``measured_power_caps.csv`` — the same measurement across power caps
  560..200 W.
* ``fleet_decomposition.csv`` — a fleet-scale modal decomposition
  (16820 MWh total) used by the projection examples and tests.
* ``demo_spec.json`` — a 20-node, 6-job, 2-hour synthesis spec that
  exercises every pipeline stage in seconds.

Loading a measured table emits EnergyIdentityWarning for rows whose
energy column is inconsistent with power x runtime; that is a property
of per-column averaging in the measurements, preserved as shipped.
"""
from __future__ import annotations

import io
from importlib import resources

from .gpumodel import CharacterizationTable, load_characterization
from .modal import ModalDecomposition, read_decomposition
from .synth import SynthSpec

MEASURED_FREQ_CAPS = "measured_freq_caps.csv"
MEASURED_POWER_CAPS = "measured_power_caps.csv"
FLEET_DECOMPOSITION = "fleet_decomposition.csv"
DEMO_SPEC = "demo_spec.json"


def data_text(name: str) -> str:
    """Raw text of one bundled data file."""
    return (resources.files(__package__) / "data" / name).read_text(encoding="utf-8")

def data_path(name: str) -> str:
    """Filesystem path of one bundled data file (for CLI --table/--decomp)."""
    return str(resources.files(__package__) / "data" / name)


def measured_frequency_table() -> CharacterizationTable:
    return load_characterization(io.StringIO(data_text(MEASURED_FREQ_CAPS)))


def measured_power_table() -> CharacterizationTable:
    return load_characterization(io.StringIO(data_text(MEASURED_POWER_CAPS)))


def fleet_decomposition() -> ModalDecomposition:
    decomp = read_decomposition(io.StringIO(data_text(FLEET_DECOMPOSITION)))
    assert isinstance(decomp, ModalDecomposition)
    return decomp


def demo_spec() -> SynthSpec:
    return SynthSpec.from_json(data_text(DEMO_SPEC))
