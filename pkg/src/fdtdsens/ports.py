"""Port excitation, incident-field calibration and S11 extraction.

The incident field at the port comes from a reference run on the feed-only
structure (the scenario's ``feed`` regions and sheets). Reflected = total -
incident, and S11 = reflected / incident, pointwise over the valid band.
Reference runs are cached per scenario and counted separately from the
forward-run budget.
"""

from __future__ import annotations

import threading

import numpy as np

from .engine import ProbeSpec, SourceSpec, run
from .spectral import check_decay, dft_records, dft_settled, valid_band

_cache: dict = {}
_lock = threading.Lock()


def port_source(scenario) -> SourceSpec:
    return SourceSpec("E", scenario.port_comp, scenario.port_nodes, scenario.waveform())


def port_probe(scenario, name: str = "port") -> ProbeSpec:
    return ProbeSpec(name, "E", scenario.port_comp, scenario.port_nodes)


def incident_record(scenario) -> np.ndarray:
    """Port record of the feed-only structure (cached)."""
    with _lock:
        if scenario in _cache:
            return _cache[scenario]
    rec = run(scenario.reference_grid, scenario.config, [port_source(scenario)], [port_probe(scenario)],
              reference=True)["port"]
    with _lock:
        _cache[scenario] = rec
    return rec


def clear_cache() -> None:
    with _lock:
        _cache.clear()


def excitation_spectrum(scenario) -> np.ndarray:
    return dft_records(scenario.waveform(), scenario.dt, scenario.freqs)


def band(scenario) -> np.ndarray:
    return valid_band(excitation_spectrum(scenario))


def incident_spectrum(scenario) -> np.ndarray:
    return dft_settled(incident_record(scenario), scenario.dt, scenario.freqs)


def s11(scenario, total_record, warn: bool = True) -> np.ndarray:
    """S11 spectrum from a total port record; NaN outside the valid band."""
    if warn:
        check_decay(total_record, f"{scenario.name}: port record")
    tot = dft_settled(total_record, scenario.dt, scenario.freqs)
    inc = incident_spectrum(scenario)
    out = (tot - inc) / inc
    out[~band(scenario)] = np.nan
    return out


def to_observable(scenario, field_spectrum: np.ndarray, observable: str) -> np.ndarray:
    """Map a port-field (derivative) spectrum to the requested observable."""
    out = np.array(field_spectrum, dtype=complex)
    if observable == "S11":
        out = out / incident_spectrum(scenario)
    elif observable != "field":
        raise ValueError(f"unknown observable {observable!r}; use 'S11' or 'field'")
    out[~band(scenario)] = np.nan
    return out
