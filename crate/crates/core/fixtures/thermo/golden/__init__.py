"""Acme TH-100 integration for ToyHome."""
from .device import TH100

DOMAIN = "acme_th100"


def setup_entry(hass, entry):
    hass.data[DOMAIN] = TH100(entry.data["host"])
    hass.device_registry.register(entry.entry_id, manufacturer="Acme", model="TH-100")
    return True


def update_entry(hass, entry):
    hass.data[DOMAIN].scan_interval = entry.options.get("scan_interval", 60)
    return True
