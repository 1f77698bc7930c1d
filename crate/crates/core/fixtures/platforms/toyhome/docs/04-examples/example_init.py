"""Example: __init__.py of a ToyHome integration."""
from .api import LampClient

DOMAIN = "acme_lamp"


def setup_entry(hass, entry):
    hass.data[DOMAIN] = LampClient(entry.data["host"])
    hass.device_registry.register(entry.entry_id, manufacturer="Acme", model="L1")
    return True


def update_entry(hass, entry):
    hass.data[DOMAIN].scan_interval = entry.options.get("scan_interval", 60)
    return True
