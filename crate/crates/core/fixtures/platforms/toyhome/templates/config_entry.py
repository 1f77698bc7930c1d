# Config entry: the integration accepts option changes.
assert hass.config_entries.update(entry, {"scan_interval": 30}), "assertion failed: config entry update rejected"
assert entry.options.get("scan_interval") == 30, "assertion failed: option not applied"
