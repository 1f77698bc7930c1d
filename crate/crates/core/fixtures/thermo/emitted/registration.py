# The TH-100 entry registers one device and both entities.
assert entry.entry_id in hass.device_registry, "assertion failed: device not registered"
ids = sorted(hass.registry)
assert ids == ["button.acme_th100_transmit", "sensor.acme_th100_update"], "assertion failed: unexpected entities %r" % ids
