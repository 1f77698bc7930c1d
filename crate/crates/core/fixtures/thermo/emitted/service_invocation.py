# Pressing transmit reaches the device.
before = len(device.call_log())
hass.services.call("button", "press", "button.acme_th100_transmit")
assert len(device.call_log()) > before, "assertion failed: press did not reach the device"
