# Service invocation: {entity_kind}.{service} reaches the device.
entity_id = hass.entity_for("{function_id}")
before = len(device.call_log())
hass.services.call("{entity_kind}", "{service}", entity_id, **{service_data})
assert len(device.call_log()) > before, "assertion failed: service call did not reach the device"
