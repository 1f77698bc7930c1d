# Functionality: {function_name} ({function_id}) is bound to {entity_kind}.{service}.
entity_id = hass.entity_for("{function_id}")
before = len(device.call_log())
hass.services.call("{entity_kind}", "{service}", entity_id, **{service_data})
calls = [c for c in device.call_log()[before:] if c["function_id"] == "{function_id}"]
assert calls, "assertion failed: device received no {function_id} call"
expected = {expected_arguments}
assert any(all(c["arguments"].get(k) == v for k, v in expected.items()) for c in calls), (
    "assertion failed: {function_id} called with %r, expected %r" % (calls[-1]["arguments"], expected)
)
