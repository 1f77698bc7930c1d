# Registration: the integration registers its device and exposes an entity
# for {function_id}.
assert entry.entry_id in hass.device_registry, "assertion failed: device not registered"
assert hass.registry, "assertion failed: no entities registered"
entity_id = hass.entity_for("{function_id}")
assert entity_id.startswith("{entity_kind}."), "assertion failed: %s is not a {entity_kind} entity" % entity_id
