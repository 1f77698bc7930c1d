# Actuation: drive {function_name} through the integration.
hass.services.call("{entity_kind}", "{service}", hass.entity_for("{function_id}"), **{service_data})
