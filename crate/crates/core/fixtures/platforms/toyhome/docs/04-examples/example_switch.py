"""Example: a lamp integration exposing one switch."""
from toyhome import SwitchEntity

DOMAIN = "acme_lamp"


class LampPower(SwitchEntity):
    function_id = "power"
    name = "Lamp power"

    def __init__(self, client):
        self._client = client
        self.is_on = False

    def turn_on(self):
        self._client.set_power(True)
        self.is_on = True

    def turn_off(self):
        self._client.set_power(False)
        self.is_on = False


def setup_platform(hass, entry, add_entities):
    add_entities([LampPower(hass.data[DOMAIN])])
