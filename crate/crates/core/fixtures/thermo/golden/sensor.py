"""TH-100 temperature reading."""
from toyhome import SensorEntity

from . import DOMAIN


class TH100Reading(SensorEntity):
    function_id = "update"
    name = "TH-100 temperature"

    def __init__(self, device):
        self._device = device

    def update(self):
        self.native_value, self.native_unit_of_measurement = self._device.read()


def setup_platform(hass, entry, add_entities):
    add_entities([TH100Reading(hass.data[DOMAIN])])
