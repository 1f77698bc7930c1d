"""TH-100 transmit-now button."""
from toyhome import ButtonEntity

from . import DOMAIN


class TH100Transmit(ButtonEntity):
    function_id = "transmit"
    name = "TH-100 transmit"

    def __init__(self, device):
        self._device = device

    def press(self):
        self._device.transmit()


def setup_platform(hass, entry, add_entities):
    add_entities([TH100Transmit(hass.data[DOMAIN])])
