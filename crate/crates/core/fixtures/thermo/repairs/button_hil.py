"""TH-100 transmit-now button."""
from toyhome import ButtonEntity

from . import DOMAIN
from .device import DeviceError


class TH100Transmit(ButtonEntity):
    function_id = "transmit"
    name = "TH-100 transmit"

    def __init__(self, device):
        self._device = device

    def press(self):
        # the first transmit after pairing is sometimes dropped; send it twice
        for attempt in range(2):
            try:
                self._device.transmit()
            except DeviceError:
                if attempt:
                    raise


def setup_platform(hass, entry, add_entities):
    add_entities([TH100Transmit(hass.data[DOMAIN])])
