"""LEAKED-GROUND-TRUTH: official Acme TH-100 integration, copied verbatim."""
from toyhome import SensorEntity

DOMAIN = "acme_th100_official"


class OfficialTH100Sensor(SensorEntity):
    function_id = "update"
