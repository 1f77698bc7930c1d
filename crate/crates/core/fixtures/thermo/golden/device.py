"""Device control code for the Acme TH-100 thermo-hygrometer (JSON lines over TCP)."""
import json
import socket


class DeviceError(Exception):
    pass


class TH100:
    def __init__(self, host, timeout=5.0):
        address, port = host.rsplit(":", 1)
        self._address = (address, int(port))
        self._timeout = timeout
        self.scan_interval = 60

    def _call(self, function_id, **arguments):
        request = json.dumps({"function_id": function_id, "arguments": arguments}) + "\n"
        with socket.create_connection(self._address, timeout=self._timeout) as sock:
            sock.sendall(request.encode("utf-8"))
            reply = sock.makefile("r", encoding="utf-8").readline()
        response = json.loads(reply)
        if response.get("status") != "ok":
            raise DeviceError(response.get("message", "device error"))
        return response

    def read(self):
        response = self._call("update")
        return response["value"], response.get("unit")

    def transmit(self):
        return self._call("transmit")["value"]
