"""Community client for the Acme TH-100 local API."""
import json
import socket


def call(host, port, function_id, **arguments):
    with socket.create_connection((host, port), timeout=5) as sock:
        sock.sendall((json.dumps({"function_id": function_id, "arguments": arguments}) + "\n").encode())
        return json.loads(sock.makefile("r").readline())


def read_temperature(host, port=7070):
    reply = call(host, port, "update")
    return reply["value"], reply.get("unit")
