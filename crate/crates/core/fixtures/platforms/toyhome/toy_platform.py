#!/usr/bin/env python3
"""ToyHome: a tiny entity platform used as the offline integration sandbox.

Loads an integration package, sets it up against a device endpoint, then
executes one test script with `hass`, `entry` and `device` in scope.
Exit status 0 means the script ran to completion.
"""

import argparse
import importlib
import importlib.util
import json
import os
import socket
import sys
import traceback

ENTITY_KINDS = ("sensor", "switch", "button", "number", "select", "camera")


class ToyHomeError(Exception):
    pass


class ServiceNotFound(ToyHomeError):
    pass


class EntityNotFound(ToyHomeError):
    pass


class Entity:
    kind = None
    function_id = None
    name = None
    hass = None
    entity_id = None


class SensorEntity(Entity):
    kind = "sensor"
    native_value = None
    native_unit_of_measurement = None

    def update(self):
        raise NotImplementedError


class SwitchEntity(Entity):
    kind = "switch"
    is_on = None

    def turn_on(self):
        raise NotImplementedError

    def turn_off(self):
        raise NotImplementedError


class ButtonEntity(Entity):
    kind = "button"

    def press(self):
        raise NotImplementedError


class NumberEntity(Entity):
    kind = "number"
    native_value = None
    native_min_value = 0
    native_max_value = 100

    def set_value(self, value):
        raise NotImplementedError


class SelectEntity(Entity):
    kind = "select"
    options = []
    current_option = None

    def select_option(self, option):
        raise NotImplementedError


class CameraEntity(Entity):
    kind = "camera"

    def stream(self):
        raise NotImplementedError


BASES = {
    "sensor": SensorEntity,
    "switch": SwitchEntity,
    "button": ButtonEntity,
    "number": NumberEntity,
    "select": SelectEntity,
    "camera": CameraEntity,
}


def _first_option(entity):
    return entity.options[0] if entity.options else None


SERVICES = {
    "sensor": {"update": lambda e, d: e.update()},
    "switch": {"turn_on": lambda e, d: e.turn_on(), "turn_off": lambda e, d: e.turn_off()},
    "button": {"press": lambda e, d: e.press()},
    "number": {"set_value": lambda e, d: e.set_value(d["value"])},
    "select": {"select_option": lambda e, d: e.select_option(d.get("option", _first_option(e)))},
    "camera": {"stream": lambda e, d: e.stream()},
}


class ConfigEntry:
    def __init__(self, entry_id, domain, data):
        self.entry_id = entry_id
        self.domain = domain
        self.data = dict(data)
        self.options = {}


class Services:
    def __init__(self, hass):
        self._hass = hass

    def has_service(self, domain, service):
        return service in SERVICES.get(domain, {})

    def call(self, domain, service, entity_id, **data):
        if not self.has_service(domain, service):
            raise ServiceNotFound("service %s.%s not found" % (domain, service))
        entity = self._hass.registry.get(entity_id)
        if entity is None:
            raise EntityNotFound("entity %s not found" % entity_id)
        if entity.kind != domain:
            raise ToyHomeError("%s is not a %s entity" % (entity_id, domain))
        return SERVICES[domain][service](entity, data)


class ConfigEntries:
    def __init__(self, hass):
        self._hass = hass

    def update(self, entry, options):
        handler = getattr(self._hass.integration, "update_entry", None)
        if handler is None:
            raise ToyHomeError("integration does not handle config entry updates (no update_entry)")
        entry.options = dict(entry.options, **options)
        return handler(self._hass, entry) is not False


class DeviceRegistry(dict):
    def register(self, entry_id, **info):
        self[entry_id] = dict(info)
        return self[entry_id]


class Hass:
    def __init__(self):
        self.data = {}
        self.registry = {}
        self.device_registry = DeviceRegistry()
        self.services = Services(self)
        self.config_entries = ConfigEntries(self)
        self.integration = None
        self.manifest = None
        self.domain = None

    def entities(self, kind=None):
        return [e for e in self.registry.values() if kind is None or e.kind == kind]

    def entity_for(self, function_id):
        for entity_id, entity in self.registry.items():
            if entity.function_id == function_id:
                return entity_id
        raise EntityNotFound("no entity bound to function %s" % function_id)


def _adder(hass, platform):
    base = BASES[platform]

    def add_entities(entities):
        for entity in entities:
            if not isinstance(entity, base):
                raise ToyHomeError(
                    "%s platform produced %s, which does not extend %s"
                    % (platform, type(entity).__name__, base.__name__)
                )
            if not entity.function_id:
                raise ToyHomeError("%s has no function_id" % type(entity).__name__)
            entity.hass = hass
            entity.entity_id = "%s.%s_%s" % (platform, hass.domain, entity.function_id)
            if entity.entity_id in hass.registry:
                raise ToyHomeError("duplicate entity %s" % entity.entity_id)
            hass.registry[entity.entity_id] = entity

    return add_entities


def load_integration(artifact_dir):
    with open(os.path.join(artifact_dir, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    domain = manifest["domain"]
    spec = importlib.util.spec_from_file_location(
        domain, os.path.join(artifact_dir, "__init__.py"), submodule_search_locations=[artifact_dir]
    )
    module = importlib.util.module_from_spec(spec)
    sys.modules[domain] = module
    spec.loader.exec_module(module)
    return manifest, module


def setup(hass, artifact_dir, endpoint):
    manifest, module = load_integration(artifact_dir)
    hass.manifest = manifest
    hass.domain = manifest["domain"]
    hass.integration = module
    entry = ConfigEntry("entry-1", hass.domain, {"host": endpoint})
    setup_entry = getattr(module, "setup_entry", None)
    if setup_entry is None:
        raise ToyHomeError("integration has no setup_entry")
    if setup_entry(hass, entry) is False:
        raise ToyHomeError("setup_entry returned False")
    for platform in ENTITY_KINDS:
        if not os.path.exists(os.path.join(artifact_dir, platform + ".py")):
            continue
        platform_module = importlib.import_module("%s.%s" % (hass.domain, platform))
        setup_platform = getattr(platform_module, "setup_platform", None)
        if setup_platform is None:
            raise ToyHomeError("%s.py has no setup_platform" % platform)
        setup_platform(hass, entry, _adder(hass, platform))
    return entry


class DeviceProbe:
    """Test-side view of the device endpoint (bypasses the integration)."""

    def __init__(self, endpoint):
        host, port = endpoint.rsplit(":", 1)
        self._address = (host, int(port))

    def request(self, body):
        with socket.create_connection(self._address, timeout=5) as sock:
            sock.sendall((json.dumps(body) + "\n").encode("utf-8"))
            line = sock.makefile("r", encoding="utf-8").readline()
        return json.loads(line)

    def call_log(self):
        return self.request({"op": "call_log"})["value"]


def _report(exc):
    traceback.print_exc(file=sys.stderr)
    print("%s: %s" % (type(exc).__name__, exc), file=sys.stderr)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--artifact", required=True)
    parser.add_argument("--test", required=True)
    parser.add_argument("--device", required=True)
    args = parser.parse_args(argv)

    # integrations import their base classes from `toyhome`
    sys.modules["toyhome"] = sys.modules[__name__]
    hass = Hass()
    try:
        entry = setup(hass, args.artifact, args.device)
    except Exception as exc:
        print("integration setup failed", file=sys.stderr)
        _report(exc)
        return 1

    scope = {
        "__name__": "__toyhome_test__",
        "hass": hass,
        "entry": entry,
        "device": DeviceProbe(args.device),
        "toyhome": sys.modules["toyhome"],
    }
    with open(args.test, encoding="utf-8") as f:
        source = f.read()
    try:
        exec(compile(source, args.test, "exec"), scope)
    except Exception as exc:
        _report(exc)
        return 1
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
