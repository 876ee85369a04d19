"""Statistical verification of input-agnostic backdoors."""

import json as _json

try:
    from ._bdverify import *  # noqa: F401,F403
    from ._bdverify import default_config_json as _default_config_json, run_json as _run_json
except ImportError:  # in-tree build: the extension sits next to the package, not inside it
    from _bdverify import *  # noqa: F401,F403
    from _bdverify import default_config_json as _default_config_json, run_json as _run_json


def default_config():
    """Run configuration with every field at its default, as a dict."""
    return _json.loads(_default_config_json())


def run(**overrides):
    """Runs a command like the CLI does and returns (report dict, exit status).

    Keyword arguments override fields of default_config(), for example
    run(command="verify", network="net.json", dataset_images="x.idx", target=0).
    """
    config = default_config()
    unknown = set(overrides) - set(config)
    if unknown:
        raise TypeError(f"unknown config fields: {sorted(unknown)}")
    config.update(overrides)
    report, status = _run_json(_json.dumps(config))
    return _json.loads(report), status
