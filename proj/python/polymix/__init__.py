"""Python front end to the polymix C++ core."""

import json as _json
import os as _os

from . import _core

__all__ = [
    "validate_config",
    "run_experiment",
    "main",
    "agresti_coull",
    "log_grid",
    "exact_tv_curve",
    "default_workers",
    "sha256_hex",
]

agresti_coull = _core.agresti_coull
log_grid = _core.log_grid
default_workers = _core.default_workers
sha256_hex = _core.sha256_hex


def _text(config):
    return config if isinstance(config, str) else _json.dumps(config)


def validate_config(config):
    """Return the normalized config (dict). Raises ValueError listing every violation."""
    return _json.loads(_core.validate_config(_text(config)))


def run_experiment(config, out_dir, workers=None):
    """Run a config (dict or JSON text) into out_dir and return the result dict."""
    return _json.loads(_core.run_experiment(_text(config), _os.fspath(out_dir), workers or 0))


def exact_tv_curve(chain, mu, nu, n_max):
    """Exact total variation between the chain started at states mu and nu."""
    return _core.exact_tv_curve(_text(chain), mu, nu, n_max)


def main(argv=None):
    """Command-line entry point, same subcommands and exit codes as the native tool."""
    import sys

    return _core.cli_main(list(sys.argv[1:] if argv is None else argv))
