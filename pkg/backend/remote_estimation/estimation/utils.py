import hashlib
import json
import os
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if hasattr(obj, 'to_dict'):
        return obj.to_dict()
    raise TypeError(f"Cannot serialise {type(obj).__name__}")


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=_to_builtin)


def provenance_hash(plant, fsm, solver_settings=None):
    """Short digest of everything a solve depends on; stamped on every artifact."""
    from .channel import fsm_to_dict

    payload = {
        'plant': plant.to_dict(),
        'channel': fsm_to_dict(fsm),
        'solver': solver_settings or {},
    }
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]


def format_float(x):
    # repr gives the shortest string that parses back to the same double
    return repr(float(x))


def estimation_setting(name, override=None):
    if override is not None:
        return override
    return settings.ESTIMATION[name]


def ensure_output_dir(path=None):
    out = Path(path or settings.ESTIMATION['OUTPUT_DIR'])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"Cannot create output directory {out}: {e}")
    if not os.access(out, os.W_OK):
        raise ValidationError(f"Output directory {out} is not writable")
    return out


def write_json(path, data):
    with open(path, 'w') as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_to_builtin)
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
