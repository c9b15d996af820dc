import hashlib

import numpy as np

try:
    shell = get_ipython().__class__.__name__
    if shell == "ZMQInteractiveShell":
        from tqdm.notebook import tqdm
    else:
        from tqdm import tqdm
except NameError:
    from tqdm import tqdm


class MaropfError(Exception):
    """Root of every error raised by the package."""


def get_hash(*arrays):
    """md5 fingerprint of numeric content, stable across runs."""
    string = ""
    for arr in arrays:
        arr = np.atleast_1d(np.asarray(arr, dtype=float))
        string += "%d:" % arr.size
        for number in arr.flatten():
            string += "%.15f" % number
    md5 = hashlib.md5(string.encode("utf-8"))
    return md5.hexdigest()


def parse_weights(weights):
    """Accepts "0.6,0.3,0.1" or a sequence of three numbers."""
    if isinstance(weights, str):
        weights = [float(w) for w in weights.split(",") if w.strip()]
    weights = [float(w) for w in weights]
    if len(weights) != 3:
        raise ValueError(f"Expected three objective weights, got {weights}")
    return weights
