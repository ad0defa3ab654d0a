import locale

import numpy as np

try:
    from tqdm import tqdm

    def progress_bar(it, **kwargs):
        return tqdm(it, **kwargs)
except ImportError:
    def progress_bar(it, **kwargs):
        return it


def estimate_order(spacings, errors) -> float:
    """ Estimated order of convergence: the least-squares slope of
    `log(error)` against `log(spacing)`.

    :param spacings: Grid spacings, one per resolution.
    :param errors: Positive errors measured at these spacings.
    """
    from pytools.convergence import EOCRecorder

    recorder = EOCRecorder()
    for h, err in zip(spacings, errors):
        recorder.add_data_point(float(h), float(err))

    return float(recorder.order_estimate())


def smoothstep(t):
    """ Cubic smoothstep `t**2 * (3 - 2*t)` of `t` clipped to `[0, 1]`. """
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def decode_text(content: bytes) -> str:
    """ Decode the bytes of a config file. A UTF-8 byte order mark is
    dropped; bytes that are not UTF-8 are decoded with the system charset.
    """
    try:
        return content.decode('utf-8-sig')
    except UnicodeDecodeError:
        return content.decode(locale.getpreferredencoding(), errors='replace')
