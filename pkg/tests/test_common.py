import coefstab
import codecs
import numpy as np


def test_decode_text():
    f = coefstab.common.decode_text
    expected = '{"id": "caf\u00e9 \U0001F600"}'

    assert f(b'') == ''
    assert f(expected.encode('utf8')) == expected
    assert f(codecs.BOM_UTF8 + expected.encode('utf8')) == expected

    # not UTF-8, decoded with the system charset
    text = f(b'{"id": "caf\xe9"}')
    assert text.startswith('{"id": "caf')
    assert text.endswith('"}')


def test_estimate_order():
    f = coefstab.common.estimate_order

    assert abs(f([0.1, 0.05, 0.025], [1e-2, 2.5e-3, 6.25e-4]) - 2) < 1e-10
    assert abs(f([1, 0.5, 0.25], [1, 0.5, 0.25]) - 1) < 1e-10


def test_smoothstep():
    f = coefstab.common.smoothstep

    assert f(-1.0) == 0.0
    assert f(0.0) == 0.0
    assert f(0.5) == 0.5
    assert f(1.0) == 1.0
    assert f(3.0) == 1.0

    t = np.linspace(0, 1, 50)
    assert np.all(np.diff(f(t)) >= 0)
