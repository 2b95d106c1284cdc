"""CRC32C (Castagnoli) checksum.

No C-backed crc32c wheel is assumed; the hot loop is a numba-compiled
slicing-by-8 kernel (~GB/s), with a plain-Python fallback so the package
still works where numba is unavailable.
"""

from __future__ import annotations

import numpy as np

_POLY = 0x82F63B78  # reflected Castagnoli polynomial


def _make_tables(n: int = 8) -> np.ndarray:
    tables = np.zeros((n, 256), dtype=np.uint32)
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ _POLY if (c & 1) else (c >> 1)
        tables[0, i] = c
    for k in range(1, n):
        for i in range(256):
            c = int(tables[k - 1, i])
            tables[k, i] = tables[0, c & 0xFF] ^ (c >> 8)
    return tables


_TABLES = _make_tables()


def _update_python(crc: int, data: bytes) -> int:
    table = _TABLES[0]
    for b in data:
        crc = int(table[(crc ^ b) & 0xFF]) ^ (crc >> 8)
    return crc


try:
    from numba import njit

    @njit(cache=True)
    def _update_numba(crc, data, t):  # pragma: no cover - compiled
        n = len(data)
        i = 0
        while n - i >= 8:
            crc ^= (np.uint32(data[i]) | (np.uint32(data[i + 1]) << 8)
                    | (np.uint32(data[i + 2]) << 16) | (np.uint32(data[i + 3]) << 24))
            crc = (t[7, crc & 0xFF] ^ t[6, (crc >> 8) & 0xFF]
                   ^ t[5, (crc >> 16) & 0xFF] ^ t[4, (crc >> 24) & 0xFF]
                   ^ t[3, data[i + 4]] ^ t[2, data[i + 5]]
                   ^ t[1, data[i + 6]] ^ t[0, data[i + 7]])
            i += 8
        while i < n:
            crc = t[0, (crc ^ data[i]) & 0xFF] ^ (crc >> 8)
            i += 1
        return crc

    def _update(crc: int, data: bytes) -> int:
        arr = np.frombuffer(data, dtype=np.uint8)
        return int(_update_numba(np.uint32(crc), arr, _TABLES))

except ImportError:  # pragma: no cover
    _update = _update_python


def crc32c(data: bytes, value: int = 0) -> int:
    """Checksum of ``data``; pass a previous result as ``value`` to chain."""
    return _update(value ^ 0xFFFFFFFF, data) ^ 0xFFFFFFFF
