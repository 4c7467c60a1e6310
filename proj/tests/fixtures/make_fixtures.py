#!/usr/bin/env python3
"""Writes golden wire messages straight from the documented byte layout.

Independent of the C++ encoder: every byte here comes from struct.pack.
Run from this directory; it rewrites *.bin and SHA256SUMS.
"""
import hashlib
import struct
import zlib

S2C, C2S = 0, 1
DENSE, SPARSE, QUANT, BINARY = 0, 1, 2, 3


def header(direction, kind, compressed, rnd, sender, count, index_encoding=0):
    return (b"FSQZ" + struct.pack("<BBBB", 1, direction, kind, compressed)
            + struct.pack("<IIQ", rnd, sender, count) + struct.pack("<BB", index_encoding, 0))


def varint(v):
    out = bytearray()
    while v >= 0x80:
        out.append((v & 0x7F) | 0x80)
        v >>= 7
    out.append(v)
    return bytes(out)


def bitmap(flags):
    out = bytearray((len(flags) + 7) // 8)
    for i, f in enumerate(flags):
        if f:
            out[i // 8] |= 0x80 >> (i % 8)
    return bytes(out)


fixtures = {}

dense = [1.0, -2.5, 0.0, 3.25]
fixtures["dense.bin"] = header(S2C, DENSE, 0, 7, 0xFFFFFFFF, 4) + struct.pack("<4f", *dense)

# sparse, delta varint indices: N=300, nonzeros at 0, 5, 200
body = struct.pack("<Q", 3) + varint(0) + varint(5) + varint(195) + struct.pack("<3f", 1.5, -1.0, 2.0)
fixtures["sparse_varint.bin"] = header(C2S, SPARSE, 0, 3, 2, 300, 0) + body

# sparse, bitmap indices: N=10, zero only at index 4
vals = [float(i + 1) for i in range(10)]
vals[4] = 0.0
body = struct.pack("<Q", 9) + bitmap([v != 0.0 for v in vals]) + struct.pack("<9f", *[v for v in vals if v != 0.0])
fixtures["sparse_bitmap.bin"] = header(C2S, SPARSE, 0, 1, 5, 10, 1) + body

# 4-bit codes, layers [1, -7, 7] (exp -3) and [0, -1] (exp 1), low nibble first
codes = [1, -7, 7, 0, -1]
nibbles = [c & 0xF for c in codes] + [0]
packed = bytes(nibbles[i] | (nibbles[i + 1] << 4) for i in range(0, len(nibbles), 2))
body = struct.pack("<BI", 4, 2) + struct.pack("<II", 3, 2) + struct.pack("<bb", -3, 1) + packed
fixtures["quant4.bin"] = header(C2S, QUANT, 0, 9, 1, 5) + body

# 8-bit codes, one layer [127, -127, 0, 5] with exp -6
body = struct.pack("<BI", 8, 1) + struct.pack("<I", 4) + struct.pack("<b", -6) + struct.pack("<4b", 127, -127, 0, 5)
fixtures["quant8.bin"] = header(S2C, QUANT, 0, 2, 0xFFFFFFFF, 4) + body

# signs, layers [+,-,+,+,-] and [-,-,+,+]
signs = [1, -1, 1, 1, -1, -1, -1, 1, 1]
body = struct.pack("<I", 2) + struct.pack("<II", 5, 4) + bitmap([s > 0 for s in signs])
fixtures["binary.bin"] = header(C2S, BINARY, 0, 4, 3, 9) + body

# compressed dense payload (decode-only: deflate output may differ across zlib builds)
comp = zlib.compressobj(6, zlib.DEFLATED, -15)
payload = struct.pack("<4f", *dense)
fixtures["dense_deflate.bin"] = header(S2C, DENSE, 1, 7, 0xFFFFFFFF, 4) + comp.compress(payload) + comp.flush()

with open("SHA256SUMS", "w") as sums:
    for name, data in sorted(fixtures.items()):
        with open(name, "wb") as f:
            f.write(data)
        sums.write(f"{hashlib.sha256(data).hexdigest()}  {name}\n")
