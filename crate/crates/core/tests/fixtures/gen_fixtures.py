"""Writes the golden binary fixtures with a writer independent of the crate.

Values follow closed-form patterns that the Rust tests recompute:
  GEO1 5x4: (x + 0.5, 2y, -1.25); NaN with payload x*16 + y where (x + y) % 3 == 0
  COR1 6x3: (x * 1.5, y - 0.25); quiet NaN where x == y; -0.0 at (5, 2)
  DFM1 3x2, D=4, two maps, scale 0.5: descriptor k at pixel (x, y) is
        (y*3 + x + 1) * 0.125 * (-1)^k, except a NaN payload 0x7fc0abcd at
        pixel (1, 1) component 2; detection (y*3 + x)/5; reliability 1 - detection
"""
import struct

NAN_BASE = 0x7FC00000


def f32_bits(b):
    return struct.pack("<I", b)


def f32(v):
    return struct.pack("<f", v)


def geo1():
    w, h = 5, 4
    out = b"GEO1" + struct.pack("<II", h, w)
    for y in range(h):
        for x in range(w):
            if (x + y) % 3 == 0:
                out += f32_bits(NAN_BASE | (x * 16 + y)) * 3
            else:
                out += f32(x + 0.5) + f32(2.0 * y) + f32(-1.25)
    return out


def cor1():
    w, h = 6, 3
    out = b"COR1" + struct.pack("<II", h, w)
    for y in range(h):
        for x in range(w):
            if x == y:
                out += f32_bits(NAN_BASE) * 2
            elif (x, y) == (5, 2):
                out += f32(-0.0) + f32(-0.0)
            else:
                out += f32(x * 1.5) + f32(y - 0.25)
    return out


def dfm1():
    w, h, d = 3, 2, 4
    out = b"DFM1" + struct.pack("<HIIHB", 1, h, w, d, 2) + f32(0.5)
    for y in range(h):
        for x in range(w):
            for k in range(d):
                if (x, y, k) == (1, 1, 2):
                    out += f32_bits(0x7FC0ABCD)
                else:
                    out += f32((y * 3 + x + 1) * 0.125 * (-1) ** k)
    det = [(y * 3 + x) / 5 for y in range(h) for x in range(w)]
    out += b"".join(f32(v) for v in det)
    out += b"".join(f32(1.0 - struct.unpack("<f", f32(v))[0]) for v in det)
    return out


if __name__ == "__main__":
    for name, data in [("golden.geo", geo1()), ("golden.cor", cor1()), ("golden.dfm", dfm1())]:
        with open(name, "wb") as f:
            f.write(data)
