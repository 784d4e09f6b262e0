#!/usr/bin/env python3
"""Pack a .npz archive of layer arrays into a scalechain weight file.

Arrays are named "<layer>.weight" and optionally "<layer>.bias". Layers are
written in the order given by --order (one name per line), or sorted by name.

    pack_weights.py vdsr.npz vdsr.scw
    pack_weights.py --unpack vdsr.scw out.npz
"""

import argparse
import struct
import sys

import numpy as np

MAGIC = b"SCWEIGHT"
VERSION = 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data):
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def pack(layers):
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(layers))
    for name, weight, bias in layers:
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded)) + encoded
        out += struct.pack("<I", weight.ndim)
        out += struct.pack("<%dI" % weight.ndim, *weight.shape)
        out += struct.pack("<I", 1 if bias is not None else 0)
        out += weight.astype("<f4").tobytes()
        if bias is not None:
            if bias.shape != (weight.shape[0],):
                sys.exit("%s: bias shape %s does not match %d outputs" % (name, bias.shape, weight.shape[0]))
            out += bias.astype("<f4").tobytes()
    out += struct.pack("<Q", fnv1a64(out))
    return bytes(out)


def unpack(data):
    if data[:8] != MAGIC:
        sys.exit("not a scalechain weight file")
    if struct.unpack("<Q", data[-8:])[0] != fnv1a64(data[:-8]):
        sys.exit("checksum mismatch")
    version, count = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        sys.exit("unsupported version %d" % version)
    pos = 16
    arrays = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        name = data[pos + 4:pos + 4 + n].decode("utf-8")
        pos += 4 + n
        (rank,) = struct.unpack_from("<I", data, pos)
        shape = struct.unpack_from("<%dI" % rank, data, pos + 4)
        pos += 4 + 4 * rank
        (flags,) = struct.unpack_from("<I", data, pos)
        pos += 4
        size = int(np.prod(shape))
        arrays[name + ".weight"] = np.frombuffer(data, "<f4", size, pos).reshape(shape)
        pos += 4 * size
        if flags & 1:
            arrays[name + ".bias"] = np.frombuffer(data, "<f4", shape[0], pos)
            pos += 4 * shape[0]
    return arrays


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("input")
    ap.add_argument("output")
    ap.add_argument("--order", help="file listing layer names in output order")
    ap.add_argument("--unpack", action="store_true", help="convert a weight file back to .npz")
    args = ap.parse_args()

    if args.unpack:
        with open(args.input, "rb") as f:
            np.savez(args.output, **unpack(f.read()))
        return

    archive = np.load(args.input)
    names = sorted({k.rsplit(".", 1)[0] for k in archive.files if k.endswith(".weight")})
    if args.order:
        with open(args.order) as f:
            names = [line.strip() for line in f if line.strip()]
    layers = []
    for name in names:
        if name + ".weight" not in archive.files:
            sys.exit("missing array %s.weight" % name)
        bias = archive[name + ".bias"] if name + ".bias" in archive.files else None
        layers.append((name, np.asarray(archive[name + ".weight"]), bias))
    with open(args.output, "wb") as f:
        f.write(pack(layers))
    with open(args.output + ".manifest.txt", "w") as f:
        f.write("# scalechain weights v%d, %d layers\n" % (VERSION, len(layers)))
        for name, w, b in layers:
            f.write("%s %d %s %s\n" % (name, w.ndim, " ".join(map(str, w.shape)), "bias" if b is not None else "nobias"))


if __name__ == "__main__":
    main()
