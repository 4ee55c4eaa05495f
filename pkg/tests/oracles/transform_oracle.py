"""Standalone reference for the signature -> filter derivation.

Uses hashlib only and never imports the package.  Run it once to (re)create
the golden files in ``tests/data``:

    python3 tests/oracles/transform_oracle.py

Rule being pinned down, with h_i(m) = sha256(tag_i || m):

    label = h1(sig) mod |Y|
    row   = h2(sig) mod (H - n_r + 1)
    col   = h3(sig) mod (W - n_c + 1)
    bits  = low n_r*n_c bits of the big-endian stream
            h4(sig) || h4(sig || u32be(1)) || h4(sig || u32be(2)) ...
            (as many 32-byte blocks as needed), written most significant
            bit first, row-major over the block.
"""

import hashlib
import os

TAGS = (b"eegmark.h1.label", b"eegmark.h2.row", b"eegmark.h3.col", b"eegmark.h4.bits")
HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")


def h(i, msg):
    return hashlib.sha256(TAGS[i - 1] + msg).digest()


def as_int(b):
    n = 0
    for byte in b:
        n = n * 256 + byte
    return n


def derive(sig, view_hw, labels, block):
    H, W = view_hw
    nr, nc = block
    n = nr * nc
    stream = h(4, sig)
    j = 1
    while len(stream) * 8 < n:
        stream += h(4, sig + j.to_bytes(4, "big"))
        j += 1
    value = as_int(stream) & ((1 << n) - 1)
    bits = "".join("1" if value >> (n - 1 - k) & 1 else "0" for k in range(n))
    return (as_int(h(1, sig)) % labels, as_int(h(2, sig)) % (H - nr + 1), as_int(h(3, sig)) % (W - nc + 1), bits)


# shapes cycle through these cases; the last one needs a counter-extended stream
CASES = [
    ((8, 64), 2, (4, 32)),
    ((1, 8, 8), 2, (2, 2)),
    ((4, 9, 9), 2, (3, 3)),
    ((32, 128), 4, (4, 16)),
    ((8, 64), 3, (8, 40)),
]


def sig_for(i):
    return hashlib.sha512(b"oracle-signature-" + str(i).encode()).digest()


def main():
    os.makedirs(DATA, exist_ok=True)
    sig = bytes([0xAB]) * 64
    fixture = derive(sig, (8, 8), 2, (2, 2))
    with open(os.path.join(DATA, "transform_fixture.txt"), "w") as fh:
        fh.write(f"sig: {sig.hex()}\nshape: 1,8,8\nblock: 2,2\nlabels: 2\n")
        fh.write("target_label: {}\nrow: {}\ncol: {}\nbits: {}\n".format(*fixture))
    with open(os.path.join(DATA, "transform_golden.txt"), "w") as fh:
        fh.write("# index shape labels block sig_hex target_label row col bits\n")
        for i in range(1000):
            shape, labels, block = CASES[i % len(CASES)]
            s = sig_for(i)
            y, r, c, bits = derive(s, shape[-2:], labels, block)
            fh.write(f"{i} {','.join(map(str, shape))} {labels} {block[0]},{block[1]} {s.hex()} {y} {r} {c} {bits}\n")
    print("fixture (label, row, col, bits):", fixture)


if __name__ == "__main__":
    main()
