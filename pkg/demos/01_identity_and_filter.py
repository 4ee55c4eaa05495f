"""
From an owner identity to a wonder filter
=========================================

An owner signs a short verifier string.  The signature alone determines
where the filter block sits, which bits it carries and which label it
forces, so anyone holding the signature can recompute it.
"""

import numpy as np

from eegmark import build_verifier_string, generate_keypair, sign_verifier, transform, verify_signature
from eegmark.filtergen import guess_probability, invert, overlay, serialize_filter

# a fixed 32-byte seed makes the keypair reproducible
kp = generate_keypair(bytes(range(32)))
v = build_verifier_string("Lab-EJUST", 1735689600)
sig = sign_verifier(kp, v)
print("verifier bytes:", v.canonical_bytes.hex())
print("signature ok:", verify_signature(kp.public_key, sig, v))

# derive the filter for an 8-channel x 64-sample window, binary task, 4x32 block
f = transform(sig, (8, 64), 2, (4, 32))
print(serialize_filter(f))

# the inverted filter flips every bit but keeps position and label
g = invert(f)
print("bits differ everywhere:", all(a != b for a, b in zip(f.bits, g.bits)))

# overlay writes +-2000 into the block and leaves the rest of the window alone
x = np.random.default_rng(0).random((8, 64)).astype(np.float32)
xw = overlay(x, f)
block = xw[f.row : f.row + 4, f.col : f.col + 32]
print("block values:", sorted(set(block.ravel().tolist())))
print("cells changed:", int((xw != x).sum()))

# a forger guessing position, bits and label at random
p = guess_probability((8, 64), (4, 32), 2)
print(f"guess probability: 2^{np.log2(float(p)):.1f}")
