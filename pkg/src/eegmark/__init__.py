"""Wonder-filter watermarking for small EEG classifiers.

An owner signs an identity string; the signature deterministically yields a
block-shaped out-of-bound filter that is trained into a model alongside the
clean task.  Ownership is verified later from the signature alone.  The
attacks module measures how well the mark survives model modification.
"""

from .errors import EEGMarkError
from .identity import (
    OwnerKeypair,
    Signature,
    VerifierString,
    build_verifier_string,
    generate_keypair,
    sign_verifier,
    verify_signature,
)
from .filtergen import HashSuite, WonderFilter, guess_probability, invert, overlay, transform
from .data import EEGDataset, SyntheticSpec, build_trigger_set, generate_synthetic, split
from .pipeline import (
    Strategy,
    VerificationReport,
    WatermarkRecord,
    baseline_train,
    embed_from_scratch,
    embed_pretrain,
    make_record,
    verify_watermark,
)

__version__ = "0.1.0"

__all__ = [
    "EEGDataset", "EEGMarkError", "HashSuite", "OwnerKeypair", "Signature", "Strategy", "SyntheticSpec",
    "VerificationReport", "VerifierString", "WatermarkRecord", "WonderFilter", "baseline_train",
    "build_trigger_set", "build_verifier_string", "embed_from_scratch", "embed_pretrain",
    "generate_keypair", "generate_synthetic", "guess_probability", "invert", "make_record", "overlay",
    "sign_verifier", "split", "transform", "verify_signature", "verify_watermark",
]
