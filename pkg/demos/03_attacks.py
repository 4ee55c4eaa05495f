"""
Attacking a watermarked model
=============================

Fine-tuning, pruning and a piracy attempt against a watermarked MiniEEG.
Each attack works on a copy and returns a step-by-step report.
"""

from eegmark import SyntheticSpec, embed_from_scratch, generate_keypair, generate_synthetic, make_record, split
from eegmark.attacks import AttackConfig, WatermarkProbe, fine_tune_attack, piracy_attack, prune_attack
from eegmark.data import carve
from eegmark.identity import build_verifier_string
from eegmark.nn import TrainConfig, mini_eeg

ds = generate_synthetic(SyntheticSpec(n_samples=1200, seed=2))
train_set, val_set, test_set = split(ds, (0.7, 0.15, 0.15), seed=0)
train_set, attacker = carve(train_set, 0.2, seed=1)  # attacker holds 20% as much data, disjoint

kp = generate_keypair(bytes(32))
rec = make_record(kp, "owner", 1735689600, (8, 64), 2)
wm, _ = embed_from_scratch(mini_eeg(), (train_set, val_set, test_set), [rec],
                           TrainConfig(epochs=40, min_epochs=20, clip_norm=1.0), seed=2)
probe = WatermarkProbe(rec.filter, test_set)
print("before any attack (eeg, true, null):", probe.measure(wm))

for mode in ("FTLL", "FTAL", "RTAL"):
    rep = fine_tune_attack(wm, attacker, mode, probe, AttackConfig("FINE_TUNE", mode, epochs=10))
    print(f"{mode}: eeg {rep.final.eeg_acc:.2f} true {rep.final.true_acc:.2f}")

# pruning is swept without retraining; ratio 0 is the untouched model
rep = prune_attack(wm, "L1_ASCENDING", [0.0, 0.1, 0.3, 0.5, 0.7], probe)
print(rep.to_csv())

# the pirate embeds a second watermark from their own signature
pirate = generate_keypair(b"\x42" * 32)
out = piracy_attack(wm, pirate, build_verifier_string("pirate", 1), attacker, probe, kp.public_key,
                    rec.signature, rec.verifier, AttackConfig("PIRACY", epochs=10))
print(out.report.summary_text())
