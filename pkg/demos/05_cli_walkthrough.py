"""
The command-line workflow
=========================

The same steps as the library demos, driven through ``eegmark`` verbs in a
scratch directory.  Every verb honors --seed, --out-dir, --force and --quiet.
"""

import tempfile
from pathlib import Path

from eegmark.cli import main

work = Path(tempfile.mkdtemp(prefix="eegmark-demo-"))


def sh(*args):
    argv = [str(a) for a in args]
    code = main(argv)
    print(f"$ eegmark {' '.join(argv)}  -> exit {code}")
    return code


sh("gen-data", "--n-samples", 800, "--out-dir", work, "--quiet")
sh("keygen", "--seed", 7, "--out-dir", work, "--quiet")
sh("sign", "--key", work / "owner.key", "--owner-id", "lab", "--timestamp", 1700000000, "--out-dir", work, "--quiet")
sh("transform", "--sig", work / "owner.sig", "--out-dir", work)
sh("embed", "--data", work / "data.eegw", "--key", work / "owner.key", "--owner-id", "lab",
   "--timestamp", 1700000000, "--epochs", 30, "--out-dir", work, "--quiet")

# exit 0 means confirmed, 1 means rejected
sh("verify", "--model", work / "watermarked.ckpt", "--pub", work / "owner.pub", "--sig", work / "owner.sig",
   "--owner-id", "lab", "--timestamp", 1700000000, "--data", work / "data.eegw", "--out-dir", work)

sh("attack", "--model", work / "watermarked.ckpt", "--data", work / "data.eegw", "--sig", work / "owner.sig",
   "--kind", "prune", "--mode", "L1_ASCENDING", "--out-dir", work, "--quiet")
sh("report", work, "--out-dir", work, "--quiet")
print((work / "report.md").read_text()[:1500])
