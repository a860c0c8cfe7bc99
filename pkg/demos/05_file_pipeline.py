"""
The file pipeline
=================

The same steps run from files: a synthetic scene is written to disk,
tracked, scored, and turned into pseudo-labels. Each call below is what
the ``softtrack`` command runs with the same arguments.
"""

# %%
import tempfile
from pathlib import Path

from softtrack.cli import main

work = Path(tempfile.mkdtemp())
scene = work / "scene"
main(["synth", "--out-dir", str(scene), "--seed", "4", "--frames", "30",
      "--noise", "0.05", "--no-overlap", "--pair", "0", "10"])
print(sorted(p.name for p in scene.iterdir()))
print((scene / "detections.txt").read_text().splitlines()[:3])

# %%
# Track with the exact matcher chosen in a config file, then score.
cfg = work / "run.cfg"
cfg.write_text("matcher=hungarian\nmax_age=5\n")
main(["--config", str(cfg), "track", "--detections", str(scene / "detections.txt"),
      "--embeddings", str(scene / "embeddings.bin"), "--out", str(work / "tracks.txt")])
main(["eval", "--pred", str(work / "tracks.txt"), "--gt", str(scene / "gt.txt")])

# %%
# Pseudo-labels between frames 0 and 10, with discard counts in a sidecar.
main(["pseudolabel", "--ref", str(scene / "ref.txt"), "--tgt", str(scene / "tgt.txt"),
      "--motion", str(scene / "motion.grid"), "--out", str(work / "labels.txt")])
print((work / "labels.txt").read_text())
print((work / "labels.txt.report").read_text())

# %%
# Malformed input is reported with its line number and a nonzero exit code.
bad = work / "bad.txt"
bad.write_text("0,1,1,20,20,0.95,0\n0,1,1,twenty,20,0.95,0\n")
code = main(["track", "--detections", str(bad), "--embeddings", str(scene / "embeddings.bin"),
             "--out", str(work / "x.txt")])
print("exit code", code)
