# %% [markdown]
# # Driving a run from the command line
#
# The same calls as `phn train ...` and `phn eval-front ...`, made in-process
# on a shortened copy of the toy config.

# %%
import tempfile
from pathlib import Path

from phn.cli import main

work = Path(tempfile.mkdtemp())
(work / "toy.toml").write_text("""
[problem]
name = "toy"
d = 10

[model]
hidden = [16, 16]

[train]
lr = 1e-3
steps = 300
batch_size = "full"

[eval]
rays = 5
ref_point = [2.0, 2.0]
interval = 100
""")
print("train exit", main(["train", "--config", str(work / "toy.toml"), "--out-dir", str(work / "run")]))
print("eval exit", main(["eval-front", "--checkpoint", str(work / "run" / "checkpoint.phn"),
                         "--rays", "0.5,0.5;0.9,0.1", "--ref-point", "2,2", "--out-dir", str(work / "front")]))
print((work / "front" / "front.csv").read_text())
