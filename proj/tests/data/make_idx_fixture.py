"""Writes the 2-image IDX fixture used by test_data (2 images of 2x3 pixels)."""
import struct
from pathlib import Path

here = Path(__file__).parent
pixels = [[0, 255, 51, 102, 153, 204], [1, 2, 3, 4, 5, 6]]
labels = [3, 1]

with open(here / "tiny-images.idx3-ubyte", "wb") as f:
    f.write(struct.pack(">IIII", 0x00000803, 2, 2, 3))
    for img in pixels:
        f.write(bytes(img))

with open(here / "tiny-labels.idx1-ubyte", "wb") as f:
    f.write(struct.pack(">II", 0x00000801, 2))
    f.write(bytes(labels))
