"""Convert the 5000-sample MNIST extract bundled with mlxtend into IDX files.

Usage: python3 scripts/export_mnist5k.py path/to/mlxtend-*.whl data/mnist-5k
"""
import gzip
import struct
import sys
import zipfile


def main(wheel, out_dir):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = gzip.decompress(raw).decode().strip().split("\n")
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        values = [int(float(v)) for v in row.split(",")]
        pixels.extend(values[:784])
        labels.append(values[784])
    n = len(rows)
    images = struct.pack(">IIII", 0x00000803, n, 28, 28) + bytes(pixels)
    targets = struct.pack(">II", 0x00000801, n) + bytes(labels)
    # mtime=0 keeps the archives byte-stable across exports
    with open(f"{out_dir}/images-idx3-ubyte.gz", "wb") as f:
        f.write(gzip.compress(images, mtime=0))
    with open(f"{out_dir}/labels-idx1-ubyte.gz", "wb") as f:
        f.write(gzip.compress(targets, mtime=0))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
