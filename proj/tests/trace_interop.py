"""Cross-language check of the trace bundle format.

Writes a bundle with numpy, analyzes it with the CLI and compares the
per-layer metrics; then reads a CLI-exported bundle back with numpy.

usage: trace_interop.py PRUNELENS_CLI SCRATCH_DIR
"""

import csv
import json
import pathlib
import shutil
import subprocess
import sys
import zlib

import numpy as np


def crc(data: bytes) -> str:
    return format(zlib.crc32(data) & 0xFFFFFFFF, "08x")


def write_bundle(root, layers, n_layers, states, scores, labels, pooled=None):
    root.mkdir(parents=True)
    arrays = []

    def put(name, file, dtype, arr):
        data = np.ascontiguousarray(arr, dtype="<f4" if dtype == "float32" else "<u4").tobytes()
        (root / file).write_bytes(data)
        arrays.append({"name": name, "file": file, "dtype": dtype, "shape": list(arr.shape),
                       "bytes": len(data), "crc32": crc(data)})

    for k in range(len(layers)):
        put(f"decision.{k}", f"decision_{k:03d}.f32", "float32", states[k])
        if pooled is not None:
            put(f"pooled.{k}", f"pooled_{k:03d}.f32", "float32", pooled[k])
        put(f"scores.{k}", f"scores_{k:03d}.f32", "float32", scores[k])
    put("labels", "labels.u32", "uint32", labels)
    n, m = scores[0].shape
    manifest = {
        "format": "trace-bundle/1", "model_name": "numpy", "n_layers": n_layers, "layers": layers,
        "d_model": states[0].shape[1], "M": m, "N": n,
        "signals": ["decision"] + (["pooled"] if pooled is not None else []),
        "norm": "rms", "scoring_mode": "label-token", "endianness": "little",
        "sample_ids": [f"np-{i}" for i in range(n)], "arrays": arrays,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))


def metrics(scores, labels, alpha=1e-6):
    n, m = scores.shape
    z = scores.astype(np.float64)
    correct = z[np.arange(n), labels]
    others = z.copy()
    others[np.arange(n), labels] = -np.inf
    dm = float(np.mean(correct - others.max(axis=1)))
    top = z.argmax(axis=1)
    of = np.bincount(top, minlength=m) / n
    q = np.bincount(labels, minlength=m) / n
    p_s, q_s = (of + alpha) / (of + alpha).sum(), (q + alpha) / (q + alpha).sum()
    kl = float(np.sum(p_s * np.log(p_s / q_s)))
    acc = float(np.mean(top == labels))
    return dm, of, kl, acc


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    cli, scratch = sys.argv[1], pathlib.Path(sys.argv[2])
    shutil.rmtree(scratch, ignore_errors=True)
    rng = np.random.default_rng(11)
    failures = []

    layers, n, m, d = [0, 2, 3, 5], 16, 4, 8
    labels = rng.integers(0, m, size=n).astype(np.uint32)
    states = [rng.standard_normal((n, d)).astype(np.float32) for _ in layers]
    scores = [rng.standard_normal((n, m)).astype(np.float32) for _ in layers]
    for k, s in enumerate(scores):  # later layers favour the correct option
        s[np.arange(n), labels] += np.float32(1.5 * k)
    bundle = scratch / "np-bundle"
    write_bundle(bundle, layers, 6, states, scores, labels)

    out = scratch / "analyze"
    subprocess.run([cli, "analyze", "--trace", str(bundle), "--out", str(out)], check=True)
    with open(out / "layers.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    if len(rows) != len(layers):
        failures.append(f"expected {len(layers)} rows, got {len(rows)}")
    for k, row in enumerate(rows):
        dm, of, kl, acc = metrics(scores[k], labels.astype(np.int64))
        if int(row["dense_layer"]) != layers[k]:
            failures.append(f"row {k}: dense layer {row['dense_layer']}")
        if not close(float(row["dm"]), dm, 1e-9):
            failures.append(f"row {k}: dm {row['dm']} vs {dm}")
        for j in range(m):
            if not close(float(row[f"of_{j}"]), of[j], 1e-12):
                failures.append(f"row {k}: of_{j} {row[f'of_{j}']} vs {of[j]}")
        if not close(float(row["kl"]), kl, 1e-9):
            failures.append(f"row {k}: kl {row['kl']} vs {kl}")
        if not close(float(row["acc"]), acc, 1e-12):
            failures.append(f"row {k}: acc {row['acc']} vs {acc}")

    # A corrupted array must be rejected with exit status 1.
    data = bytearray((bundle / "scores_001.f32").read_bytes())
    data[5] ^= 0x40
    (bundle / "scores_001.f32").write_bytes(bytes(data))
    res = subprocess.run([cli, "analyze", "--trace", str(bundle), "--out", str(scratch / "bad")],
                         capture_output=True, text=True)
    if res.returncode != 1 or "checksum" not in res.stderr:
        failures.append(f"corrupt bundle: exit {res.returncode}, stderr {res.stderr.strip()!r}")

    # The reverse direction: numpy reads a CLI-exported bundle.
    exported = scratch / "export"
    subprocess.run([cli, "analyze", "--staged", "3", "--samples", "12", "--export-trace", "--out", str(exported)],
                   check=True)
    manifest = json.loads((exported / "trace" / "manifest.json").read_text())
    arrays = {a["name"]: a for a in manifest["arrays"]}
    lab_raw = (exported / "trace" / "labels.u32").read_bytes()
    if crc(lab_raw) != arrays["labels"]["crc32"]:
        failures.append("exported labels checksum")
    lab = np.frombuffer(lab_raw, dtype="<u4").astype(np.int64)
    with open(exported / "layers.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    for k in range(len(manifest["layers"])):
        a = arrays[f"scores.{k}"]
        raw = (exported / "trace" / a["file"]).read_bytes()
        if crc(raw) != a["crc32"] or len(raw) != a["bytes"]:
            failures.append(f"exported {a['file']} checksum or size")
        s = np.frombuffer(raw, dtype="<f4").reshape(a["shape"])
        dm = metrics(s, lab)[0]
        if not close(float(rows[k]["dm"]), dm, 1e-6):
            failures.append(f"exported layer {k}: dm {rows[k]['dm']} vs float32 {dm}")

    for f in failures:
        print("FAIL", f)
    print("trace interop:", "ok" if not failures else f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
