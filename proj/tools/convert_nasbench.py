#!/usr/bin/env python3
"""Convert public tabular NAS benchmark releases into the import format.

Output: one JSON object per line, directly consumable by `latentnas import`
(see the top-level README for the row schema).

NAS-Bench-101
    python3 tools/convert_nasbench.py nb101 nasbench_only108.tfrecord -o nb101.jsonl

    Reads the official TFRecord release with no TensorFlow dependency: the
    record framing is parsed directly (framing checksums are not verified) and
    the metrics payload is decoded with a minimal protobuf wire reader. Each
    module becomes one row whose validation/test accuracy and training time
    are averaged over the repeated trials at the chosen epoch budget
    (--epochs, default 108, the budget the full and only108 files share).

NAS-Bench-201
    python3 tools/convert_nasbench.py nb201 nb201_dump.jsonl -o nb201.jsonl

    The official release is a PyTorch pickle, so dump it first with the
    nas_201_api package (any recent torch works), one JSON line per index:

        from nas_201_api import NASBench201API as API
        import json
        api = API('NAS-Bench-201-v1_1-096897.pth', verbose=False)
        with open('nb201_dump.jsonl', 'w') as out:
            for i in range(len(api)):
                info = api.query_meta_info_by_index(i, hp='200')
                val = info.get_metrics('cifar10-valid', 'x-valid')
                test = info.get_metrics('cifar10-valid', 'ori-test')
                row = {'arch': api.arch(i),
                       'validation_accuracy': val['accuracy'] / 100.0,
                       'test_accuracy': test['accuracy'] / 100.0,
                       'training_seconds': info.get_compute_costs('cifar10-valid')['T-train@total']}
                out.write(json.dumps(row) + '\n')

    This tool then maps each arch string onto the edge-op row format.
"""

import argparse
import base64
import json
import statistics
import struct
import sys

# ---- NAS-Bench-101 -----------------------------------------------------------

NB101_OPS = {
    "input": "input",
    "conv1x1-bn-relu": "conv1x1",
    "conv3x3-bn-relu": "conv3x3",
    "maxpool3x3": "maxpool3x3",
    "output": "output",
}


def iter_tfrecords(path):
    """Yields raw record payloads from a TFRecord file (checksums skipped)."""
    with open(path, "rb") as f:
        while True:
            header = f.read(8)
            if not header:
                return
            if len(header) != 8:
                raise ValueError("truncated record length at byte %d" % f.tell())
            (length,) = struct.unpack("<Q", header)
            f.read(4)  # masked CRC of the length
            data = f.read(length)
            if len(data) != length:
                raise ValueError("truncated record at byte %d" % f.tell())
            f.read(4)  # masked CRC of the data
            yield data


def parse_proto_fields(buf):
    """Decodes one protobuf message into {field_number: [raw values]}.

    Varints come back as ints, fixed64 as 8 raw bytes, fixed32 as 4 raw
    bytes, and length-delimited fields as bytes. Nested messages stay
    undecoded for the caller to recurse into.
    """
    fields = {}
    pos = 0

    def varint():
        nonlocal pos
        result = 0
        shift = 0
        while True:
            byte = buf[pos]
            pos += 1
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return result
            shift += 7

    while pos < len(buf):
        key = varint()
        number, wire = key >> 3, key & 7
        if wire == 0:
            value = varint()
        elif wire == 1:
            value = buf[pos : pos + 8]
            pos += 8
        elif wire == 2:
            size = varint()
            value = buf[pos : pos + size]
            pos += size
        elif wire == 5:
            value = buf[pos : pos + 4]
            pos += 4
        else:
            raise ValueError("unsupported protobuf wire type %d" % wire)
        fields.setdefault(number, []).append(value)
    return fields


def as_double(raw):
    return struct.unpack("<d", raw)[0]


def decode_metrics(raw_metrics):
    """base64 metrics blob -> list of final-evaluation dicts, one per entry."""
    message = parse_proto_fields(base64.b64decode(raw_metrics))
    evaluations = []
    for entry in message.get(1, []):
        ev = parse_proto_fields(entry)
        evaluations.append(
            {
                "epoch": as_double(ev[1][0]) if 1 in ev else 0.0,
                "training_time": as_double(ev[2][0]) if 2 in ev else 0.0,
                "validation_accuracy": as_double(ev[4][0]) if 4 in ev else 0.0,
                "test_accuracy": as_double(ev[5][0]) if 5 in ev else 0.0,
            }
        )
    return evaluations


def nb101_rows(path, epochs):
    """Groups trials by module and averages the final evaluations."""
    modules = {}
    for payload in iter_tfrecords(path):
        module_hash, row_epochs, raw_adjacency, raw_operations, raw_metrics = json.loads(
            payload.decode("utf-8")
        )
        if int(row_epochs) != epochs:
            continue
        evaluations = decode_metrics(raw_metrics)
        if not evaluations:
            raise ValueError("module %s carries no evaluations" % module_hash)
        final = evaluations[-1]  # entries are ordered; the last one is the final epoch
        entry = modules.setdefault(
            module_hash,
            {"adjacency": raw_adjacency, "operations": raw_operations, "trials": []},
        )
        entry["trials"].append(final)

    if not modules:
        raise ValueError("no records at epoch budget %d in %s" % (epochs, path))

    for module_hash in sorted(modules):
        entry = modules[module_hash]
        bits = entry["adjacency"]
        n = int(len(bits) ** 0.5)
        if n * n != len(bits):
            raise ValueError("module %s: adjacency is not square" % module_hash)
        edges = [
            [i, j]
            for i in range(n)
            for j in range(i + 1, n)
            if bits[i * n + j] == "1"
        ]
        for i in range(n):
            for j in range(i + 1):
                if bits[i * n + j] == "1":
                    raise ValueError("module %s: adjacency is not upper-triangular" % module_hash)
        try:
            ops = [NB101_OPS[op] for op in entry["operations"].split(",")]
        except KeyError as err:
            raise ValueError("module %s: unknown operation %s" % (module_hash, err))
        trials = entry["trials"]
        yield {
            "ops": ops,
            "edges": edges,
            "validation_accuracy": statistics.fmean(t["validation_accuracy"] for t in trials),
            "test_accuracy": statistics.fmean(t["test_accuracy"] for t in trials),
            "training_seconds": statistics.fmean(t["training_time"] for t in trials),
            "module_hash": module_hash,
            "trials": len(trials),
        }


# ---- NAS-Bench-201 -----------------------------------------------------------

NB201_OPS = {
    "none": "zero",
    "skip_connect": "skip",
    "nor_conv_1x1": "conv1x1",
    "nor_conv_3x3": "conv3x3",
    "avg_pool_3x3": "avgpool3x3",
}

# Arch strings list edges stage by stage: (0,1) | (0,2),(1,2) | (0,3),(1,3),(2,3).
# The import format wants lexicographic edge order instead.
NB201_STAGE_TO_LEX = [0, 1, 3, 2, 4, 5]


def parse_arch_string(arch):
    """'|op~0|+|op~0|op~1|+|op~0|op~1|op~2|' -> 6 vocabulary names, lexicographic."""
    tokens = []
    for stage_index, stage in enumerate(arch.split("+")):
        parts = [p for p in stage.split("|") if p]
        if len(parts) != stage_index + 1:
            raise ValueError("malformed arch string %r" % arch)
        for source_index, part in enumerate(parts):
            op, _, source = part.rpartition("~")
            if not op or int(source) != source_index:
                raise ValueError("malformed arch string %r" % arch)
            if op not in NB201_OPS:
                raise ValueError("unknown operation %r in %r" % (op, arch))
            tokens.append(NB201_OPS[op])
    if len(tokens) != 6:
        raise ValueError("arch string %r does not describe a 4-node cell" % arch)
    ordered = [None] * 6
    for stage_pos, lex_pos in enumerate(NB201_STAGE_TO_LEX):
        ordered[lex_pos] = tokens[stage_pos]
    return ordered


def nb201_rows(path):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                arch = row["arch"]
                out = {
                    "edge_ops": parse_arch_string(arch),
                    "validation_accuracy": float(row["validation_accuracy"]),
                    "test_accuracy": float(row["test_accuracy"]),
                    "training_seconds": float(row["training_seconds"]),
                    "arch": arch,
                }
            except (KeyError, ValueError) as err:
                raise ValueError("%s:%d: %s" % (path, lineno, err))
            yield out


# ---- CLI -----------------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p101 = sub.add_parser("nb101", help="convert a NAS-Bench-101 TFRecord file")
    p101.add_argument("input", help="nasbench_only108.tfrecord or nasbench_full.tfrecord")
    p101.add_argument("-o", "--output", required=True, help="interchange JSONL to write")
    p101.add_argument(
        "--epochs", type=int, default=108, help="epoch budget to keep (default 108)"
    )

    p201 = sub.add_parser("nb201", help="convert a NAS-Bench-201 metrics dump")
    p201.add_argument("input", help="JSONL dump produced with nas_201_api (see --help)")
    p201.add_argument("-o", "--output", required=True, help="interchange JSONL to write")

    args = parser.parse_args(argv)
    if args.command == "nb101":
        rows = nb101_rows(args.input, args.epochs)
    else:
        rows = nb201_rows(args.input)

    count = 0
    with open(args.output, "w", encoding="utf-8") as out:
        for row in rows:
            out.write(json.dumps(row) + "\n")
            count += 1
    print("wrote %d rows to %s" % (count, args.output))
    return 0


if __name__ == "__main__":
    sys.exit(main())
