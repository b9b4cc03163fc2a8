"""Self-contained tests for convert_nasbench.py (stdlib only).

The fixtures are encoded here by hand (protobuf wire format and TFRecord
framing), so the tool's decoders are exercised against an independent writer.
"""

import json
import os
import struct
import sys
import tempfile
import unittest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import convert_nasbench as conv


def _varint(n):
    out = b""
    while True:
        low = n & 0x7F
        n >>= 7
        out += bytes([low | 0x80] if n else [low])
        if not n:
            return out


def _tag(field, wire):
    return _varint((field << 3) | wire)


def _double(field, value):
    return _tag(field, 1) + struct.pack("<d", value)


def _length_delimited(field, payload):
    return _tag(field, 2) + _varint(len(payload)) + payload


def evaluation_data(epoch, training_time, train_acc, valid_acc, test_acc):
    return (
        _double(1, epoch)
        + _double(2, training_time)
        + _double(3, train_acc)
        + _double(4, valid_acc)
        + _double(5, test_acc)
        + _length_delimited(6, b"/some/checkpoint")
    )


def model_metrics(evaluations, trainable_parameters=84000, total_time=12.5):
    msg = b"".join(_length_delimited(1, e) for e in evaluations)
    msg += _tag(2, 0) + _varint(trainable_parameters)
    msg += _double(3, total_time)
    return msg


def write_tfrecord(path, payloads):
    with open(path, "wb") as f:
        for data in payloads:
            f.write(struct.pack("<Q", len(data)))
            f.write(b"\x00\x00\x00\x00")  # length CRC, unchecked by the reader
            f.write(data)
            f.write(b"\x00\x00\x00\x00")  # data CRC, unchecked by the reader


def nb101_record(module_hash, epochs, adjacency, operations, metrics_blob):
    import base64

    row = [module_hash, epochs, adjacency, operations, base64.b64encode(metrics_blob).decode()]
    return json.dumps(row).encode()


class Nb101Test(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_tfrecord_conversion_groups_and_averages_trials(self):
        # Two trials of the same 3-vertex module at 108 epochs; the halfway
        # evaluation must be ignored in favor of the final one. A third row at
        # a different epoch budget is filtered out, and a second module checks
        # hash-sorted output order.
        adjacency = "011001000"  # edges (0,1), (0,2), (1,2)
        operations = "input,conv3x3-bn-relu,output"
        trial1 = model_metrics(
            [
                evaluation_data(54, 300.0, 0.80, 0.70, 0.69),
                evaluation_data(108, 600.0, 0.99, 0.92, 0.90),
            ]
        )
        trial2 = model_metrics(
            [
                evaluation_data(54, 310.0, 0.81, 0.71, 0.70),
                evaluation_data(108, 620.0, 0.99, 0.94, 0.92),
            ]
        )
        other = model_metrics([evaluation_data(108, 100.0, 0.9, 0.85, 0.84)])
        short_budget = model_metrics([evaluation_data(36, 50.0, 0.5, 0.4, 0.39)])
        path = self.path("fake.tfrecord")
        write_tfrecord(
            path,
            [
                nb101_record("bbb", 108, adjacency, operations, trial1),
                nb101_record("bbb", 108, adjacency, operations, trial2),
                nb101_record("aaa", 108, "01" + "00", "input,output", other),
                nb101_record("bbb", 36, adjacency, operations, short_budget),
            ],
        )

        rows = list(conv.nb101_rows(path, 108))
        self.assertEqual(len(rows), 2)
        self.assertEqual([r["module_hash"] for r in rows], ["aaa", "bbb"])

        merged = rows[1]
        self.assertEqual(merged["ops"], ["input", "conv3x3", "output"])
        self.assertEqual(merged["edges"], [[0, 1], [0, 2], [1, 2]])
        self.assertEqual(merged["trials"], 2)
        self.assertAlmostEqual(merged["validation_accuracy"], 0.93, places=12)
        self.assertAlmostEqual(merged["test_accuracy"], 0.91, places=12)
        self.assertAlmostEqual(merged["training_seconds"], 610.0, places=9)

        direct = rows[0]
        self.assertEqual(direct["ops"], ["input", "output"])
        self.assertEqual(direct["edges"], [[0, 1]])
        self.assertAlmostEqual(direct["validation_accuracy"], 0.85, places=12)

    def test_rejects_unknown_operations_and_bad_shapes(self):
        metrics = model_metrics([evaluation_data(108, 1.0, 0.5, 0.5, 0.5)])
        path = self.path("bad.tfrecord")
        write_tfrecord(path, [nb101_record("x", 108, "0100", "input,warp", metrics)])
        with self.assertRaises(ValueError):
            list(conv.nb101_rows(path, 108))

        write_tfrecord(path, [nb101_record("x", 108, "01100", "input,output", metrics)])
        with self.assertRaises(ValueError):
            list(conv.nb101_rows(path, 108))

        lower = "10" + "00"  # entry below the diagonal
        write_tfrecord(path, [nb101_record("x", 108, lower, "input,output", metrics)])
        with self.assertRaises(ValueError):
            list(conv.nb101_rows(path, 108))

        write_tfrecord(path, [nb101_record("x", 36, "01" + "00", "input,output", metrics)])
        with self.assertRaises(ValueError):
            list(conv.nb101_rows(path, 108))  # nothing at the requested budget

    def test_truncated_framing_is_detected(self):
        path = self.path("trunc.tfrecord")
        with open(path, "wb") as f:
            f.write(struct.pack("<Q", 100))
            f.write(b"\x00" * 4)
            f.write(b"short")
        with self.assertRaises(ValueError):
            list(conv.iter_tfrecords(path))


class Nb201Test(unittest.TestCase):
    def test_arch_string_maps_to_lexicographic_edge_order(self):
        arch = (
            "|nor_conv_3x3~0|+|none~0|skip_connect~1|+"
            "|nor_conv_1x1~0|avg_pool_3x3~1|none~2|"
        )
        self.assertEqual(
            conv.parse_arch_string(arch),
            ["conv3x3", "zero", "conv1x1", "skip", "avgpool3x3", "zero"],
        )

    def test_arch_string_errors(self):
        for bad in [
            "|none~0|",  # missing stages
            "|none~0|+|none~0|+|none~0|none~1|none~2|",  # short middle stage
            "|none~1|+|none~0|none~1|+|none~0|none~1|none~2|",  # wrong source index
            "|warp~0|+|none~0|none~1|+|none~0|none~1|none~2|",  # unknown op
        ]:
            with self.assertRaises(ValueError):
                conv.parse_arch_string(bad)

    def test_dump_conversion_end_to_end(self):
        with tempfile.TemporaryDirectory() as tmp:
            dump = os.path.join(tmp, "dump.jsonl")
            out = os.path.join(tmp, "out.jsonl")
            arch = "|skip_connect~0|+|none~0|none~1|+|none~0|none~1|nor_conv_3x3~2|"
            with open(dump, "w") as f:
                f.write(
                    json.dumps(
                        {
                            "arch": arch,
                            "validation_accuracy": 0.8123,
                            "test_accuracy": 0.8057,
                            "training_seconds": 4413.0,
                        }
                    )
                    + "\n"
                )
            self.assertEqual(conv.main(["nb201", dump, "-o", out]), 0)
            with open(out) as f:
                rows = [json.loads(line) for line in f]
            self.assertEqual(len(rows), 1)
            self.assertEqual(
                rows[0]["edge_ops"], ["skip", "zero", "zero", "zero", "zero", "conv3x3"]
            )
            self.assertEqual(rows[0]["arch"], arch)
            self.assertAlmostEqual(rows[0]["test_accuracy"], 0.8057, places=12)

    def test_dump_errors_carry_line_numbers(self):
        with tempfile.TemporaryDirectory() as tmp:
            dump = os.path.join(tmp, "dump.jsonl")
            with open(dump, "w") as f:
                f.write(json.dumps({"arch": "nope"}) + "\n")
            with self.assertRaises(ValueError) as ctx:
                list(conv.nb201_rows(dump))
            self.assertIn(":1:", str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
