"""Tests for the training ledger."""

from mfgan.ledger import format_record, log_record, parse_record, read_ledger, truncate_after


class TestFormat:
    def test_fixed_precision_and_order(self):
        line = format_record(epoch=3, phase="G", objective=-1.5, reward=0.25, note=None)
        assert line == "epoch=3 phase=G objective=-1.500000 reward=0.250000"

    def test_parse(self):
        record = parse_record("epoch=3 phase=D loss_category=1.301250 junk")
        assert record == {"epoch": 3, "phase": "D", "loss_category": 1.30125}

    def test_spaces_in_values(self):
        assert format_record(phase="EVAL", user="a b") == "phase=EVAL user=a_b"


class TestLedgerFile:
    def test_append_and_read(self, tmp_dir):
        path = tmp_dir / "run" / "train.log"
        log_record(path, epoch=1, phase="MLE", loss=2.0)
        log_record(path, epoch=2, phase="G", objective=0.5)
        log_record(path, epoch=3, phase="MLE", loss=1.0)
        assert len(read_ledger(path)) == 3
        assert [r["epoch"] for r in read_ledger(path, phase="MLE")] == [1, 3]

    def test_disabled(self, tmp_dir):
        log_record(None, epoch=1, phase="MLE")
        assert list(tmp_dir.iterdir()) == []

    def test_missing_file_reads_empty(self, tmp_dir):
        assert read_ledger(tmp_dir / "absent.log") == []

    def test_write_failure_is_swallowed(self, tmp_dir):
        blocker = tmp_dir / "file"
        blocker.write_text("x", encoding="utf-8")
        log_record(blocker / "train.log", epoch=1, phase="MLE")

    def test_truncate_after(self, tmp_dir):
        path = tmp_dir / "train.log"
        for epoch in range(1, 6):
            log_record(path, epoch=epoch, phase="MLE", loss=1.0 / epoch)
        truncate_after(path, 3)
        assert [r["epoch"] for r in read_ledger(path)] == [1, 2, 3]
        truncate_after(tmp_dir / "absent.log", 1)
