from pathlib import Path

import pytest

from data import emit_dataset, format_dataset, ingest_dataset
from errors import DatasetError
from sampler import draw_fixed_n

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestIngest:
    def test_hand_sample(self):
        sample = ingest_dataset(CONFIGS / "hand_sample.csv")
        assert sample.n == 3
        assert sample.pairs == [(0.1, 0.5), (0.2, 0.3), (0.4, 0.9)]

    def test_metadata(self, tmp_path):
        sample = ingest_dataset(write(tmp_path, "# seed: 17\n# attempted: 4\nt,y\n0.0,0.5\n0.1,0.2\n"))
        assert sample.seed == 17
        assert sample.attempted == 4

    def test_strict_reports_lines(self, tmp_path):
        path = write(tmp_path, "t,y\n0.1,0.5\n0.6,0.3\n0.2,0.9\n0.8,0.1\n")
        with pytest.raises(DatasetError) as info:
            ingest_dataset(path)
        assert info.value.rows == [3, 5]

    def test_lenient_drops(self, tmp_path, caplog):
        path = write(tmp_path, "t,y\n0.1,0.5\n0.6,0.3\n0.2,0.9\n")
        sample = ingest_dataset(path, strict=False)
        assert sample.n == 2
        assert "dropping 1 rows" in caplog.text

    def test_lenient_everything_invalid(self, tmp_path):
        with pytest.raises(DatasetError):
            ingest_dataset(write(tmp_path, "t,y\n0.6,0.3\n"), strict=False)

    def test_malformed_row(self, tmp_path):
        path = write(tmp_path, "t,y\n0.1,0.5\n0.2,abc\n")
        with pytest.raises(DatasetError) as info:
            ingest_dataset(path, strict=False)
        assert info.value.rows == [3]

    def test_comment_lines_keep_numbering(self, tmp_path):
        path = write(tmp_path, "# seed: 1\nt,y\n\n0.1,0.5\nx,0.5\n")
        with pytest.raises(DatasetError) as info:
            ingest_dataset(path)
        assert info.value.rows == [5]

    def test_bad_header(self, tmp_path):
        with pytest.raises(DatasetError, match="header"):
            ingest_dataset(write(tmp_path, "y,t\n0.5,0.1\n"))

    def test_header_only(self, tmp_path):
        with pytest.raises(DatasetError, match="no rows"):
            ingest_dataset(write(tmp_path, "t,y\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DatasetError, match="empty"):
            ingest_dataset(write(tmp_path, ""))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            ingest_dataset(tmp_path / "absent.csv")

    def test_not_utf8(self, tmp_path):
        path = tmp_path / "latin.csv"
        path.write_bytes(b"t,y\n0.1,0.5\xe9\n")
        with pytest.raises(DatasetError, match="UTF-8"):
            ingest_dataset(path)

    def test_ties_warn(self, tmp_path, caplog):
        sample = ingest_dataset(write(tmp_path, "t,y\n0.1,0.5\n0.2,0.5\n"))
        assert sample.has_ties
        assert "tied" in caplog.text


class TestEmit:
    def test_round_trip_is_byte_identical(self, uniform_shifted, tmp_path):
        sample = draw_fixed_n(uniform_shifted, 50, seed=99)
        first = emit_dataset(sample, tmp_path / "a.csv")
        second = emit_dataset(ingest_dataset(first), tmp_path / "b.csv")
        assert first.read_bytes() == second.read_bytes()

    def test_format(self, hand_sample):
        assert format_dataset(hand_sample) == "t,y\n0.1,0.5\n0.2,0.3\n0.4,0.9\n"

    def test_creates_parent(self, hand_sample, tmp_path):
        path = emit_dataset(hand_sample, tmp_path / "deep" / "x.csv")
        assert path.exists()
