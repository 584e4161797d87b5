import pytest
from pydantic import ValidationError

from hlikelihood.exceptions import ConfigError
from hlikelihood.ingest import file_digest, new_stats, parse_line, read_observations
from hlikelihood.items import ObservedData


def test_read_observations_skips_comments_and_blanks(data_file):
    stats = new_stats()
    data = read_observations(data_file, stats)
    assert data.observations == [1.5, 0.5, 2.0, 1.0, 3.0]
    assert data.n == 5
    assert data.mean == pytest.approx(1.6)
    assert stats == {"lines_read": 7, "comments_skipped": 1, "blank_skipped": 1, "observations": 5}


@pytest.mark.parametrize('line, expected', [
    ("2.5\n", 2.5),
    ("  1e-3  # small\n", 1e-3),
    ("# only a comment\n", None),
    ("\n", None),
])
def test_parse_line(line, expected):
    assert parse_line(line) == expected


@pytest.mark.parametrize('content', ["1.0\nabc\n", "1.0\ninf\n", "# nothing\n\n", "1.0 2.0\n"])
def test_bad_files(tmp_path, content):
    path = tmp_path / "bad.txt"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        read_observations(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_observations(tmp_path / "missing.txt")


def test_file_digest(data_file):
    digest = file_digest(data_file)
    assert digest.startswith("sha256:")
    assert len(digest) == len("sha256:") + 64
    assert digest == file_digest(data_file)


@pytest.mark.parametrize('field, value', [("n", 4), ("total", 7.0), ("mean", 2.0)])
def test_cached_summaries_must_match(field, value):
    with pytest.raises(ValidationError):
        ObservedData(observations=[1.5, 0.5, 2.0, 1.0, 3.0], **{field: value})
