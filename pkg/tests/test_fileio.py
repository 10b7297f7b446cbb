import numpy as np
import pytest

from mnarec.core import ObservationSample
from mnarec.exceptions import FormatError, VersionMismatchError
from mnarec.factorization import FactorModel
from mnarec.fileio import (
    IdMapping,
    ingest_triplets,
    joint_mapping,
    load_model,
    read_config,
    read_feature_file,
    read_mapping,
    read_matrix,
    read_observations,
    save_model,
    write_csv,
    write_mapping,
    write_matrix,
    write_observations,
)


def write(path, text):
    path.write_text(text)
    return path


class TestIngest:
    def test_ml100k_line(self, tmp_path):
        obs, mapping = ingest_triplets(write(tmp_path / "u.data", "1\t32\t4\t888550871\n"))
        assert obs.entries() == [(0, 0, 4.0)]
        assert mapping.users == ("1",) and mapping.items == ("32",)

    def test_csv(self, tmp_path):
        obs, mapping = ingest_triplets(write(tmp_path / "r.csv", "2,5,3\n"), "csv")
        assert mapping.users == ("2",) and mapping.items == ("5",) and obs.ratings[0] == 3

    def test_numeric_id_order(self, tmp_path):
        obs, mapping = ingest_triplets(write(tmp_path / "u.data", "10\t2\t5\n9\t10\t1\n"))
        assert mapping.users == ("9", "10") and mapping.items == ("2", "10")
        assert obs.entries() == [(1, 0, 5.0), (0, 1, 1.0)]

    def test_empty_file(self, tmp_path):
        with pytest.raises(FormatError):
            ingest_triplets(write(tmp_path / "e.tsv", ""))

    def test_malformed_line_number(self, tmp_path):
        with pytest.raises(FormatError) as info:
            ingest_triplets(write(tmp_path / "m.tsv", "1\t2\t3\n1\t3\n"))
        assert info.value.line == 2 and ":2:" in str(info.value)

    def test_bad_rating(self, tmp_path):
        with pytest.raises(FormatError, match="not a number"):
            ingest_triplets(write(tmp_path / "m.tsv", "1\t2\tfive\n"))

    def test_duplicate_pair(self, tmp_path):
        with pytest.raises(FormatError, match="duplicate") as info:
            ingest_triplets(write(tmp_path / "d.tsv", "1\t2\t3\n4\t2\t1\n1\t2\t5\n"))
        assert info.value.line == 3

    def test_mapping_shared_and_unknown(self, tmp_path):
        train = write(tmp_path / "a.tsv", "1\t2\t3\n")
        test = write(tmp_path / "b.tsv", "3\t4\t5\n")
        mapping = joint_mapping([train, test])
        assert mapping.shape == (2, 2)
        obs, _ = ingest_triplets(test, mapping=mapping)
        assert obs.entries() == [(1, 1, 5.0)]
        with pytest.raises(FormatError, match="unknown"):
            ingest_triplets(test, mapping=IdMapping(("1",), ("2",)))


class TestInternalFiles:
    def test_observation_round_trip(self, tmp_path):
        obs = ObservationSample((3, 4), [0, 2, 1], [3, 0, 1], [5.0, 1.0, 2.5])
        write_observations(tmp_path / "o", obs)
        back = read_observations(tmp_path / "o")
        assert back.shape == obs.shape and back.entries() == obs.entries()

    def test_matrix_round_trip_bitwise(self, tmp_path, rng):
        m = rng.random((3, 5))
        write_matrix(tmp_path / "m", m)
        np.testing.assert_array_equal(read_matrix(tmp_path / "m"), m)

    def test_kind_mismatch(self, tmp_path):
        write_observations(tmp_path / "o", ObservationSample((2, 2), [0], [0], [1.0]))
        with pytest.raises(FormatError):
            read_matrix(tmp_path / "o")

    def test_matrix_reads_as_full_observation(self, tmp_path):
        write_matrix(tmp_path / "m", np.arange(4.0).reshape(2, 2))
        assert len(read_observations(tmp_path / "m")) == 4

    def test_mapping_round_trip(self, tmp_path):
        mapping = IdMapping(("u1", "u2"), ("i9",))
        write_mapping(tmp_path / "map", mapping)
        assert read_mapping(tmp_path / "map") == mapping


class TestModelFiles:
    def model(self, rng):
        return FactorModel(rng.normal(size=(3, 2)), rng.normal(size=(4, 2)), rng.normal(size=3),
                           rng.normal(size=4), float(rng.normal()))

    def test_round_trip_bitwise(self, tmp_path, rng):
        m = self.model(rng)
        save_model(tmp_path / "m", m)
        back = load_model(tmp_path / "m")
        np.testing.assert_array_equal(back.predict().values, m.predict().values)
        np.testing.assert_array_equal(back.to_vector(), m.to_vector())

    def test_header_layout(self, tmp_path, rng):
        save_model(tmp_path / "m", self.model(rng))
        lines = (tmp_path / "m").read_text().splitlines()
        assert lines[0] == "pmfmodel v1 3 4 2"
        assert len(lines) == 4 + 2 * 2
        assert len(lines[4].split()) == 3 and len(lines[6].split()) == 4

    def test_version_mismatch(self, tmp_path, rng):
        save_model(tmp_path / "m", self.model(rng))
        text = (tmp_path / "m").read_text().replace("v1", "v2", 1)
        with pytest.raises(VersionMismatchError):
            load_model(write(tmp_path / "m2", text))

    def test_truncated(self, tmp_path, rng):
        save_model(tmp_path / "m", self.model(rng))
        lines = (tmp_path / "m").read_text().splitlines()
        with pytest.raises(FormatError, match="truncated"):
            load_model(write(tmp_path / "t", "\n".join(lines[:-1]) + "\n"))

    def test_zero_rank(self, tmp_path):
        with pytest.raises(FormatError, match="rank"):
            load_model(write(tmp_path / "z", "pmfmodel v1 1 1 0\n3\n0\n0\n"))


def test_config(tmp_path):
    cfg = read_config(write(tmp_path / "c", "# comment\nmax-iterations = 20\nlam=0.5\n"))
    assert cfg == {"max_iterations": "20", "lam": "0.5"}
    with pytest.raises(FormatError):
        read_config(write(tmp_path / "bad", "lam 0.5\n"))


def test_feature_file(tmp_path):
    mapping = IdMapping(("1", "2"), ("a",))
    feats = read_feature_file(write(tmp_path / "f", "1 a 0.5 1\n2 a 2 3\n"), mapping)
    assert feats.shape == (2, 1, 2) and feats[1, 0, 1] == 3
    with pytest.raises(FormatError, match="cover"):
        read_feature_file(write(tmp_path / "g", "1 a 0.5 1\n"), mapping)


def test_csv_schema(tmp_path):
    write_csv(tmp_path / "r.csv", ("a", "b"), [{"a": 1, "b": 0.5}, {"a": 2}])
    assert (tmp_path / "r.csv").read_text() == "a,b\n1,0.5\n2,\n"
