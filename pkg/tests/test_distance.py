import io

import numpy as np
import pytest

from trajclust import (
    CondensedDistanceMatrix,
    SchemaError,
    ValidationError,
    condensed_matrix,
    jaccard,
    pair_index,
    read_matrix,
    timeline,
    write_matrix,
)
from trajclust.distance import pair_index_any


def test_pair_index_matches_enumeration_order():
    n = 7
    expected = 0
    for i in range(n):
        for j in range(i + 1, n):
            assert pair_index(n, i, j) == expected
            assert pair_index_any(n, j, i) == expected
            expected += 1
    assert expected == n * (n - 1) // 2


def test_pair_index_rejects_bad_pairs():
    with pytest.raises(ValidationError):
        pair_index(5, 3, 3)
    with pytest.raises(ValidationError):
        pair_index(5, 4, 2)


def test_matrix_validation():
    with pytest.raises(ValidationError):
        CondensedDistanceMatrix(n=1, values=np.array([]))
    with pytest.raises(ValidationError):
        CondensedDistanceMatrix(n=3, values=np.array([0.1, 0.2]))
    with pytest.raises(ValidationError):
        CondensedDistanceMatrix(n=2, values=np.array([1.5]))
    with pytest.raises(ValidationError):
        CondensedDistanceMatrix(n=2, values=np.array([np.nan]))


def test_pair_and_square_accessors():
    m = CondensedDistanceMatrix(n=3, values=np.array([0.1, 0.2, 0.3]))
    assert m.pair(0, 1) == 0.1
    assert m.pair(2, 0) == 0.2
    assert m.pair(1, 1) == 0.0
    sq = m.square()
    assert sq.shape == (3, 3)
    np.testing.assert_array_equal(sq, sq.T)
    np.testing.assert_array_equal(np.diag(sq), 0.0)
    assert sq[1, 2] == 0.3


def test_two_patients_single_entry(make_cohort):
    cohort = make_cohort([({"stroke": 10.0}, 20.0), ({"stroke": 15.0}, 20.0)])
    m = condensed_matrix(cohort)
    assert m.n == 2
    assert m.values.shape == (1,)
    assert m.values[0] == 0.5


def test_identical_patients_all_zero(make_cohort):
    cohort = make_cohort([({"stroke": 60.0}, 80.0)] * 3)
    m = condensed_matrix(cohort)
    np.testing.assert_array_equal(m.values, 0.0)


def test_single_patient_rejected(make_cohort):
    cohort = make_cohort([({"stroke": 60.0}, 80.0)])
    with pytest.raises(ValidationError):
        condensed_matrix(cohort)


def test_matrix_matches_pairwise_function(three_archetype_spec):
    from trajclust import generate

    cohort = generate(three_archetype_spec, 40, seed=1).cohort
    m = condensed_matrix(cohort)
    pos = 0
    for i in range(40):
        ti = timeline(cohort, i)
        for j in range(i + 1, 40):
            assert m.values[pos] == jaccard(ti, timeline(cohort, j))
            pos += 1


def test_worker_count_does_not_change_bytes(three_archetype_spec):
    from trajclust import generate

    cohort = generate(three_archetype_spec, 90, seed=2).cohort
    serial = condensed_matrix(cohort, workers=1)
    forked = condensed_matrix(cohort, workers=2)
    assert serial.values.tobytes() == forked.values.tobytes()
    assert serial.empty_union_pairs == forked.empty_union_pairs
    forked3 = condensed_matrix(cohort, workers=3)
    assert serial.values.tobytes() == forked3.values.tobytes()


def test_empty_union_pairs_diagnostic(make_cohort):
    # two late-onset short-horizon patients share no observed positive time
    cohort = make_cohort(
        [
            ({"stroke": 15.0}, 20.0),
            ({"stroke": 4.0}, 4.0),
            ({"stroke": 2.0}, 30.0),
        ]
    )
    m = condensed_matrix(cohort)
    assert m.empty_union_pairs == 1
    assert m.pair(0, 1) == 0.0


def test_cache_roundtrip(tmp_path, three_archetype_spec):
    from trajclust import generate

    cohort = generate(three_archetype_spec, 30, seed=3).cohort
    m = condensed_matrix(cohort)
    path = tmp_path / "m.tjd"
    write_matrix(m, path)
    again = read_matrix(path)
    assert again.n == m.n
    # stored as 32-bit floats: reading back gives the quantized values
    np.testing.assert_array_equal(
        again.values, m.values.astype(np.float32).astype(np.float64)
    )
    assert again.values.dtype == np.float64


def test_cache_header_checks(tmp_path):
    bad = tmp_path / "bad.tjd"
    bad.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(SchemaError):
        read_matrix(bad)
    m = CondensedDistanceMatrix(n=3, values=np.array([0.1, 0.2, 0.3]))
    path = tmp_path / "m.tjd"
    write_matrix(m, path)
    data = path.read_bytes()
    (tmp_path / "trunc.tjd").write_bytes(data[:-2])
    with pytest.raises(SchemaError):
        read_matrix(tmp_path / "trunc.tjd")


def test_pair_count_formula():
    n = 9847
    assert n * (n - 1) // 2 == 48_476_781
