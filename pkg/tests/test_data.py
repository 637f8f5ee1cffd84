import numpy as np
import pytest

from sace.data import Dataset, ObservationRecord, concat, load_csv, validate
from sace.errors import DataError


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_death_row_has_undefined_outcome(tmp_path):
    ds = load_csv(_write(tmp_path, "z,s,y,v,x1\n1,0,,1,0.5\n"), "continuous")
    rec = ds.records[0]
    assert rec == ObservationRecord(1, 0, None, (0.5,), 1)


def test_control_survivor_may_lack_v(tmp_path):
    ds = load_csv(_write(tmp_path, "z,s,y,v,x1\n0,1,3.2,,0.1\n"), "continuous")
    rec = ds.records[0]
    assert rec.y == 3.2 and rec.v is None and rec.z == 0


@pytest.mark.parametrize("row", ["1,1,,1,0.5", "1,0,2.0,1,0.5", "1,1,1.0,,0.5", "1,1,1.0,2,0.5", "1,1,abc,1,0.5",
                                 "1,1,1.0,1"])
def test_bad_rows_rejected(tmp_path, row):
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, "z,s,y,v,x1\n" + row + "\n"), "continuous")


def test_binary_outcome_must_be_01(tmp_path):
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, "z,s,y\n1,1,0.5\n"), "binary")


def test_missing_file_and_header(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", "continuous")
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, "z,s,x1\n1,1,0\n"), "continuous")


def test_comment_lines_skipped(tmp_path):
    ds = load_csv(_write(tmp_path, "# produced elsewhere\nz,s,y,age\n1,1,2.5,30\n0,0,,40\n"), "continuous")
    assert ds.n == 2 and ds.covariate_names == ("age",) and not ds.has_v


def test_round_trip(tmp_path, setting3_data):
    p = tmp_path / "rt.csv"
    setting3_data.to_csv(p)
    back = load_csv(p, "continuous")
    for col in ("z", "s", "y", "x", "v"):
        np.testing.assert_array_equal(getattr(back, col), getattr(setting3_data, col))
    q = tmp_path / "rt2.csv"
    back.to_csv(q)
    assert p.read_bytes() == q.read_bytes()


def test_never_imputes(tmp_path):
    ds = load_csv(_write(tmp_path, "z,s,y\n1,0,\n0,0,\n1,1,1\n"), "binary")
    assert np.array_equal(np.isnan(ds.y), ds.s == 0)


def test_dataset_is_immutable(setting3_data):
    with pytest.raises(AttributeError):
        setting3_data.n_extra = 1
    with pytest.raises(ValueError):
        setting3_data.y[0] = 1.0


def test_v_flags():
    ds = Dataset([1, 0, 0], [1, 1, 0], [1.0, 2.0, np.nan], None, [1, np.nan, 0])
    assert ds.v_available_for_treated and not ds.v_available_for_controls and ds.has_v
    assert ds.without_v(1).v_available_for_treated is False
    assert Dataset([1, 0], [0, 0], [np.nan, np.nan], None, [1, 0]).v_available_for_controls


def test_take_and_concat(setting3_data):
    a, b = setting3_data.take(np.arange(10)), setting3_data.take(np.arange(10, 20))
    both = concat([a, b])
    np.testing.assert_array_equal(both.x, setting3_data.x[:20])


def test_validate_flags_missing_control_survivors():
    ds = Dataset([1, 1, 0, 1], [1, 0, 0, 1], [1.0, np.nan, np.nan, 2.0], None, [1, 0, 0, 0])
    rep = validate(ds)
    assert any("mu_0 inestimable" in f for f in rep.flags)
    assert rep.counts_zs["0,1"] == 0
    assert not rep.admissible["survivor_case"] and not rep.admissible["proposed"]


def test_validate_flags_missing_treated_v(setting3_data):
    rep = validate(setting3_data.without_v())
    assert not rep.admissible["proposed"] and not rep.admissible["rho_adjusted"] and not rep.admissible["wzr"]
    assert rep.admissible["survivor_case"]


def test_validate_well_populated(setting3_binary):
    rep = validate(setting3_binary)
    assert all(rep.admissible.values()), rep.flags
    assert sum(rep.counts_zs.values()) == setting3_binary.n
    assert sum(rep.counts_vzs.values()) == setting3_binary.n
    assert set(rep.to_dict()) >= {"counts_zs", "counts_vzs", "covariate_summary", "admissible", "flags"}


def test_wzr_inadmissible_without_control_v(setting3_data):
    rep = validate(setting3_data.without_v(0))
    assert rep.admissible["proposed"] and not rep.admissible["wzr"]
