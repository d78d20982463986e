from __future__ import annotations

import pytest

from geogap.corpus import (Dataset, DatasetError, Requirement, Taxonomy,
                           load_dataset, loo_splits, project_partition,
                           save_dataset)


def _write_csv(path, rows, header="id,text,project_id,type_label"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")


def test_load_csv_three_valid_rows(tmp_path):
    f = tmp_path / "d.csv"
    _write_csv(f, ["r1,The system shall log in.,p1,Security",
                   "r2,The UI shall be blue.,p2,Usability",
                   "r3,Uptime must exceed 99%.,p1,Availability"])
    d = load_dataset(f)
    assert len(d) == 3
    assert d.projects == ("p1", "p2")
    assert d.taxonomy.k_t == 3
    assert d.requirements[0].type_label == "Security"


def test_load_jsonl(tmp_path):
    f = tmp_path / "d.jsonl"
    f.write_text(
        '{"id": "a", "text": "x must y", "project_id": "p1", "type_label": null}\n'
        '{"id": "b", "text": "y must z", "project_id": "p2", "type_label": null}\n',
        encoding="utf-8")
    d = load_dataset(f)
    assert len(d) == 2
    assert d.taxonomy is None


def test_empty_text_row_errors_with_row_number(tmp_path):
    f = tmp_path / "d.csv"
    _write_csv(f, ["r1,ok text,p1,", "r2,,p1,"])
    with pytest.raises(DatasetError, match="row 3"):
        load_dataset(f)


def test_unknown_label_lists_valid_labels(tmp_path):
    f = tmp_path / "d.csv"
    _write_csv(f, ["r1,some text,p1,Bogus"])
    tax = Taxonomy(("Security", "Usability"))
    with pytest.raises(DatasetError, match="Security, Usability"):
        load_dataset(f, taxonomy=tax)


def test_alias_table_maps_codes(tmp_path):
    f = tmp_path / "d.csv"
    _write_csv(f, ["r1,text one,p1,O", "r2,text two,p1,SE"])
    tax = Taxonomy(("Operability", "Security"))
    d = load_dataset(f, taxonomy=tax,
                     aliases={"O": "Operability", "SE": "Security"})
    assert [r.type_label for r in d.requirements] == ["Operability", "Security"]


def test_missing_id_synthesised_from_row_index(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("text,project_id,type_label\nalpha beta,p1,\ngamma,p1,\n",
                 encoding="utf-8")
    d = load_dataset(f)
    assert [r.id for r in d.requirements] == ["0", "1"]


def test_duplicate_id_rejected(tmp_path):
    f = tmp_path / "d.csv"
    _write_csv(f, ["r1,text one,p1,", "r1,text two,p1,"])
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(f)


def test_round_trip_csv_and_jsonl(tmp_path):
    reqs = [
        Requirement("a", "first requirement", "p1", "Security"),
        Requirement("b", "second requirement", "p2", None),
        Requirement("c", "third, with comma", "p1", "Usability"),
    ]
    d = Dataset(list(reqs), Taxonomy(("Security", "Usability")))
    for fmt in ("csv", "jsonl"):
        path = tmp_path / f"rt.{fmt}"
        save_dataset(d, path)
        back = load_dataset(path, taxonomy=d.taxonomy)
        assert back.requirements == reqs


def test_partition_exhaustive_and_ordered():
    reqs = [Requirement(str(i), f"text {i}", f"p{i % 2}", None) for i in range(4)]
    d = Dataset(reqs, None)
    part = project_partition(d)
    assert sum(len(v) for v in part.values()) == 4
    assert [r.id for r in part["p0"]] == ["0", "2"]
    assert set(part) == {"p0", "p1"}


def test_partition_single_project():
    d = Dataset([Requirement("a", "text", "only", None)], None)
    assert list(project_partition(d)) == ["only"]


def test_loo_splits_cover_every_project():
    reqs = [Requirement(str(i), f"text {i}", f"p{i}", None) for i in range(3)]
    d = Dataset(reqs, None)
    splits = loo_splits(d)
    assert len(splits) == 3
    for target, training in splits:
        assert target not in training
        assert len(training) == 2
    targets = [t for t, _ in splits]
    assert sorted(targets) == ["p0", "p1", "p2"]


def test_loo_two_projects():
    reqs = [Requirement("a", "ta", "p0", None), Requirement("b", "tb", "p1", None)]
    splits = loo_splits(Dataset(reqs, None))
    assert splits == [("p0", ["p1"]), ("p1", ["p0"])]


def test_loo_single_project_errors():
    d = Dataset([Requirement("a", "text", "p0", None)], None)
    with pytest.raises(DatasetError):
        loo_splits(d)


def test_taxonomy_invariants():
    with pytest.raises(DatasetError):
        Taxonomy(("only",))
    with pytest.raises(DatasetError):
        Taxonomy(("a", "a"))
    with pytest.raises(DatasetError):
        Taxonomy(("a", "b"), parent={"zzz": "a"})
    tax = Taxonomy(("a", "b"), parent={"b": "a"})
    assert tax.index("b") == 1
