"""Cohort assembly: labels, joins, aggregation, strata, pooling."""

import pytest

from conftest import (
    graded_corpus,
    manifest_record,
    prediction,
    rows_to_records,
    screening_cohort,
    write_manifest_csv,
    write_predictions_csv,
)
from fpe.cohort import (
    EvalSubset,
    LesionFindings,
    LesionRule,
    ManifestRecord,
    PatientRecord,
    aggregate_patients,
    evaluation_set,
    grade_to_binary,
    lesion_to_binary,
    load_manifest,
    load_predictions,
    patients_to_subset,
    pool_datasets,
    stratify_by_grade,
    stratify_by_quality,
)
from fpe.errors import (
    ContractError,
    DegenerateLabelsError,
    ManifestError,
    ReconciliationError,
)
from fpe.stats import auc, sens_spec_argmax


def test_grade_to_binary_mapping():
    assert [grade_to_binary(g) for g in range(5)] == [0, 0, 1, 1, 1]
    with pytest.raises(ContractError):
        grade_to_binary(5)
    with pytest.raises(ContractError):
        grade_to_binary(-1)


def test_lesion_rule_default_threshold():
    quiet = LesionFindings(microaneurysm_count=3)
    assert lesion_to_binary(quiet) == 0
    assert lesion_to_binary(LesionFindings(microaneurysm_count=5)) == 0
    assert lesion_to_binary(LesionFindings(microaneurysm_count=6)) == 1


def test_lesion_rule_any_other_finding_is_positive():
    assert lesion_to_binary(LesionFindings(hemorrhage_count=1)) == 1
    assert lesion_to_binary(LesionFindings(exudates_present=True)) == 1
    assert lesion_to_binary(LesionFindings(neovascularization_present=True)) == 1
    assert lesion_to_binary(LesionFindings()) == 0


def test_lesion_rule_custom_threshold():
    eager = LesionRule(microaneurysm_threshold=0)
    assert lesion_to_binary(LesionFindings(microaneurysm_count=1), eager) == 1
    with pytest.raises(ContractError):
        LesionRule(microaneurysm_threshold=-1)
    with pytest.raises(ContractError):
        LesionFindings(microaneurysm_count=-2)


def test_manifest_record_label_precedence():
    assert manifest_record("a", referable=1, dr_grade=3).label == 1
    assert manifest_record("b", dr_grade=1).label == 0
    assert manifest_record("c", dr_grade=4).label == 1
    assert manifest_record("d").label is None


def test_manifest_record_conflict_rejected():
    with pytest.raises(ContractError):
        manifest_record("x", dr_grade=0, referable=1)
    with pytest.raises(ContractError):
        manifest_record("x", dr_grade=4, referable=0)


def test_manifest_record_field_validation():
    with pytest.raises(ContractError):
        manifest_record("x", split="holdout")
    with pytest.raises(ContractError):
        manifest_record("x", laterality="both")
    with pytest.raises(ContractError):
        manifest_record("x", dr_grade=9)
    with pytest.raises(ContractError):
        manifest_record("", )


def test_load_manifest_round_trip(tmp_path):
    rows, _ = screening_cohort()
    path = tmp_path / "m.csv"
    write_manifest_csv(path, rows)
    records = load_manifest(path)
    assert len(records) == 400
    assert records[0].image_id == "q000_i0"
    assert records[0].patient_id == "q000"
    assert records[0].referable == 1
    assert records[0].dr_grade is None


def test_load_manifest_missing_column(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("image_id,path\nx,y\n")
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_load_manifest_missing_file(tmp_path):
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "absent.csv")


def test_load_manifest_duplicate_id(tmp_path):
    rows = [dict(image_id="dup", path="a.png", dataset="d", split="test"),
            dict(image_id="dup", path="b.png", dataset="d", split="test")]
    path = tmp_path / "m.csv"
    write_manifest_csv(path, rows)
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_load_manifest_bad_integer(tmp_path):
    rows = [dict(image_id="x", path="a.png", dataset="d", split="test",
                 dr_grade="two")]
    path = tmp_path / "m.csv"
    write_manifest_csv(path, rows)
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_load_manifest_collects_all_conflicts(tmp_path):
    rows = [
        dict(image_id="ok", path="a.png", dataset="d", split="test",
             dr_grade="3", referable="1"),
        dict(image_id="bad1", path="b.png", dataset="d", split="test",
             dr_grade="0", referable="1"),
        dict(image_id="bad2", path="c.png", dataset="d", split="test",
             dr_grade="4", referable="0"),
    ]
    path = tmp_path / "m.csv"
    write_manifest_csv(path, rows)
    with pytest.raises(ReconciliationError) as excinfo:
        load_manifest(path)
    assert excinfo.value.ids == ("bad1", "bad2")


def test_load_predictions_round_trip(tmp_path):
    _, preds = screening_cohort()
    path = tmp_path / "p.csv"
    write_predictions_csv(path, preds)
    records = load_predictions(path)
    assert len(records) == 400
    assert records[0].image_id == "q000_i0"
    assert records[0].prob_ref == pytest.approx(0.80)


def test_load_predictions_rejects_bad_sum(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("image_id,prob_nonref,prob_ref\nx,0.5,0.6\n")
    with pytest.raises(ManifestError):
        load_predictions(path)


def test_load_predictions_rejects_duplicates(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("image_id,prob_nonref,prob_ref\nx,0.5,0.5\nx,0.4,0.6\n")
    with pytest.raises(ManifestError):
        load_predictions(path)


def test_evaluation_set_joins_labeled_only():
    manifest = [manifest_record("a", referable=1),
                manifest_record("b", referable=0),
                manifest_record("c")]  # unlabeled, needs no prediction
    preds = [prediction("a", 0.9), prediction("b", 0.2)]
    subset = evaluation_set(manifest, preds)
    assert subset.image_ids == ("a", "b")
    assert subset.scores == (0.9, 0.2)
    assert subset.labels == (1, 0)
    assert subset.n_pos == 1 and subset.n_neg == 1


def test_evaluation_set_missing_prediction():
    manifest = [manifest_record("a", referable=1)]
    with pytest.raises(ReconciliationError) as excinfo:
        evaluation_set(manifest, [])
    assert excinfo.value.ids == ("a",)


def test_aggregate_matches_enumeration_oracle():
    manifest_rows, prediction_rows = screening_cohort()
    manifest, preds = rows_to_records(manifest_rows, prediction_rows)

    # oracle: independent dict-based enumeration over the rows
    probs, labels = {}, {}
    for (image_id, _, p), row in zip(prediction_rows, manifest_rows):
        pid = row["patient_id"]
        probs[pid] = max(probs.get(pid, 0.0), p)
        labels[pid] = max(labels.get(pid, 0), int(row["referable"]))

    patients = aggregate_patients(manifest, preds)
    assert [p.patient_id for p in patients] == sorted(probs)
    for p in patients:
        assert p.prob_ref == probs[p.patient_id]
        assert p.referable == labels[p.patient_id]


def test_aggregation_trades_specificity_for_sensitivity():
    manifest_rows, prediction_rows = screening_cohort()
    manifest, preds = rows_to_records(manifest_rows, prediction_rows)

    image = evaluation_set(manifest, preds)
    image_records = [prediction(i, s) for i, s in zip(image.image_ids, image.scores)]
    img_se, img_sp = sens_spec_argmax(image_records, list(image.labels))
    assert img_se.value == pytest.approx(88 / 100)
    assert img_sp.value == pytest.approx(276 / 300)

    patients = aggregate_patients(manifest, preds)
    pat_records = [prediction(p.patient_id, p.prob_ref) for p in patients]
    pat_se, pat_sp = sens_spec_argmax(pat_records, [p.referable for p in patients])
    assert pat_se.value == pytest.approx(49 / 50)
    assert pat_sp.value == pytest.approx(40 / 50)
    assert pat_se.value > img_se.value
    assert pat_sp.value < img_sp.value


def test_aggregate_single_image_patients_is_identity():
    manifest = [manifest_record(f"s{i}", patient_id=f"pt{i}", referable=i % 2)
                for i in range(6)]
    preds = [prediction(f"s{i}", 0.1 * i) for i in range(6)]
    patients = aggregate_patients(manifest, preds)
    assert len(patients) == 6
    for i, p in enumerate(sorted(patients, key=lambda p: p.patient_id)):
        assert p.image_ids == (f"s{i}",)
        assert p.prob_ref == pytest.approx(0.1 * i)
        assert p.referable == i % 2


def test_aggregate_requires_patient_ids():
    manifest = [manifest_record("a", referable=1)]
    with pytest.raises(ReconciliationError):
        aggregate_patients(manifest, [prediction("a", 0.5)])


def test_aggregate_requires_predictions_for_members():
    manifest = [manifest_record("a", patient_id="p1", referable=1),
                manifest_record("b", patient_id="p1", referable=0)]
    with pytest.raises(ReconciliationError) as excinfo:
        aggregate_patients(manifest, [prediction("a", 0.5)])
    assert "b" in excinfo.value.ids


def test_patients_to_subset_alignment():
    patients = [PatientRecord(patient_id="p2", image_ids=("x",),
                              prob_ref=0.3, referable=0),
                PatientRecord(patient_id="p1", image_ids=("y", "z"),
                              prob_ref=0.8, referable=1)]
    subset = patients_to_subset(patients)
    assert len(subset.image_ids) == 2
    assert set(zip(subset.scores, subset.labels)) == {(0.3, 0), (0.8, 1)}


def test_stratify_by_grade_matches_manual_filter():
    manifest_rows, prediction_rows = graded_corpus()
    manifest, preds = rows_to_records(manifest_rows, prediction_rows)
    pred_by_id = {p.image_id: p for p in preds}

    for grade in (2, 3, 4):
        subset = stratify_by_grade(manifest, preds, grade)
        manual = [r for r in manifest if r.dr_grade in (0, 1, grade)]
        assert sorted(subset.image_ids) == sorted(r.image_id for r in manual)
        for image_id, score, label in zip(subset.image_ids, subset.scores,
                                          subset.labels):
            record = next(r for r in manifest if r.image_id == image_id)
            assert score == pred_by_id[image_id].prob_ref
            assert label == (1 if record.dr_grade == grade else 0)
        assert subset.n_neg == 60
        assert subset.n_pos == 30


def test_stratify_by_grade_aucs_differ():
    manifest_rows, prediction_rows = graded_corpus()
    manifest, preds = rows_to_records(manifest_rows, prediction_rows)
    values = []
    for grade in (2, 3, 4):
        subset = stratify_by_grade(manifest, preds, grade)
        values.append(auc(list(subset.scores), list(subset.labels)))
    # scores rise with grade, so discrimination improves with severity
    assert values[0] < values[2]


def test_stratify_by_grade_rejects_bad_grade():
    manifest, preds = rows_to_records(*graded_corpus())
    with pytest.raises(ContractError):
        stratify_by_grade(manifest, preds, 1)


def test_stratify_by_grade_requires_grades():
    manifest = [manifest_record("a", referable=1),
                manifest_record("b", dr_grade=0)]
    preds = [prediction("a", 0.9), prediction("b", 0.1)]
    with pytest.raises(ReconciliationError):
        stratify_by_grade(manifest, preds, 2)


def test_stratify_by_grade_empty_positive_stratum():
    manifest = [manifest_record("a", dr_grade=0),
                manifest_record("b", dr_grade=1),
                manifest_record("c", dr_grade=3)]
    preds = [prediction(r.image_id, 0.5) for r in manifest]
    with pytest.raises(DegenerateLabelsError):
        stratify_by_grade(manifest, preds, 2)


def test_stratify_by_quality_counts_and_subsets():
    manifest_rows, prediction_rows = graded_corpus()
    manifest, preds = rows_to_records(manifest_rows, prediction_rows)
    strata = stratify_by_quality(manifest, preds, "triage")
    assert strata.scheme == "triage"
    assert set(strata.subsets) == {"good", "usable", "reject"}
    # every fifth record carries no quality label
    assert strata.unlabeled == 150 // 5
    total = sum(len(s.image_ids) for s in strata.subsets.values())
    assert total + strata.unlabeled == 150

    # manual filter oracle for one stratum
    manual = [r.image_id for r in manifest
              if r.quality_scheme == "triage" and r.quality == "good"
              and r.label is not None]
    assert sorted(strata.subsets["good"].image_ids) == sorted(manual)


def test_stratify_by_quality_unknown_scheme():
    manifest, preds = rows_to_records(*graded_corpus())
    with pytest.raises(ContractError):
        stratify_by_quality(manifest, preds, "nonexistent")


def test_pool_datasets_prefixes_and_counts():
    m1 = [manifest_record("a", dataset="alpha", referable=1),
          manifest_record("b", dataset="alpha", referable=0)]
    p1 = [prediction("a", 0.8), prediction("b", 0.3)]
    m2 = [manifest_record("a", dataset="beta", referable=0)]
    p2 = [prediction("a", 0.4)]
    manifest, preds = pool_datasets([(m1, p1), (m2, p2)])
    assert [r.image_id for r in manifest] == ["alpha/a", "alpha/b", "beta/a"]
    assert [p.image_id for p in preds] == ["alpha/a", "alpha/b", "beta/a"]
    assert len(manifest) == len(m1) + len(m2)
    subset = evaluation_set(manifest, preds)
    assert subset.n_pos == 1 and subset.n_neg == 2


def test_pool_self_under_two_names_keeps_auc():
    manifest_rows, prediction_rows = graded_corpus()
    manifest, preds = rows_to_records(manifest_rows, prediction_rows)
    single = evaluation_set(manifest, preds)
    base = auc(list(single.scores), list(single.labels))

    renamed = [ManifestRecord(
        image_id=r.image_id, path=r.path, dataset="copy", split=r.split,
        patient_id=r.patient_id, laterality=r.laterality, dr_grade=r.dr_grade,
        referable=r.referable, quality=r.quality, quality_scheme=r.quality_scheme,
    ) for r in manifest]
    pooled_manifest, pooled_preds = pool_datasets(
        [(manifest, preds), (renamed, preds)])
    pooled = evaluation_set(pooled_manifest, pooled_preds)
    assert len(pooled.image_ids) == 2 * len(single.image_ids)
    assert auc(list(pooled.scores), list(pooled.labels)) == pytest.approx(base, abs=1e-12)


def test_pool_rejects_orphan_predictions():
    m = [manifest_record("a", dataset="d", referable=1)]
    p = [prediction("a", 0.8), prediction("ghost", 0.2)]
    with pytest.raises(ReconciliationError) as excinfo:
        pool_datasets([(m, p)])
    assert excinfo.value.ids == ("ghost",)


def test_pool_rejects_colliding_qualified_ids():
    m = [manifest_record("a", dataset="same", referable=1)]
    p = [prediction("a", 0.8)]
    with pytest.raises(ContractError):
        pool_datasets([(m, p), (m, p)])


def test_eval_subset_validation():
    with pytest.raises(ContractError):
        EvalSubset(image_ids=("a",), scores=(0.5, 0.6), labels=(1,))
