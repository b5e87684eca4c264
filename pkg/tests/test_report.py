"""Group summaries, data-movement shares, stack impact, and emission."""

import math

import pytest
from hypothesis import given, strategies as st

from wcr.cachesim import CurveKind, CurvePoint, MissRatioCurve
from wcr.errors import DataError
from wcr.ingest import IntegerBreakdown, integer_breakdown
from wcr.model import (
    BehaviorLabels,
    Category,
    DataSizeClass,
    SystemBehavior,
)
from wcr.report import (
    GroupSummary,
    Grouping,
    InstructionMix,
    ReportBundle,
    StackMetricRecord,
    WorkloadRecord,
    data_movement_share,
    emit,
    group_summary,
    stack_impact_table,
)


def _labels(category=Category.DATA_ANALYSIS, system=SystemBehavior.HYBRID):
    return BehaviorLabels(
        system=system, data_out=DataSizeClass.EQUAL,
        data_intermediate=DataSizeClass.NONE, category=category,
    )


def _record(workload, branch_ratio, category, **kwargs):
    return WorkloadRecord(
        workload_id=workload,
        metrics={"branch_ratio": branch_ratio},
        labels=_labels(category=category),
        **kwargs,
    )


class TestGroupSummary:
    def test_per_category_means(self):
        records = [
            _record("svc", 0.18, Category.SERVICE),
            _record("da", 0.19, Category.DATA_ANALYSIS),
            _record("ia", 0.19, Category.INTERACTIVE_ANALYSIS),
        ]
        summary = group_summary(records, Grouping.APPLICATION_CATEGORY, ["branch_ratio"])
        assert summary.rows["service"].means["branch_ratio"] == 0.18
        assert summary.rows["data_analysis"].means["branch_ratio"] == 0.19
        assert summary.rows["interactive_analysis"].means["branch_ratio"] == 0.19
        assert summary.total_workloads == 3
        assert sum(r.count for r in summary.rows.values()) == 3

    def test_single_group_takes_global_mean(self):
        records = [
            _record(f"w{i}", v, Category.SERVICE) for i, v in enumerate([0.1, 0.2, 0.3])
        ]
        summary = group_summary(records, Grouping.APPLICATION_CATEGORY, ["branch_ratio"])
        assert summary.rows["service"].means["branch_ratio"] == pytest.approx(0.2)

    def test_identical_values_mean_is_that_value(self):
        records = [_record(f"w{i}", 0.25, Category.SERVICE) for i in range(4)]
        summary = group_summary(records, Grouping.APPLICATION_CATEGORY, ["branch_ratio"])
        assert summary.rows["service"].means["branch_ratio"] == 0.25

    def test_empty_groups_are_omitted_and_noted(self):
        records = [_record("w", 0.1, Category.SERVICE)]
        summary = group_summary(records, Grouping.APPLICATION_CATEGORY, ["branch_ratio"])
        assert set(summary.rows) == {"service"}
        assert set(summary.omitted_groups) == {"data_analysis", "interactive_analysis"}

    def test_means_permutation_invariant(self):
        records = [
            _record(f"w{i}", v, Category.SERVICE)
            for i, v in enumerate([0.1, 0.7, 0.2, 0.4])
        ]
        forward = group_summary(records, Grouping.APPLICATION_CATEGORY, ["branch_ratio"])
        backward = group_summary(records[::-1], Grouping.APPLICATION_CATEGORY, ["branch_ratio"])
        assert forward.rows == backward.rows

    def test_unlabeled_workload_rejected(self):
        record = WorkloadRecord("w", {"m": 1.0})
        with pytest.raises(DataError, match="not labeled"):
            group_summary([record], Grouping.SYSTEM_BEHAVIOR, ["m"])

    def test_stack_grouping_requires_stack(self):
        record = WorkloadRecord("w", {"m": 1.0}, labels=_labels())
        with pytest.raises(DataError, match="stack"):
            group_summary([record], Grouping.STACK, ["m"])

    def test_missing_metric_rejected(self):
        records = [_record("w", 0.1, Category.SERVICE)]
        with pytest.raises(DataError, match="no metric"):
            group_summary(records, Grouping.APPLICATION_CATEGORY, ["nope"])


class TestDataMovementShare:
    def test_reference_arithmetic(self):
        mix = InstructionMix(branch=0.19, integer=0.38, fp=0.0, load=0.30, store=0.12)
        breakdown = integer_breakdown(64, 18, 18)
        share = data_movement_share(mix, breakdown)
        # load + store + integer * (0.64 + 0.18) = 0.42 + 0.38 * 0.82
        assert share.without_branch == pytest.approx(0.7316, abs=1e-12)
        assert share.with_branch == pytest.approx(0.9216, abs=1e-12)

    def test_all_zero_mix(self):
        mix = InstructionMix(0, 0, 0, 0, 0)
        share = data_movement_share(mix, IntegerBreakdown(0.64, 0.18, 0.18))
        assert share.without_branch == 0.0
        assert share.with_branch == 0.0

    def test_no_address_share_leaves_loads_and_stores(self):
        mix = InstructionMix(branch=0.1, integer=0.4, fp=0.0, load=0.3, store=0.1)
        share = data_movement_share(mix, IntegerBreakdown(0.0, 0.0, 1.0))
        assert share.without_branch == pytest.approx(0.4)

    @given(
        st.tuples(*[st.floats(0, 0.2) for _ in range(5)]),
        st.tuples(st.floats(0, 1), st.floats(0, 1)),
    )
    def test_bounded_and_ordered(self, mix_parts, addr_parts):
        if addr_parts[0] + addr_parts[1] > 1:
            return
        mix = InstructionMix(*mix_parts)
        other = max(0.0, 1.0 - addr_parts[0] - addr_parts[1])
        share = data_movement_share(mix, IntegerBreakdown(addr_parts[0], addr_parts[1], other))
        assert 0.0 <= share.without_branch <= share.with_branch <= 1.0 + 1e-9

    def test_overfull_mix_rejected(self):
        with pytest.raises(DataError):
            InstructionMix(0.5, 0.5, 0.5, 0.5, 0.5)


class TestStackImpact:
    def test_near_order_of_magnitude_flagged(self):
        records = [
            StackMetricRecord("wordcount", "mpi", {"l1i_mpki": 2.0}),
            StackMetricRecord("wordcount", "hadoop", {"l1i_mpki": 7.0}),
            StackMetricRecord("wordcount", "spark", {"l1i_mpki": 17.0}),
        ]
        table = stack_impact_table(records)
        (row,) = table.rows
        assert row.max_min_ratio == pytest.approx(8.5)
        assert row.flag == "near_order_of_magnitude"

    def test_full_order_of_magnitude_flagged(self):
        records = [
            StackMetricRecord("sort", "mpi", {"l2_mpki": 0.8}),
            StackMetricRecord("sort", "spark", {"l2_mpki": 16.0}),
        ]
        (row,) = stack_impact_table(records).rows
        assert row.max_min_ratio == pytest.approx(20.0)
        assert row.flag == "order_of_magnitude"

    def test_identical_values_unflagged(self):
        records = [
            StackMetricRecord("grep", "mpi", {"ipc": 1.4}),
            StackMetricRecord("grep", "hadoop", {"ipc": 1.4}),
        ]
        (row,) = stack_impact_table(records).rows
        assert row.max_min_ratio == 1.0
        assert row.flag is None

    def test_modest_gap_unflagged(self):
        records = [
            StackMetricRecord("grep", "mpi", {"ipc": 1.0}),
            StackMetricRecord("grep", "hadoop", {"ipc": 5.0}),
        ]
        (row,) = stack_impact_table(records).rows
        assert row.flag is None

    def test_single_stack_algorithm_omitted(self):
        records = [
            StackMetricRecord("bayes", "hadoop", {"ipc": 1.0}),
            StackMetricRecord("grep", "mpi", {"ipc": 1.0}),
            StackMetricRecord("grep", "hadoop", {"ipc": 1.2}),
        ]
        table = stack_impact_table(records)
        assert {row.algorithm for row in table.rows} == {"grep"}

    def test_zero_min_gives_infinite_ratio(self):
        records = [
            StackMetricRecord("a", "x", {"m": 0.0}),
            StackMetricRecord("a", "y", {"m": 3.0}),
        ]
        (row,) = stack_impact_table(records).rows
        assert math.isinf(row.max_min_ratio)
        assert row.flag == "order_of_magnitude"


class TestEmit:
    def _bundle(self):
        records = [
            _record("svc", 0.18, Category.SERVICE),
            _record("da", 0.19, Category.DATA_ANALYSIS),
        ]
        summaries = (
            group_summary(records, Grouping.APPLICATION_CATEGORY, ["branch_ratio"]),
            group_summary(records, Grouping.SYSTEM_BEHAVIOR, ["branch_ratio"]),
        )
        curve = MissRatioCurve(
            points=(CurvePoint(16384, 0.5), CurvePoint(32768, 0.25)),
            kind=CurveKind.INSTRUCTION,
        )
        return ReportBundle(summaries=summaries, curves=(("wc", curve),))

    def test_two_groupings_two_csvs_one_bundle(self, tmp_path):
        written = emit(self._bundle(), tmp_path)
        names = sorted(p.relative_to(tmp_path).as_posix() for p in written)
        assert names == [
            "bundle.json",
            "curves/wc_instruction.csv",
            "summary_application_category.csv",
            "summary_system_behavior.csv",
        ]

    def test_empty_bundle_succeeds_with_bundle_file(self, tmp_path):
        written = emit(ReportBundle(notes=("empty input",)), tmp_path)
        assert [p.name for p in written] == ["bundle.json"]

    def test_rerun_is_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        emit(self._bundle(), out_a)
        emit(self._bundle(), out_b)
        files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes()

    def test_floats_are_fixed_at_four_decimals(self, tmp_path):
        emit(self._bundle(), tmp_path)
        text = (tmp_path / "summary_application_category.csv").read_text()
        assert "0.1800" in text and "0.1900" in text
